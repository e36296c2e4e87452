#include "tapsb/harness/run.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <set>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "tapsb/apps/app.hpp"
#include "tapsb/engine.hpp"
#include "tapsb/errors.hpp"
#include "tapsb/ids.hpp"
#include "tapsb/store.hpp"

namespace tapsb {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path default_run_dir() {
  if (const char* env = std::getenv("TAPSB_RUN_DIR"); env != nullptr && *env != '\0') return env;
  return "runs";
}

namespace {

// Typed lookup that reports the JSON path on mismatch.
template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& prefix) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::Validation, fmt::format("{}{}: wrong type ({})", prefix, key, j.at(key).dump()));
  }
}

void read_count(const json& j, const char* key, std::size_t& out, const std::string& prefix) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw Error(ErrorKind::Validation, fmt::format("{}{}: expected a non-negative integer, got {}", prefix, key, v.dump()));
  }
  out = v.get<std::size_t>();
}

ExecutorSpec spec_from_json(const json& j, const std::string& prefix) {
  if (!j.is_object()) throw Error(ErrorKind::Validation, fmt::format("{}: expected an object", prefix));
  ExecutorSpec s;
  std::string kind = std::string(to_string(s.kind));
  read_field(j, "kind", kind, prefix + ".");
  try {
    s.kind = executor_kind_from_string(kind);
  } catch (const Error&) {
    throw Error(ErrorKind::Usage, fmt::format("{}.kind: unknown executor '{}'", prefix, kind));
  }
  read_count(j, "workers", s.workers, prefix + ".");
  read_field(j, "sched_latency", s.sched_latency, prefix + ".");
  read_count(j, "batch_size", s.batch_size, prefix + ".");
  read_field(j, "bandwidth", s.bandwidth, prefix + ".");
  read_field(j, "worker_path", s.worker_path, prefix + ".");
  if (j.contains("inner") && !j.at("inner").is_null()) {
    s.inner = std::make_shared<ExecutorSpec>(spec_from_json(j.at("inner"), prefix + ".inner"));
  }
  return s;
}

}  // namespace

json executor_spec_to_json(const ExecutorSpec& s) {
  json j{{"kind", to_string(s.kind)}, {"workers", s.workers}};
  if (s.kind == ExecutorKind::LatencySim) {
    j["inner"] = s.inner ? executor_spec_to_json(*s.inner) : json(nullptr);
    j["sched_latency"] = s.sched_latency;
    j["batch_size"] = s.batch_size;
    j["bandwidth"] = s.bandwidth;
  }
  if (!s.worker_path.empty()) j["worker_path"] = s.worker_path;
  return j;
}

ExecutorSpec executor_spec_from_json(const json& j) { return spec_from_json(j, "executor"); }

json run_config_to_json(const RunConfig& c) {
  json j{{"app", c.app},
         {"app_params", c.app_params},
         {"executor", executor_spec_to_json(c.executor)},
         {"transformer", c.transformer},
         {"filter", c.filter.str()},
         {"run_dir", c.run_dir.string()},
         {"seed", c.seed},
         {"repeat", c.repeat}};
  if (!c.store_addr.empty()) j["store_addr"] = c.store_addr;
  return j;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Validation, "config: expected a JSON object");
  static const std::set<std::string> known{"app",    "app_params", "executor", "transformer", "store_addr",
                                           "filter", "run_dir",    "seed",     "repeat"};
  for (const auto& [key, _] : j.items()) {
    if (known.count(key) == 0) throw Error(ErrorKind::Validation, fmt::format("{}: unknown config field", key));
  }
  RunConfig c;
  read_field(j, "app", c.app, "");
  if (j.contains("app_params")) {
    if (!j.at("app_params").is_object()) throw Error(ErrorKind::Validation, "app_params: expected an object");
    c.app_params = j.at("app_params");
  }
  if (j.contains("executor")) c.executor = executor_spec_from_json(j.at("executor"));
  read_field(j, "transformer", c.transformer, "");
  read_field(j, "store_addr", c.store_addr, "");
  if (j.contains("filter")) {
    std::string f;
    read_field(j, "filter", f, "");
    c.filter = FilterSpec::parse(f);
  }
  std::string dir = c.run_dir.string();
  read_field(j, "run_dir", dir, "");
  c.run_dir = dir;
  if (j.contains("seed") && !j.at("seed").is_number_unsigned() &&
      !(j.at("seed").is_number_integer() && j.at("seed").get<std::int64_t>() >= 0)) {
    throw Error(ErrorKind::Validation, fmt::format("seed: expected a non-negative integer, got {}", j.at("seed").dump()));
  }
  read_field(j, "seed", c.seed, "");
  std::size_t repeat = c.repeat;
  read_count(j, "repeat", repeat, "");
  c.repeat = repeat;
  return c;
}

void save_run_config(const RunConfig& c, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  out << run_config_to_json(c).dump(2) << '\n';
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write {}", path.string()));
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot read config {}", path.string()));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, fmt::format("{}: {}", path.string(), e.what()));
  }
  return run_config_from_json(j);
}

RunConfig validate_run_config(const RunConfig& c) {
  RunConfig out = c;
  const AppInfo& info = AppRegistry::global().find(c.app);
  out.app_params = complete_params(info, c.app_params);
  info.factory(out.app_params, c.seed);  // runs the app's own checks
  c.executor.validate();
  if (c.app == "failures" && out.app_params.at("failure_type") == "worker-kill") {
    const bool pool = c.executor.kind == ExecutorKind::WorkerPool ||
                      (c.executor.kind == ExecutorKind::LatencySim && c.executor.inner &&
                       c.executor.inner->kind == ExecutorKind::WorkerPool);
    if (!pool) throw Error(ErrorKind::Validation, "failure_type: worker-kill is only valid with a worker-pool executor");
  }
  if (c.transformer != "none" && c.transformer != "file" && c.transformer != "store") {
    throw Error(ErrorKind::Usage, fmt::format("transformer: '{}' is not none, file or store", c.transformer));
  }
  if (c.transformer == "none" && c.filter.kind != FilterKind::Never) {
    throw Error(ErrorKind::Validation, "filter: must be 'never' when transformer is none");
  }
  if (c.transformer == "store" && !c.store_addr.empty()) split_address(c.store_addr);
  if (c.repeat < 1) throw Error(ErrorKind::Validation, "repeat: must be >= 1");
  return out;
}

fs::path fresh_run_directory(const fs::path& parent) {
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw Error(ErrorKind::Io, fmt::format("cannot create {}: {}", parent.string(), ec.message()));
  const std::time_t now = std::time(nullptr);
  for (;;) {
    const Key128 k = random_key();
    const std::string suffix = to_hex(k).substr(0, 8);
    const fs::path dir = parent / fmt::format("{:%Y%m%d-%H%M%S}-{}", fmt::localtime(now), suffix);
    // create_directory reports false when the directory already exists.
    if (fs::create_directory(dir, ec)) return dir;
    if (ec) throw Error(ErrorKind::Io, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  }
}

RunOutcome run_app(const RunConfig& config) {
  const RunConfig cfg = validate_run_config(config);
  const AppInfo& info = AppRegistry::global().find(cfg.app);

  RunOutcome outcome;
  outcome.dir = fresh_run_directory(cfg.run_dir);
  fs::create_directories(outcome.dir / "data");
  save_run_config(cfg, outcome.dir / "config.json");

  std::mutex log_mu;
  std::ofstream log_file(outcome.dir / "app.log");
  AppContext ctx;
  ctx.run_dir = outcome.dir;
  ctx.log = [&](const std::string& line) {
    std::lock_guard lk(log_mu);
    const std::time_t now = std::time(nullptr);
    log_file << fmt::format("{:%Y-%m-%dT%H:%M:%S}Z {}\n", fmt::gmtime(now), line);
    log_file.flush();
  };

  json app_summary = json::object();
  std::unique_ptr<StoreServer> embedded;
  auto sink = std::make_shared<JsonlRecordSink>(outcome.dir / "tasks.jsonl");
  std::uint64_t submitted = 0;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    std::shared_ptr<Transformer> transformer;
    if (cfg.transformer == "file") {
      transformer = std::make_shared<FileTransformer>(outcome.dir / "data");
    } else if (cfg.transformer == "store") {
      std::string addr = cfg.store_addr;
      if (addr.empty()) {
        embedded = store_serve("127.0.0.1:0");
        addr = embedded->address();
        ctx.log(fmt::format("started embedded store at {}", addr));
      }
      transformer = std::make_shared<StoreTransformer>(addr);
    }
    ctx.log(fmt::format("app={} executor={} workers={} transformer={} filter={} seed={}", cfg.app,
                        to_string(cfg.executor.kind), cfg.executor.workers, cfg.transformer, cfg.filter.str(),
                        cfg.seed));
    Engine engine(make_executor(cfg.executor), transformer, cfg.filter, sink);
    auto app = info.factory(cfg.app_params, cfg.seed);
    try {
      app_summary = app->run(engine, ctx);
      outcome.ok = true;
    } catch (const Error& e) {
      outcome.error = fmt::format("{}: {}", to_string(e.kind()), e.what());
    } catch (const std::exception& e) {
      outcome.error = fmt::format("exception: {}", e.what());
    }
    engine.shutdown(true);
    submitted = engine.submitted();
  } catch (const Error& e) {
    outcome.ok = false;
    outcome.error = fmt::format("{}: {}", to_string(e.kind()), e.what());
  }
  outcome.makespan_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  sink->close();
  if (embedded) embedded->stop();
  if (!outcome.ok) ctx.log(fmt::format("run failed: {}", outcome.error));
  ctx.log(fmt::format("makespan {:.6f} s", outcome.makespan_s));

  json summary = app_summary;
  summary["app"] = cfg.app;
  summary["status"] = outcome.ok ? "succeeded" : "failed";
  summary["error"] = outcome.ok ? json(nullptr) : json(outcome.error);
  summary["makespan_s"] = outcome.makespan_s;
  summary["executor"] = to_string(cfg.executor.kind);
  summary["seed"] = cfg.seed;
  summary["run_dir"] = outcome.dir.string();
  summary["tasks_submitted"] = submitted;
  try {
    const auto records = load_records(outcome.dir / "tasks.jsonl");
    std::map<std::string, std::uint64_t> kinds;
    std::uint64_t failed = 0;
    for (const auto& r : records) {
      if (r.status == "failed") {
        ++failed;
        ++kinds[r.error_kind];
      }
    }
    summary["records"] = records.size();
    summary["failed_records"] = failed;
    summary["error_kinds"] = kinds;
  } catch (const Error& e) {
    summary["records_error"] = e.what();
  }
  if (info.expected_tasks) {
    if (auto n = info.expected_tasks(cfg.app_params)) summary["expected_task_count"] = *n;
  }
  std::ofstream(outcome.dir / "summary.json") << summary.dump(2) << '\n';
  outcome.summary = std::move(summary);
  return outcome;
}

DagSignature dag_signature(const std::vector<TaskRecord>& records) {
  std::vector<const TaskRecord*> order;
  for (const auto& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->ordinal < b->ordinal; });
  std::map<std::string, std::int64_t> index;
  for (std::size_t i = 0; i < order.size(); ++i) index[order[i]->task_id] = static_cast<std::int64_t>(i);
  DagSignature sig;
  for (const auto* r : order) {
    std::vector<std::int64_t> parents;
    for (const auto& p : r->parents) {
      auto it = index.find(p);
      parents.push_back(it == index.end() ? -1 : it->second);
    }
    std::sort(parents.begin(), parents.end());
    sig.emplace_back(r->function, std::move(parents));
  }
  return sig;
}

}  // namespace tapsb
