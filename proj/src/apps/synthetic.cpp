#include "tapsb/apps/synthetic.hpp"

#include <chrono>
#include <cstring>
#include <optional>
#include <thread>

#include <fmt/format.h>

#include "tapsb/errors.hpp"
#include "tapsb/ids.hpp"
#include "tapsb/registry.hpp"
#include "tapsb/rng.hpp"

namespace tapsb::synthetic {

using nlohmann::json;

std::string_view to_string(Structure s) {
  switch (s) {
    case Structure::Sequential: return "sequential";
    case Structure::Reduce: return "reduce";
    case Structure::Bag: return "bag";
    case Structure::Diamond: return "diamond";
  }
  return "bag";
}

Structure structure_from_string(std::string_view name) {
  if (name == "sequential") return Structure::Sequential;
  if (name == "reduce") return Structure::Reduce;
  if (name == "bag") return Structure::Bag;
  if (name == "diamond") return Structure::Diamond;
  throw Error(ErrorKind::Validation,
              fmt::format("structure: '{}' is not sequential, reduce, bag or diamond", name));
}

ByteBuffer random_bytes(std::size_t n, std::uint64_t salt) {
  ByteBuffer out(n);
  Xoshiro256 rng(0x5eed0000ULL ^ (n * 0x9e3779b97f4a7c15ULL) ^ salt);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const std::uint64_t w = rng.next();
    std::memcpy(out.data() + i, &w, 8);
  }
  if (i < n) {
    const std::uint64_t w = rng.next();
    std::memcpy(out.data() + i, &w, n - i);
  }
  return out;
}

std::uint64_t task_count(const Config& cfg) {
  switch (cfg.structure) {
    case Structure::Sequential:
    case Structure::Bag: return cfg.task_count;
    case Structure::Reduce: return cfg.task_count + 1;
    case Structure::Diamond: return cfg.task_count + 2;
  }
  return cfg.task_count;
}

namespace {

// sleep_noop(data, sleep_seconds, output_bytes)
Value sleep_noop(std::span<const Value> args) {
  if (args.size() != 3) throw Error(ErrorKind::Argument, "sleep_noop: expected (data, sleep, output_bytes)");
  const double secs = args[1].as_float();
  const auto out = args[2].as_int();
  if (secs < 0 || out < 0) throw Error(ErrorKind::Argument, "sleep_noop: negative sleep or size");
  if (secs > 0) std::this_thread::sleep_for(std::chrono::duration<double>(secs));
  return Value::bytes(random_bytes(static_cast<std::size_t>(out)));
}

class SyntheticApp final : public App {
 public:
  explicit SyntheticApp(Config cfg) : cfg_(cfg) {}

  json run(Engine& engine, const AppContext& ctx) override {
    ctx.log(fmt::format("synthetic structure={} task_count={} input_bytes={} output_bytes={} sleep={}",
                        to_string(cfg_.structure), cfg_.task_count, cfg_.input_bytes, cfg_.output_bytes,
                        cfg_.sleep));
    Result r = run_synthetic(engine, cfg_);
    ctx.log(fmt::format("synthetic done: {} tasks in {:.6f} s", r.tasks, r.seconds));
    return json{{"structure", to_string(cfg_.structure)},
                {"task_count", r.tasks},
                {"app_seconds", r.seconds},
                {"throughput", r.seconds > 0 ? static_cast<double>(r.tasks) / r.seconds : 0.0}};
  }

 private:
  Config cfg_;
};

}  // namespace

Result run_synthetic(Engine& engine, const Config& cfg) {
  if (cfg.task_count < 1) throw Error(ErrorKind::Validation, "task_count: must be >= 1");
  if (cfg.sleep < 0) throw Error(ErrorKind::Validation, "sleep: must be >= 0");
  const Value input = Value::bytes(random_bytes(cfg.input_bytes, cfg.seed));
  const Value sleep = Value::real(cfg.sleep);
  const Value out_bytes = Value::integer(static_cast<std::int64_t>(cfg.output_bytes));
  auto task = [&](Arg data) { return engine.submit("sleep_noop", {std::move(data), sleep, out_bytes}); };

  std::vector<TaskFuture> all;
  Result r;
  std::optional<Error> first, first_primary;
  auto settle = [&](const TaskFuture& f) {
    f.wait();
    ++r.tasks;
    if (auto e = f.error()) {
      ++r.failed;
      if (!first) first = e;
      if (!first_primary && e->kind() != ErrorKind::DependencyFailure) first_primary = e;
    }
  };
  const auto t0 = std::chrono::steady_clock::now();
  switch (cfg.structure) {
    case Structure::Sequential: {
      all.push_back(task(input));
      for (std::uint64_t i = 1; i < cfg.task_count; ++i) all.push_back(task(all.back()));
      break;
    }
    case Structure::Reduce: {
      for (std::uint64_t i = 0; i < cfg.task_count; ++i) all.push_back(task(input));
      all.push_back(task(Arg(std::vector<TaskFuture>(all))));
      break;
    }
    case Structure::Diamond: {
      TaskFuture source = task(input);
      all.push_back(source);
      std::vector<TaskFuture> middle;
      for (std::uint64_t i = 0; i < cfg.task_count; ++i) middle.push_back(task(source));
      all.insert(all.end(), middle.begin(), middle.end());
      all.push_back(task(Arg(middle)));
      break;
    }
    case Structure::Bag: {
      // Completed futures are settled and dropped so large results do not accumulate.
      const std::uint64_t window = cfg.outstanding > 0 ? cfg.outstanding : std::max<std::size_t>(1, engine.workers());
      CompletionQueue q;
      std::uint64_t submitted = 0;
      for (; submitted < std::min(window, cfg.task_count); ++submitted) q.add(task(input));
      while (q.outstanding() > 0) {
        settle(q.next());
        if (submitted < cfg.task_count) {
          q.add(task(input));
          ++submitted;
        }
      }
      break;
    }
  }
  for (auto& f : all) f.wait();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (auto& f : all) settle(f);
  if (first_primary) throw *first_primary;
  if (first) throw *first;
  return r;
}

void register_tasks(TaskRegistry& r) { r.add("sleep_noop", sleep_noop); }

AppInfo app_info() {
  AppInfo info;
  info.name = "synthetic";
  info.description = "synthetic sleep tasks in sequential, reduce, bag or diamond shape";
  info.params = {{"structure", "string", "bag", "sequential | reduce | bag | diamond"},
                 {"task_count", "int", 10, "tasks (middle width for diamond, leaves for reduce)"},
                 {"input_bytes", "int", 0, "random input bytes per task"},
                 {"output_bytes", "int", 0, "bytes returned per task"},
                 {"sleep", "float", 0.0, "seconds each task sleeps"},
                 {"outstanding", "int", 0, "bag: tasks kept in flight (0 = workers)"}};
  info.factory = [](const json& p, std::uint64_t seed) -> std::unique_ptr<App> {
    Config cfg;
    cfg.structure = structure_from_string(p.at("structure").get<std::string>());
    cfg.task_count = p.at("task_count").get<std::uint64_t>();
    cfg.input_bytes = p.at("input_bytes").get<std::uint64_t>();
    cfg.output_bytes = p.at("output_bytes").get<std::uint64_t>();
    cfg.sleep = p.at("sleep").get<double>();
    cfg.outstanding = p.at("outstanding").get<std::uint64_t>();
    cfg.seed = seed;
    if (cfg.task_count < 1) throw Error(ErrorKind::Validation, "task_count: must be >= 1");
    if (cfg.sleep < 0) throw Error(ErrorKind::Validation, "sleep: must be >= 0");
    return std::make_unique<SyntheticApp>(cfg);
  };
  info.expected_tasks = [](const json& p) -> std::optional<std::uint64_t> {
    Config cfg;
    cfg.structure = structure_from_string(p.at("structure").get<std::string>());
    cfg.task_count = p.at("task_count").get<std::uint64_t>();
    return task_count(cfg);
  };
  return info;
}

}  // namespace tapsb::synthetic
