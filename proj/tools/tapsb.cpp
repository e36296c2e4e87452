// Command-line front end: single runs, the three benchmark drivers and a
// standalone store server.
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "tapsb/apps/app.hpp"
#include "tapsb/errors.hpp"
#include "tapsb/harness/bench.hpp"
#include "tapsb/harness/run.hpp"
#include "tapsb/store.hpp"

using nlohmann::json;
using namespace tapsb;

namespace {

constexpr int kExitRunFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInvalid = 3;

// One app flag: which app owns it and its JSON parameter name.
struct AppFlag {
  std::string app;
  std::string param;
  std::string type;  // int | float | string
  std::string help;
  CLI::Option* opt = nullptr;
  std::int64_t i = 0;
  double f = 0;
  std::string s;

  json value() const {
    if (type == "int") return i;
    if (type == "float") return f;
    return s;
  }
};

// Executor flags shared by `run` and the bench subcommands.
struct ExecutorFlags {
  std::string kind;
  std::size_t workers = 1;
  std::string inner = "thread-pool";
  double sched_latency = 0.01;
  std::size_t batch_size = 32;
  double bandwidth = 1e8;
  CLI::Option *kind_opt = nullptr, *workers_opt = nullptr, *inner_opt = nullptr, *latency_opt = nullptr,
              *batch_opt = nullptr, *bandwidth_opt = nullptr;

  void add(CLI::App* cmd, bool kind_required) {
    kind_opt = cmd->add_option("--executor", kind, "serial | thread-pool | worker-pool | latency-sim");
    if (kind_required) kind_opt->required();
    workers_opt = cmd->add_option("--workers", workers, "pool size (inner pool for latency-sim)");
    inner_opt = cmd->add_option("--inner-executor", inner, "latency-sim: wrapped executor kind");
    latency_opt = cmd->add_option("--sched-latency", sched_latency, "latency-sim: per-task scheduling delay and batch spacing, seconds");
    batch_opt = cmd->add_option("--batch-size", batch_size, "latency-sim: tasks per batch");
    bandwidth_opt = cmd->add_option("--bandwidth", bandwidth, "latency-sim: simulated bytes/s (0 = unlimited)");
  }

  static ExecutorKind parse_kind(const std::string& name, const char* flag) {
    try {
      return executor_kind_from_string(name);
    } catch (const Error&) {
      throw Error(ErrorKind::Usage, fmt::format("{}: unknown executor '{}'", flag, name));
    }
  }

  // Applies the given flags on top of `base`.
  ExecutorSpec apply(ExecutorSpec base) const {
    if (*kind_opt) {
      const auto k = parse_kind(kind, "--executor");
      if (k != base.kind) {
        ExecutorSpec fresh;
        fresh.kind = k;
        fresh.workers = base.workers;
        base = fresh;
      }
    }
    if (base.kind == ExecutorKind::LatencySim) {
      if (!base.inner || *inner_opt) {
        auto in = std::make_shared<ExecutorSpec>();
        in->kind = parse_kind(inner, "--inner-executor");
        in->workers = base.inner ? base.inner->workers : workers;
        base.inner = in;
      }
      if (*latency_opt) base.sched_latency = sched_latency;
      if (*batch_opt) base.batch_size = batch_size;
      if (*bandwidth_opt) base.bandwidth = bandwidth;
    }
    if (*workers_opt) base = with_workers(base, workers);
    return base;
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t at = 0;
  while (at <= s.size()) {
    const auto comma = s.find(',', at);
    const auto item = s.substr(at, comma == std::string::npos ? std::string::npos : comma - at);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    at = comma + 1;
  }
  return out;
}

template <typename T>
std::vector<T> parse_numbers(const std::string& s, const char* flag) {
  std::vector<T> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      if constexpr (std::is_floating_point_v<T>) {
        out.push_back(static_cast<T>(std::stod(item, &used)));
      } else {
        const long long v = std::stoll(item, &used);
        if (v < 0) throw std::invalid_argument("negative");
        out.push_back(static_cast<T>(v));
      }
      if (used != item.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorKind::Validation, fmt::format("{}: '{}' is not a valid number", flag, item));
    }
  }
  return out;
}

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Usage:
    case ErrorKind::Registration: return kExitUsage;
    default: return kExitInvalid;
  }
}

void print_report(const BenchmarkReport& report) {
  for (const auto& s : report.summary()) {
    fmt::print("{:<40} {:<12} mean={:.6g} {} stddev={:.3g} n={}\n", s.label, s.metric, s.mean, s.unit, s.stddev, s.n);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Task-based execution benchmarking harness"};
  cli.require_subcommand(1);

  // ------------------------------------------------------------------ run
  auto* run = cli.add_subcommand("run", "run one application");
  std::string app_name, transformer, store_addr, filter, config_path, run_dir;
  std::uint64_t seed = 0, repeat = 1;
  auto* app_opt = run->add_option("--app", app_name, "application name");
  ExecutorFlags run_exec;
  run_exec.add(run, false);
  auto* transformer_opt = run->add_option("--transformer", transformer, "none | file | store");
  auto* store_opt = run->add_option("--store-addr", store_addr, "host:port of a running store");
  auto* filter_opt = run->add_option("--filter", filter, "never | always | min-size:BYTES | type-tag:TAGS");
  run->add_option("--config", config_path, "JSON run configuration; flags override it");
  auto* run_dir_opt = run->add_option("--run-dir", run_dir, "parent directory for run directories");
  auto* seed_opt = run->add_option("--seed", seed, "RNG seed");
  auto* repeat_opt = run->add_option("--repeat", repeat, "number of repetitions");

  // One flag per scalar app parameter; object-valued ones come from --config.
  std::vector<AppFlag> app_flags;
  for (const auto& name : AppRegistry::global().names()) {
    for (const auto& p : AppRegistry::global().find(name).params) {
      if (p.type == "int" || p.type == "float" || p.type == "string") app_flags.push_back({name, p.name, p.type, p.help});
    }
  }
  for (auto& f : app_flags) {
    std::string flag = "--" + f.param;
    for (auto& c : flag)
      if (c == '_') c = '-';
    const std::string& help = f.help;
    if (f.type == "int") {
      f.opt = run->add_option(flag, f.i, help)->check(CLI::NonNegativeNumber);
    } else if (f.type == "float") {
      f.opt = run->add_option(flag, f.f, help);
    } else {
      f.opt = run->add_option(flag, f.s, help);
    }
    f.opt->group(f.app);
  }

  // ---------------------------------------------------------------- bench
  auto* bench = cli.add_subcommand("bench", "benchmark drivers");
  bench->require_subcommand(1);
  std::string out_csv = "bench.csv";
  int repetitions = 1;

  auto* makespan = bench->add_subcommand("makespan", "makespan of saved run configurations");
  std::vector<std::string> configs;
  makespan->add_option("--config", configs, "run configuration files (label = file stem)")->required();
  makespan->add_option("--repetitions", repetitions, "runs per configuration");
  makespan->add_option("--out", out_csv, "CSV report path");

  auto* scaling = bench->add_subcommand("scaling", "bag-of-tasks throughput across worker counts");
  std::string scaling_kinds = "thread-pool", scaling_workers = "1,2,4,8", inner_kind = "thread-pool";
  std::uint64_t task_count = 1000;
  double sleep = 0.0, sched_latency = 0.01, bandwidth = 1e8;
  std::size_t batch_size = 32;
  scaling->add_option("--executors", scaling_kinds, "comma-separated executor kinds");
  scaling->add_option("--workers", scaling_workers, "comma-separated worker counts");
  scaling->add_option("--task-count", task_count, "tasks per run");
  scaling->add_option("--sleep", sleep, "seconds per task");
  scaling->add_option("--inner-executor", inner_kind, "latency-sim: wrapped executor kind");
  scaling->add_option("--sched-latency", sched_latency, "latency-sim: per-task scheduling delay and batch spacing, seconds");
  scaling->add_option("--batch-size", batch_size, "latency-sim: tasks per batch");
  scaling->add_option("--bandwidth", bandwidth, "latency-sim: simulated bytes/s");
  scaling->add_option("--repetitions", repetitions, "runs per configuration");
  scaling->add_option("--run-dir", run_dir, "parent directory for run directories");
  scaling->add_option("--out", out_csv, "CSV report path");

  auto* transfer = bench->add_subcommand("transfer", "round-trip time against payload size");
  ExecutorFlags transfer_exec;
  transfer_exec.add(transfer, true);
  std::string sizes = "1000,10000,100000,1000000,10000000", transformers = "none,store", transfer_filter = "always";
  std::uint64_t tasks_per_worker = 10;
  transfer->add_option("--sizes", sizes, "comma-separated payload sizes in bytes");
  transfer->add_option("--transformers", transformers, "comma-separated: none, file, store");
  transfer->add_option("--filter", transfer_filter, "filter used with a transformer");
  transfer->add_option("--tasks-per-worker", tasks_per_worker, "tasks per worker per run");
  transfer->add_option("--store-addr", store_addr, "host:port of a running store");
  transfer->add_option("--repetitions", repetitions, "runs per configuration");
  transfer->add_option("--run-dir", run_dir, "parent directory for run directories");
  transfer->add_option("--out", out_csv, "CSV report path");

  // ---------------------------------------------------------- store-serve
  auto* serve = cli.add_subcommand("store-serve", "run the key-value store until interrupted");
  std::string bind = "127.0.0.1:0";
  serve->add_option("--bind", bind, "host:port to listen on (port 0 picks one)");

  // ----------------------------------------------------------------- apps
  auto* list = cli.add_subcommand("apps", "list applications and their parameters");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ConversionError& e) {
    fmt::print(stderr, "tapsb: {}: {}\n", to_string(ErrorKind::Validation), e.what());
    return kExitInvalid;
  } catch (const CLI::ValidationError& e) {
    fmt::print(stderr, "tapsb: {}: {}\n", to_string(ErrorKind::Validation), e.what());
    return kExitInvalid;
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*list) {
      for (const auto& name : AppRegistry::global().names()) {
        const auto& info = AppRegistry::global().find(name);
        fmt::print("{}: {}\n", name, info.description);
        for (const auto& p : info.params) {
          fmt::print("  {:<16} {:<7} default {:<12} {}\n", p.name, p.type, p.default_value.dump(), p.help);
        }
      }
      return 0;
    }

    if (*serve) {
      auto server = store_serve(bind);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      fmt::print("store listening on {}\n", server->address());
      std::fflush(stdout);
      while (g_stop == 0) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server->stop();
      return 0;
    }

    if (*run) {
      RunConfig cfg;
      if (!config_path.empty()) cfg = load_run_config(config_path);
      if (*app_opt) {
        if (app_name != cfg.app) cfg.app_params = json::object();
        cfg.app = app_name;
      }
      if (cfg.app.empty()) throw Error(ErrorKind::Usage, "--app is required (directly or via --config)");
      AppRegistry::global().find(cfg.app);
      cfg.executor = run_exec.apply(cfg.executor);
      if (*transformer_opt) cfg.transformer = transformer;
      if (*store_opt) cfg.store_addr = store_addr;
      if (*filter_opt) {
        cfg.filter = FilterSpec::parse(filter);
      } else if (*transformer_opt && transformer != "none" && config_path.empty()) {
        cfg.filter = FilterSpec::always();
      }
      if (*run_dir_opt) cfg.run_dir = run_dir;
      if (*seed_opt) cfg.seed = seed;
      if (*repeat_opt) cfg.repeat = repeat;

      // App flags land in the app's params, or the base app's for failures.
      std::string base_app;
      if (cfg.app == "failures") {
        base_app = cfg.app_params.value("base", std::string("synthetic"));
        for (const auto& f : app_flags)
          if (*f.opt && f.app == "failures" && f.param == "base") base_app = f.s;
      }
      for (const auto& f : app_flags) {
        if (!*f.opt) continue;
        if (f.app == cfg.app) {
          cfg.app_params[f.param] = f.value();
        } else if (cfg.app == "failures" && f.app == base_app) {
          cfg.app_params["base_params"][f.param] = f.value();
        } else {
          throw Error(ErrorKind::Validation, fmt::format("{}: not a parameter of app {}", f.opt->get_name(), cfg.app));
        }
      }

      validate_run_config(cfg);
      int failures = 0;
      for (std::uint64_t rep = 0; rep < cfg.repeat; ++rep) {
        const RunOutcome out = run_app(cfg);
        fmt::print("{} {} makespan={:.6f}s{}\n", out.ok ? "ok" : "FAILED", out.dir.string(), out.makespan_s,
                   out.ok ? "" : " error=" + out.error);
        if (!out.ok) ++failures;
      }
      return failures == 0 ? 0 : kExitRunFailed;
    }

    if (*makespan) {
      std::vector<std::pair<std::string, RunConfig>> list_cfgs;
      for (const auto& path : configs) {
        list_cfgs.emplace_back(std::filesystem::path(path).stem().string(), load_run_config(path));
        validate_run_config(list_cfgs.back().second);
      }
      const auto report = bench_makespan(list_cfgs, repetitions);
      report_write(report, out_csv);
      print_report(report);
      return 0;
    }

    if (*scaling) {
      ScalingOptions opts;
      for (const auto& k : split_list(scaling_kinds)) {
        ExecutorSpec s;
        s.kind = ExecutorFlags::parse_kind(k, "--executors");
        if (s.kind == ExecutorKind::LatencySim) {
          s.inner = std::make_shared<ExecutorSpec>();
          s.inner->kind = ExecutorFlags::parse_kind(inner_kind, "--inner-executor");
          s.sched_latency = sched_latency;
          s.batch_size = batch_size;
          s.bandwidth = bandwidth;
        }
        opts.executors.push_back(s);
      }
      opts.workers = parse_numbers<std::size_t>(scaling_workers, "--workers");
      opts.task_count = task_count;
      opts.sleep = sleep;
      opts.repetitions = repetitions;
      if (!run_dir.empty()) opts.run_dir = run_dir;
      const auto report = bench_scaling(opts);
      report_write(report, out_csv);
      print_report(report);
      return 0;
    }

    if (*transfer) {
      TransferOptions opts;
      opts.executor = transfer_exec.apply(ExecutorSpec{});
      opts.sizes = parse_numbers<std::uint64_t>(sizes, "--sizes");
      opts.transformers = split_list(transformers);
      opts.filter = FilterSpec::parse(transfer_filter);
      // Default pool: min(32, hardware threads).
      opts.workers = *transfer_exec.workers_opt ? transfer_exec.workers : 0;
      opts.tasks_per_worker = tasks_per_worker;
      opts.repetitions = repetitions;
      opts.store_addr = store_addr;
      if (!run_dir.empty()) opts.run_dir = run_dir;
      const auto report = bench_transfer(opts);
      report_write(report, out_csv);
      print_report(report);
      return 0;
    }
  } catch (const Error& e) {
    fmt::print(stderr, "tapsb: {}: {}\n", to_string(e.kind()), e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    fmt::print(stderr, "tapsb: error: {}\n", e.what());
    return kExitInvalid;
  }
  return 0;
}
