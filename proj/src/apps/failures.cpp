#include "tapsb/apps/failures.hpp"

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstring>
#include <thread>

#include <unistd.h>

#include <fmt/format.h>

#include "tapsb/errors.hpp"
#include "tapsb/registry.hpp"
#include "tapsb/rng.hpp"

namespace tapsb::failures {

using nlohmann::json;

std::string_view to_string(FailureType t) {
  switch (t) {
    case FailureType::Exception: return "exception";
    case FailureType::DivideByZero: return "divide-by-zero";
    case FailureType::Memory: return "memory";
    case FailureType::Walltime: return "walltime";
    case FailureType::Dependency: return "dependency";
    case FailureType::WorkerKill: return "worker-kill";
  }
  return "exception";
}

FailureType failure_type_from_string(std::string_view name) {
  for (auto t : {FailureType::Exception, FailureType::DivideByZero, FailureType::Memory, FailureType::Walltime,
                 FailureType::Dependency, FailureType::WorkerKill}) {
    if (to_string(t) == name) return t;
  }
  throw Error(ErrorKind::Validation,
              fmt::format("failure_type: '{}' is not exception, divide-by-zero, memory, walltime, dependency "
                          "or worker-kill",
                          name));
}

std::int64_t checked_divide(std::int64_t num, std::int64_t den) {
  if (den == 0) throw Error(ErrorKind::DivideByZero, fmt::format("integer division {} / 0", num));
  return num / den;
}

namespace {

constexpr const char* kInject = "failures.inject";

// failures.inject(type, original_function, parameter, original args...)
Value inject_task(std::span<const Value> args) {
  if (args.size() < 3) throw Error(ErrorKind::Argument, "failures.inject: expected (type, function, parameter, ...)");
  const FailureType type = failure_type_from_string(args[0].as_text());
  const std::string& original = args[1].as_text();
  switch (type) {
    case FailureType::Exception:
    case FailureType::Dependency:
      throw Error(ErrorKind::Exception, fmt::format("injected exception in {}", original));
    case FailureType::DivideByZero: {
      // The divisor is data-dependent so the operation is really evaluated.
      const std::int64_t zero = args[2].as_int();
      return Value::integer(checked_divide(static_cast<std::int64_t>(args.size()), zero));
    }
    case FailureType::Memory: {
      const auto bytes = static_cast<std::size_t>(args[2].as_int());
      std::vector<std::uint8_t> block(bytes);
      std::memset(block.data(), 0xa5, block.size());
      throw Error(ErrorKind::Memory,
                  fmt::format("injected: {} allocated {} bytes, reaching its memory bound", original, bytes));
    }
    case FailureType::Walltime: {
      const double limit = args[2].as_float();
      const auto start = std::chrono::steady_clock::now();
      const auto deadline = start + std::chrono::duration<double>(limit);
      // Cooperative deadline: the task "works" in slices and is cancelled
      // at the first check past its limit.
      for (;;) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        if (std::chrono::steady_clock::now() > deadline) {
          throw Error(ErrorKind::Walltime, fmt::format("{} exceeded its walltime of {} s", original, limit));
        }
      }
    }
    case FailureType::WorkerKill:
      if (!in_worker_process()) {
        throw Error(ErrorKind::Argument, "worker-kill injection needs a worker-pool executor");
      }
      ::kill(::getpid(), SIGKILL);
      ::pause();
      return Value{};
  }
  return Value{};
}

class FailuresApp final : public App {
 public:
  FailuresApp(std::string base, json base_params, FailureConfig cfg)
      : base_(std::move(base)), base_params_(std::move(base_params)), cfg_(cfg) {}

  json run(Engine& engine, const AppContext& ctx) override {
    if (cfg_.type == FailureType::WorkerKill && engine.executor_kind() != ExecutorKind::WorkerPool &&
        engine.executor_kind() != ExecutorKind::LatencySim) {
      throw Error(ErrorKind::Validation, "failure_type: worker-kill is only valid with a worker-pool executor");
    }
    auto app = make_app(base_, base_params_, cfg_.seed);
    Injector injector(cfg_);
    injector.install(engine);
    ctx.log(fmt::format("failures base={} type={} rate={}", base_, to_string(cfg_.type), cfg_.rate));
    json summary{{"base", base_}, {"failure_type", to_string(cfg_.type)}, {"failure_rate", cfg_.rate}};
    try {
      summary["base_summary"] = app->run(engine, ctx);
      summary["base_error"] = nullptr;
    } catch (const Error& e) {
      ctx.log(fmt::format("base app failed: {}: {}", tapsb::to_string(e.kind()), e.what()));
      summary["base_error"] = {{"kind", tapsb::to_string(e.kind())}, {"message", e.what()}};
    }
    engine.shutdown(true);
    engine.set_interceptor({});
    summary["tasks_seen"] = injector.seen();
    summary["injected"] = injector.injected();
    summary["injected_count"] = injector.injected().size();
    return summary;
  }

 private:
  std::string base_;
  json base_params_;
  FailureConfig cfg_;
};

}  // namespace

Injector::Injector(FailureConfig cfg) : cfg_(cfg) {
  if (!(cfg_.rate >= 0.0 && cfg_.rate <= 1.0)) throw Error(ErrorKind::Validation, "failure_rate: must be in [0, 1]");
}

bool Injector::decide(std::uint64_t seed, std::uint64_t index, double rate) {
  return hashed_uniform(seed, index) < rate;
}

void Injector::install(Engine& engine) {
  engine.set_interceptor([this](Engine& e, SubmitRequest& req) { intercept(e, req); });
}

void Injector::intercept(Engine& engine, SubmitRequest& req) {
  std::uint64_t index;
  {
    std::lock_guard lk(mu_);
    index = next_++;
  }
  if (!decide(cfg_.seed, index, cfg_.rate)) return;
  {
    std::lock_guard lk(mu_);
    injected_.push_back(index);
  }
  if (cfg_.type == FailureType::Dependency) {
    SubmitRequest parent;
    parent.function = kInject;
    parent.args = {Value::text(std::string(to_string(FailureType::Dependency))), Value::text(req.function),
                   Value::integer(0)};
    req.after.push_back(engine.submit_direct(std::move(parent)));
    return;
  }
  Value param;
  switch (cfg_.type) {
    case FailureType::Memory: param = Value::integer(static_cast<std::int64_t>(cfg_.memory_bytes)); break;
    case FailureType::Walltime: param = Value::real(cfg_.walltime_limit); break;
    default: param = Value::integer(0); break;
  }
  std::vector<Arg> args{Value::text(std::string(to_string(cfg_.type))), Value::text(req.function), param};
  for (auto& a : req.args) args.push_back(std::move(a));
  req.function = kInject;
  req.args = std::move(args);
}

std::vector<std::uint64_t> Injector::injected() const {
  std::lock_guard lk(mu_);
  auto v = injected_;
  std::sort(v.begin(), v.end());
  return v;
}

std::uint64_t Injector::seen() const {
  std::lock_guard lk(mu_);
  return next_;
}

void register_tasks(TaskRegistry& r) { r.add(kInject, inject_task); }

AppInfo app_info() {
  AppInfo info;
  info.name = "failures";
  info.description = "runs another app with failures injected into its tasks";
  info.params = {{"base", "string", "synthetic", "app to wrap"},
                 {"failure_type", "string", "exception", "exception | divide-by-zero | memory | walltime | "
                                                        "dependency | worker-kill"},
                 {"failure_rate", "float", 0.0, "per-task injection probability"},
                 {"memory_bytes", "int", 1 << 30, "allocation bound for memory failures"},
                 {"walltime_limit", "float", 0.1, "per-task deadline for walltime failures, seconds"},
                 {"base_params", "object", json::object(), "parameters of the base app"}};
  info.factory = [](const json& p, std::uint64_t seed) -> std::unique_ptr<App> {
    const auto base = p.at("base").get<std::string>();
    if (base == "failures") throw Error(ErrorKind::Validation, "base: cannot wrap the failures app itself");
    const AppInfo& base_info = AppRegistry::global().find(base);
    json base_params = complete_params(base_info, p.at("base_params"));
    FailureConfig cfg;
    cfg.type = failure_type_from_string(p.at("failure_type").get<std::string>());
    cfg.rate = p.at("failure_rate").get<double>();
    cfg.seed = seed;
    cfg.memory_bytes = p.at("memory_bytes").get<std::uint64_t>();
    cfg.walltime_limit = p.at("walltime_limit").get<double>();
    if (!(cfg.rate >= 0.0 && cfg.rate <= 1.0)) throw Error(ErrorKind::Validation, "failure_rate: must be in [0, 1]");
    if (cfg.walltime_limit < 0) throw Error(ErrorKind::Validation, "walltime_limit: must be >= 0");
    return std::make_unique<FailuresApp>(base, std::move(base_params), cfg);
  };
  // Injected dependency parents add records, so no closed form in general.
  info.expected_tasks = [](const json& p) -> std::optional<std::uint64_t> {
    if (p.at("failure_rate").get<double>() != 0.0 && p.at("failure_type").get<std::string>() == "dependency") {
      return std::nullopt;
    }
    const AppInfo& base_info = AppRegistry::global().find(p.at("base").get<std::string>());
    return base_info.expected_tasks ? base_info.expected_tasks(complete_params(base_info, p.at("base_params")))
                                    : std::nullopt;
  };
  return info;
}

}  // namespace tapsb::failures
