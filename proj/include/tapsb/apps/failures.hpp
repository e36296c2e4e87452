#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tapsb/apps/app.hpp"
#include "tapsb/engine.hpp"

namespace tapsb {
class TaskRegistry;
}

namespace tapsb::failures {

enum class FailureType { Exception, DivideByZero, Memory, Walltime, Dependency, WorkerKill };

std::string_view to_string(FailureType t);
/// Throws Error(Validation) for unknown names.
FailureType failure_type_from_string(std::string_view name);

/// Integer division that reports a zero divisor as Error(DivideByZero)
/// instead of trapping.
std::int64_t checked_divide(std::int64_t num, std::int64_t den);

struct FailureConfig {
  FailureType type = FailureType::Exception;
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t memory_bytes = 1ULL << 30;  // allocation bound for `memory`
  double walltime_limit = 0.1;              // per-task deadline for `walltime`, seconds
};

/// Submission interceptor that decides, from (seed, base submission index),
/// whether each task gets a failure injected. Injection rewrites the task
/// into `failures.inject` with its original arguments kept, so parents are
/// unchanged; `dependency` instead adds a failing ordering-only parent.
class Injector {
 public:
  explicit Injector(FailureConfig cfg);

  /// Installs this injector as `engine`'s interceptor. The injector must
  /// outlive the engine's use of it.
  void install(Engine& engine);

  /// Applies the decision for one submission (exposed for tests).
  void intercept(Engine& engine, SubmitRequest& req);

  /// Base submission indices that received an injection, ascending.
  std::vector<std::uint64_t> injected() const;
  std::uint64_t seen() const;

  static bool decide(std::uint64_t seed, std::uint64_t index, double rate);

 private:
  FailureConfig cfg_;
  mutable std::mutex mu_;
  std::uint64_t next_ = 0;
  std::vector<std::uint64_t> injected_;
};

void register_tasks(TaskRegistry& r);
AppInfo app_info();

}  // namespace tapsb::failures
