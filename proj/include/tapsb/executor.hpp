#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "tapsb/future.hpp"
#include "tapsb/value.hpp"

namespace tapsb {

enum class ExecutorKind { Serial, ThreadPool, WorkerPool, LatencySim };

std::string_view to_string(ExecutorKind kind);
ExecutorKind executor_kind_from_string(std::string_view name);

struct ExecutorSpec {
  ExecutorKind kind = ExecutorKind::Serial;
  std::size_t workers = 1;
  // latency-sim only
  std::shared_ptr<ExecutorSpec> inner;
  double sched_latency = 0.01;  // per-task scheduling delay and minimum batch spacing, seconds
  std::size_t batch_size = 32;
  double bandwidth = 1e8;  // simulated link bytes/s; 0 disables payload delay
  // worker-pool only; empty means the built-in worker binary
  std::string worker_path;

  /// Throws Error(Validation) naming the offending field.
  void validate() const;

  friend bool operator==(const ExecutorSpec& a, const ExecutorSpec& b);
};

/// Task-execution backend. Implementations only see fully resolved values;
/// implicit dataflow is layered on top by DependencyExecutor.
class Executor {
 public:
  virtual ~Executor() = default;

  virtual LowLevelFuture submit(const std::string& function, std::vector<Value> args) = 0;

  /// Idempotent. With `wait`, drains submitted work first. Anything still
  /// pending afterwards completes with a worker-failure error.
  virtual void shutdown(bool wait) = 0;

  virtual ExecutorKind kind() const = 0;
  virtual std::size_t workers() const = 0;
};

std::unique_ptr<Executor> make_executor(const ExecutorSpec& spec);

/// Runs each task inline inside submit().
class SerialExecutor final : public Executor {
 public:
  LowLevelFuture submit(const std::string& function, std::vector<Value> args) override;
  void shutdown(bool) override { closed_ = true; }
  ExecutorKind kind() const override { return ExecutorKind::Serial; }
  std::size_t workers() const override { return 1; }

 private:
  bool closed_ = false;
};

/// FIFO queue served by a fixed set of threads.
class ThreadPoolExecutor final : public Executor {
 public:
  explicit ThreadPoolExecutor(std::size_t workers);
  ~ThreadPoolExecutor() override;

  LowLevelFuture submit(const std::string& function, std::vector<Value> args) override;
  void shutdown(bool wait) override;
  ExecutorKind kind() const override { return ExecutorKind::ThreadPool; }
  std::size_t workers() const override { return workers_; }

 private:
  struct Impl;
  std::size_t workers_;
  std::unique_ptr<Impl> impl_;
};

/// Emulates a remote (cloud-relayed) executor in front of a local one. A task
/// becomes eligible `sched_latency` seconds after submission; eligible tasks
/// are released to `inner` in batches of at most `batch_size`, at most one
/// batch per `sched_latency`. Argument and result frames pay a transfer delay
/// of bytes / `bandwidth`.
class LatencySimExecutor final : public Executor {
 public:
  LatencySimExecutor(std::unique_ptr<Executor> inner, double sched_latency, std::size_t batch_size,
                     double bandwidth);
  ~LatencySimExecutor() override;

  LowLevelFuture submit(const std::string& function, std::vector<Value> args) override;
  void shutdown(bool wait) override;
  ExecutorKind kind() const override { return ExecutorKind::LatencySim; }
  std::size_t workers() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Argument accepted by DependencyExecutor: a value, a future whose value is
/// substituted when it completes, or a one-level sequence of either (which
/// becomes a List value).
using DepItem = std::variant<Value, LowLevelFuture>;
using DepArg = std::variant<Value, LowLevelFuture, std::vector<DepItem>>;

/// Adds implicit dataflow to any executor: a submission whose arguments hold
/// unfinished futures is parked until they all succeed, then dispatched to
/// the inner executor with futures replaced by their values. Parking never
/// blocks the submitting thread. If any parent fails, the task fails at once
/// with a dependency-failure error naming the parent's label.
class DependencyExecutor {
 public:
  explicit DependencyExecutor(std::unique_ptr<Executor> inner);
  ~DependencyExecutor();

  /// `on_dispatch`, if set, runs when the task is handed to the inner
  /// executor (never when it fails on a dependency).
  LowLevelFuture submit(const std::string& function, std::vector<DepArg> args,
                        std::function<void()> on_dispatch = {});

  /// Waits for parked tasks to be released (with `wait`), then shuts down
  /// the inner executor.
  void shutdown(bool wait);

  std::size_t pending() const;
  Executor& inner() { return *inner_; }
  const Executor& inner() const { return *inner_; }

 private:
  struct Parked;
  void release(const std::shared_ptr<Parked>& p);

  std::unique_ptr<Executor> inner_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::unordered_map<std::uint64_t, std::shared_ptr<Parked>> table_;
  std::uint64_t next_id_ = 0;
};

std::unique_ptr<DependencyExecutor> dependency_wrap(std::unique_ptr<Executor> inner);

}  // namespace tapsb
