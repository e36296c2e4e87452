#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include <sys/types.h>

#include "tapsb/executor.hpp"

namespace tapsb {

/// Path of the worker binary: $TAPSB_WORKER if set, else the one built
/// alongside this library.
std::string default_worker_path();

/// Pool of separate worker processes speaking the framed protocol in
/// ipc.hpp over a socketpair each. Tasks are handed FIFO to the first idle
/// worker. A worker that dies mid-task fails that task with worker-failure
/// and is replaced before the slot takes more work.
class WorkerPoolExecutor final : public Executor {
 public:
  /// Spawns `workers` processes; throws Error(Startup) naming the first
  /// worker index that failed to come up.
  explicit WorkerPoolExecutor(std::size_t workers, std::string worker_path = {});
  ~WorkerPoolExecutor() override;

  LowLevelFuture submit(const std::string& function, std::vector<Value> args) override;

  /// Same as stop(wait ? 30 s : 0 s).
  void shutdown(bool wait) override;

  /// Drains queued and running tasks for up to `drain_timeout`, then kills
  /// whatever is still running. Every outstanding future completes.
  void stop(std::chrono::milliseconds drain_timeout);

  /// SIGKILLs worker `index`. Throws Error(Argument) for a bad index.
  void kill_worker(std::size_t index);

  /// Round-trips a PING on an idle worker. False if the worker is busy,
  /// dead, or does not answer within `timeout`.
  bool ping(std::size_t index, std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));

  std::vector<pid_t> pids() const;
  std::size_t respawn_count() const;

  ExecutorKind kind() const override { return ExecutorKind::WorkerPool; }
  std::size_t workers() const override { return workers_; }

 private:
  struct Impl;
  std::size_t workers_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tapsb
