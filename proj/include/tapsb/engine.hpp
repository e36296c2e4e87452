#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tapsb/executor.hpp"
#include "tapsb/ids.hpp"
#include "tapsb/record.hpp"
#include "tapsb/transform.hpp"

namespace tapsb {

class Engine;

/// Pending until every parent has succeeded, Running once handed to the
/// executor, then terminal. A task whose parent failed goes straight from
/// Pending to Failed.
enum class TaskState { Pending, Running, Succeeded, Failed };

std::string_view to_string(TaskState s);

namespace detail {
struct TaskShared;
}

/// Client handle to a task's eventual result. Copies share state.
class TaskFuture {
 public:
  TaskFuture() = default;

  const TaskId& id() const;
  const std::string& function() const;
  TaskState state() const;
  bool done() const;

  void wait() const;

  /// Blocks until the task is terminal, or throws Error(Timeout) once
  /// `timeout` passes (the task is unaffected). Rethrows the task's Error if
  /// it failed. Transformed results are resolved before being returned.
  Value result(std::optional<std::chrono::duration<double>> timeout = std::nullopt) const;

  /// The stored failure, if the task failed.
  std::optional<Error> error() const;

  /// Runs `cb` when the task becomes terminal (immediately if it already is).
  void add_done_callback(std::function<void(const TaskFuture&)> cb) const;

  bool valid() const { return s_ != nullptr; }

 private:
  friend class Engine;
  explicit TaskFuture(std::shared_ptr<detail::TaskShared> s) : s_(std::move(s)) {}
  std::shared_ptr<detail::TaskShared> s_;
};

/// One positional task argument: an inline value, another task's future, or
/// a flat sequence mixing both (delivered to the task as a List). Futures
/// nested any deeper cannot be expressed.
class Arg {
 public:
  using Item = std::variant<Value, TaskFuture>;

  Arg(Value v) : v_(std::move(v)) {}  // NOLINT(google-explicit-constructor)
  Arg(TaskFuture f) : v_(std::move(f)) {}  // NOLINT(google-explicit-constructor)
  Arg(std::vector<Item> seq) : v_(std::move(seq)) {}  // NOLINT(google-explicit-constructor)
  Arg(const std::vector<TaskFuture>& futures);  // NOLINT(google-explicit-constructor)

  const std::variant<Value, TaskFuture, std::vector<Item>>& get() const { return v_; }
  std::variant<Value, TaskFuture, std::vector<Item>>& get() { return v_; }

 private:
  std::variant<Value, TaskFuture, std::vector<Item>> v_;
};

/// A submission as seen by an interceptor, which may rewrite it before the
/// engine processes it.
struct SubmitRequest {
  std::string function;
  std::vector<Arg> args;
  /// Ordering-only dependencies: must succeed before the task runs, are
  /// recorded as parents, but are not passed as arguments.
  std::vector<TaskFuture> after;
  std::uint64_t ordinal = 0;
};

using SubmitInterceptor = std::function<void(Engine&, SubmitRequest&)>;

/// Unified task-submission interface over an executor, an optional
/// transformer + filter, and a record sink.
///
/// submit() gives the task a fresh TaskID, swaps future arguments for the
/// executor's low-level futures (the parents), transforms inline arguments
/// that pass the filter, and hands a wrapped call to the executor. The
/// wrapper resolves transformed arguments, times the execution and may
/// transform the result. Completion logs exactly one TaskRecord.
class Engine {
 public:
  /// Throws Error(Validation) if `transformer` is null and `filter` is not
  /// `never`.
  Engine(std::unique_ptr<Executor> executor, std::shared_ptr<Transformer> transformer, FilterSpec filter,
         std::shared_ptr<RecordSink> sink);
  ~Engine();

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Throws Error(Registration) for unknown functions, Error(Lifecycle)
  /// after shutdown, Error(Argument) for futures from another engine, and
  /// Error(Transform) if an argument cannot be transformed.
  TaskFuture submit(const std::string& function, std::vector<Arg> args, std::vector<TaskFuture> after = {});

  /// Submits each tuple in order; the result aligns index-wise with `inputs`.
  std::vector<TaskFuture> map(const std::string& function, std::vector<std::vector<Arg>> inputs);

  /// Like submit() but skips the interceptor.
  TaskFuture submit_direct(SubmitRequest request);

  /// Idempotent. With `wait`, blocks until every task is terminal and its
  /// record written; without, pending work is failed. Further submissions
  /// are rejected either way.
  void shutdown(bool wait = true);

  void set_interceptor(SubmitInterceptor interceptor);

  std::size_t workers() const;
  ExecutorKind executor_kind() const;
  Executor& executor();
  const FilterSpec& filter() const { return filter_; }
  const std::shared_ptr<Transformer>& transformer() const { return transformer_; }
  RecordSink& sink() { return *sink_; }
  std::uint64_t submitted() const { return next_ordinal_.load(); }

 private:
  TaskFuture submit_request(SubmitRequest request);
  Value maybe_transform(Value v);

  std::unique_ptr<DependencyExecutor> executor_;
  std::shared_ptr<Transformer> transformer_;
  FilterSpec filter_;
  std::string filter_text_;
  std::string transformer_spec_;
  std::shared_ptr<RecordSink> sink_;
  std::string executor_name_;

  std::mutex mu_;
  std::condition_variable idle_cv_;
  std::size_t inflight_ = 0;
  bool closed_ = false;
  bool shut_down_ = false;
  std::atomic<std::uint64_t> next_ordinal_{0};

  std::mutex interceptor_mu_;
  SubmitInterceptor interceptor_;
};

/// Yields futures in completion order. Used by drivers that keep a fixed
/// number of tasks outstanding.
class CompletionQueue {
 public:
  void add(const TaskFuture& f);
  /// Blocks until some added future completes; throws Error(Argument) if
  /// nothing is outstanding.
  TaskFuture next();
  std::size_t outstanding() const;

 private:
  struct State {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<TaskFuture> done;
    std::size_t outstanding = 0;
  };
  std::shared_ptr<State> s_ = std::make_shared<State>();
};

}  // namespace tapsb
