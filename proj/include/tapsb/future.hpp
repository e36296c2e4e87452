#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tapsb/errors.hpp"
#include "tapsb/value.hpp"

namespace tapsb {

namespace detail {

struct FutureState {
  std::mutex mu;
  std::condition_variable cv;
  bool done = false;
  std::optional<Value> value;
  std::optional<Error> error;
  std::vector<std::function<void()>> callbacks;
  std::string label;
};

}  // namespace detail

/// Completion handle owned by an executor. Completes exactly once, with a
/// value or an Error. Copies share state.
class LowLevelFuture {
 public:
  LowLevelFuture() = default;
  explicit LowLevelFuture(std::shared_ptr<detail::FutureState> s) : s_(std::move(s)) {}

  bool valid() const { return s_ != nullptr; }
  bool ready() const;
  bool failed() const;

  void wait() const;
  bool wait_for(std::chrono::microseconds timeout) const;

  /// Blocks; returns the value or rethrows the stored Error.
  const Value& get() const;
  /// Only meaningful once ready() and failed().
  const Error& error() const;

  /// Runs `cb` once the future completes. If already complete, runs it on the
  /// calling thread before returning.
  void on_complete(std::function<void()> cb) const;

  /// Free-form label carried for diagnostics (the engine stores the TaskID).
  const std::string& label() const { return s_->label; }

  bool same_as(const LowLevelFuture& other) const { return s_ == other.s_; }

 private:
  std::shared_ptr<detail::FutureState> s_;
};

class LowLevelPromise {
 public:
  explicit LowLevelPromise(std::string label = {});

  LowLevelFuture future() const { return LowLevelFuture(s_); }

  /// Return false if the promise was already fulfilled; the later outcome is
  /// dropped.
  bool set_value(Value v) const;
  bool set_error(Error e) const;

 private:
  bool complete(std::optional<Value> v, std::optional<Error> e) const;
  std::shared_ptr<detail::FutureState> s_;
};

/// Convenience: an already-failed future.
LowLevelFuture failed_future(Error e, std::string label = {});

}  // namespace tapsb
