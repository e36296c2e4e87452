#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tapsb {

enum class ErrorKind {
  Exception,
  DivideByZero,
  Memory,
  Walltime,
  DependencyFailure,
  WorkerFailure,
  Transform,
  Resolution,
  Timeout,
  Registration,
  Lifecycle,
  Serialization,
  Numerical,
  Argument,
  Startup,
  Parse,
  Io,
  Validation,
  Usage,
};

std::string_view to_string(ErrorKind kind);
ErrorKind error_kind_from_string(std::string_view name);

/// The single exception type used across the framework. Task failures carry
/// their kind through futures, the worker protocol and task records.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tapsb
