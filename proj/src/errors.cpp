#include "tapsb/errors.hpp"

#include <array>
#include <utility>

namespace tapsb {

namespace {

constexpr std::array<std::pair<ErrorKind, std::string_view>, 19> kNames{{
    {ErrorKind::Exception, "exception"},
    {ErrorKind::DivideByZero, "divide-by-zero"},
    {ErrorKind::Memory, "memory"},
    {ErrorKind::Walltime, "walltime"},
    {ErrorKind::DependencyFailure, "dependency-failure"},
    {ErrorKind::WorkerFailure, "worker-failure"},
    {ErrorKind::Transform, "transform-error"},
    {ErrorKind::Resolution, "resolution-error"},
    {ErrorKind::Timeout, "timeout"},
    {ErrorKind::Registration, "registration-error"},
    {ErrorKind::Lifecycle, "lifecycle-error"},
    {ErrorKind::Serialization, "serialization-error"},
    {ErrorKind::Numerical, "numerical-error"},
    {ErrorKind::Argument, "argument-error"},
    {ErrorKind::Startup, "startup-error"},
    {ErrorKind::Parse, "parse-error"},
    {ErrorKind::Io, "io-error"},
    {ErrorKind::Validation, "validation-error"},
    {ErrorKind::Usage, "usage-error"},
}};

}  // namespace

std::string_view to_string(ErrorKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  return "exception";
}

ErrorKind error_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
  }
  return ErrorKind::Exception;
}

}  // namespace tapsb
