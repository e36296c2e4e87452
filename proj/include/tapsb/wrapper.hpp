#pragma once

#include <cstdint>
#include <string>

#include "tapsb/registry.hpp"
#include "tapsb/value.hpp"

namespace tapsb {

/// Name of the registered task that wraps every engine submission.
inline constexpr const char* kTaskWrapper = "tapsb.task_wrapper";

/// First argument of a wrapped call: which function to run and how to
/// resolve/transform its data. Arguments after the first `nargs` ones are
/// ordering-only dependencies and are not passed to the function.
struct WrapperHeader {
  std::string function;
  std::string transformer_spec;  // empty: no transformer
  std::string filter_spec;
  std::int64_t nargs = 0;

  Value encode() const;
  static WrapperHeader decode(const Value& v);
};

/// What the wrapper sends back in place of the bare result.
struct WrapperEnvelope {
  Value result;  // an Identifier when `transformed`
  bool transformed = false;
  std::int64_t exec_started_at = 0;
  std::int64_t exec_ended_at = 0;
  std::int64_t resolve_args_us = 0;
  std::int64_t transform_result_us = 0;
  std::int64_t arg_bytes = 0;
  std::int64_t result_bytes = 0;

  Value encode() const;
  static WrapperEnvelope decode(const Value& v);
};

void register_wrapper_task(TaskRegistry& r);

}  // namespace tapsb
