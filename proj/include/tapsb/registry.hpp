#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "tapsb/errors.hpp"
#include "tapsb/value.hpp"

namespace tapsb {

using TaskFunction = std::function<Value(std::span<const Value> args)>;

/// Named task functions. Client and worker processes are the same build, so
/// the registry is identical on both sides of the worker protocol.
class TaskRegistry {
 public:
  /// Process-wide registry with every built-in and application task loaded.
  static TaskRegistry& global();

  void add(std::string name, TaskFunction fn);
  bool contains(const std::string& name) const;
  /// Throws Error(Registration) for unknown names.
  TaskFunction find(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, TaskFunction> entries_;
};

/// Runs a registered function, mapping any escaping exception to an Error.
Value invoke_task(const std::string& name, std::span<const Value> args);

/// Maps an in-flight exception (call inside a catch block) to an Error.
Error current_exception_as_error();

/// Set in worker processes; some injected failures behave differently there.
bool in_worker_process();
void mark_worker_process();

void register_builtin_tasks(TaskRegistry& r);

}  // namespace tapsb
