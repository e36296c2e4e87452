#include "tapsb/registry.hpp"

#include <atomic>
#include <chrono>
#include <new>
#include <thread>

#include <fmt/format.h>

#include "tapsb/apps/cholesky.hpp"
#include "tapsb/apps/failures.hpp"
#include "tapsb/apps/mapreduce.hpp"
#include "tapsb/apps/synthetic.hpp"
#include "tapsb/wrapper.hpp"

namespace tapsb {

TaskRegistry& TaskRegistry::global() {
  static TaskRegistry* r = [] {
    auto* reg = new TaskRegistry;
    register_builtin_tasks(*reg);
    register_wrapper_task(*reg);
    cholesky::register_tasks(*reg);
    mapreduce::register_tasks(*reg);
    synthetic::register_tasks(*reg);
    failures::register_tasks(*reg);
    return reg;
  }();
  return *r;
}

void TaskRegistry::add(std::string name, TaskFunction fn) {
  std::lock_guard lk(mu_);
  if (!entries_.emplace(name, std::move(fn)).second) {
    throw Error(ErrorKind::Registration, fmt::format("task '{}' registered twice", name));
  }
}

bool TaskRegistry::contains(const std::string& name) const {
  std::lock_guard lk(mu_);
  return entries_.count(name) != 0;
}

TaskFunction TaskRegistry::find(const std::string& name) const {
  std::lock_guard lk(mu_);
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error(ErrorKind::Registration, fmt::format("unknown task function '{}'", name));
  return it->second;
}

std::vector<std::string> TaskRegistry::names() const {
  std::lock_guard lk(mu_);
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

Error current_exception_as_error() {
  try {
    throw;
  } catch (const Error& e) {
    return e;
  } catch (const std::bad_alloc& e) {
    return Error(ErrorKind::Memory, e.what());
  } catch (const std::exception& e) {
    return Error(ErrorKind::Exception, e.what());
  } catch (...) {
    return Error(ErrorKind::Exception, "unknown exception");
  }
}

Value invoke_task(const std::string& name, std::span<const Value> args) {
  auto fn = TaskRegistry::global().find(name);
  try {
    return fn(args);
  } catch (...) {
    throw current_exception_as_error();
  }
}

namespace {
std::atomic<bool> g_worker_process{false};

void expect_arity(std::span<const Value> args, std::size_t n, const char* name) {
  if (args.size() != n) {
    throw Error(ErrorKind::Argument, fmt::format("{} takes {} argument(s), got {}", name, n, args.size()));
  }
}
}  // namespace

bool in_worker_process() { return g_worker_process.load(); }
void mark_worker_process() { g_worker_process = true; }

void register_builtin_tasks(TaskRegistry& r) {
  r.add("identity", [](std::span<const Value> a) {
    expect_arity(a, 1, "identity");
    return a[0];
  });
  r.add("const_5", [](std::span<const Value> a) {
    expect_arity(a, 0, "const_5");
    return Value::integer(5);
  });
  r.add("add1", [](std::span<const Value> a) {
    expect_arity(a, 1, "add1");
    return Value::integer(a[0].as_int() + 1);
  });
  r.add("sum", [](std::span<const Value> a) {
    std::int64_t total = 0;
    for (const auto& v : a) {
      if (v.is(TypeTag::List)) {
        for (const auto& x : v.as_list()) total += x.as_int();
      } else {
        total += v.as_int();
      }
    }
    return Value::integer(total);
  });
  r.add("sleep", [](std::span<const Value> a) {
    expect_arity(a, 1, "sleep");
    std::this_thread::sleep_for(std::chrono::duration<double>(a[0].as_float()));
    return Value::none();
  });
  r.add("fail", [](std::span<const Value> a) -> Value {
    throw Error(ErrorKind::Exception, a.empty() ? "requested failure" : a[0].as_text());
  });
}

}  // namespace tapsb
