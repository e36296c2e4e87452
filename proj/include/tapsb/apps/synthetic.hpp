#pragma once

#include <cstdint>
#include <string>

#include "tapsb/apps/app.hpp"
#include "tapsb/engine.hpp"
#include "tapsb/value.hpp"

namespace tapsb {
class TaskRegistry;
}

namespace tapsb::synthetic {

enum class Structure { Sequential, Reduce, Bag, Diamond };

std::string_view to_string(Structure s);
/// Throws Error(Validation) for unknown names.
Structure structure_from_string(std::string_view name);

/// `n` pseudo-random bytes, a pure function of (n, salt).
ByteBuffer random_bytes(std::size_t n, std::uint64_t salt = 0);

struct Config {
  Structure structure = Structure::Bag;
  std::uint64_t task_count = 10;
  std::uint64_t input_bytes = 0;
  std::uint64_t output_bytes = 0;
  double sleep = 0.0;
  std::uint64_t seed = 0;
  /// Bag only: tasks kept outstanding; 0 means the engine's worker count.
  std::uint64_t outstanding = 0;
};

/// Analytic record count for a structure.
std::uint64_t task_count(const Config& cfg);

struct Result {
  std::uint64_t tasks = 0;
  std::uint64_t failed = 0;
  double seconds = 0.0;  // first submission to last completion
};

/// Builds the DAG and waits for every task. Rethrows the first non-cascade
/// failure (or the first failure if all are cascades).
Result run_synthetic(Engine& engine, const Config& cfg);

void register_tasks(TaskRegistry& r);
AppInfo app_info();

}  // namespace tapsb::synthetic
