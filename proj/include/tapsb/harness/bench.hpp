#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tapsb/harness/run.hpp"

namespace tapsb {

struct BenchRow {
  std::string label;
  std::string metric;
  std::string unit;
  int rep = 0;
  double value = 0.0;
  bool failed = false;
  std::filesystem::path run_dir;
};

struct BenchStat {
  std::string label;
  std::string metric;
  std::string unit;
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1); 0 when n < 2
};

struct BenchmarkReport {
  std::vector<BenchRow> rows;

  /// Mean and sample standard deviation per (label, metric) over the
  /// non-failed rows, in first-appearance order.
  std::vector<BenchStat> summary() const;
  /// Mean of one (label, metric); throws Error(Argument) if absent.
  double mean(const std::string& label, const std::string& metric) const;
};

/// Writes `path` (label,metric,unit,rep,value), `<stem>_summary.csv`
/// (label,metric,unit,n,mean,stddev) and `<stem>_runs.csv`
/// (label,rep,status,run_dir). Throws Error(Io).
void report_write(const BenchmarkReport& report, const std::filesystem::path& path);

/// Returns `spec` with its pool size set to `workers` (the inner pool for
/// latency-sim).
ExecutorSpec with_workers(ExecutorSpec spec, std::size_t workers);

/// Short config label such as "thread-pool-w8" or "latency-sim(worker-pool)-w4".
std::string executor_label(const ExecutorSpec& spec);

/// For each config and repetition: one run, makespan in seconds.
BenchmarkReport bench_makespan(const std::vector<std::pair<std::string, RunConfig>>& configs, int repetitions);

struct ScalingOptions {
  std::vector<ExecutorSpec> executors;
  std::vector<std::size_t> workers;
  std::uint64_t task_count = 1000;
  double sleep = 0.0;
  int repetitions = 1;
  std::filesystem::path run_dir = default_run_dir();
  std::uint64_t seed = 0;
};

/// Bag of sleep tasks with `workers` kept outstanding; metric "throughput"
/// in tasks/s measured from first submission to last completion.
BenchmarkReport bench_scaling(const ScalingOptions& opts);

struct TransferOptions {
  ExecutorSpec executor;
  std::vector<std::uint64_t> sizes;
  std::vector<std::string> transformers{"none"};  // none | file | store
  /// Used when a transformer is enabled.
  FilterSpec filter = FilterSpec::always();
  std::size_t workers = 0;  // 0: min(32, hardware threads)
  std::uint64_t tasks_per_worker = 10;
  int repetitions = 1;
  std::string store_addr;
  std::filesystem::path run_dir = default_run_dir();
  std::uint64_t seed = 0;
};

/// Tasks taking b input bytes and returning b bytes; metric "round_trip"
/// is transfer_round_trip of each run. Repetitions run interleaved across
/// transformers and sizes, and each repetition rotates both orders by one.
BenchmarkReport bench_transfer(const TransferOptions& opts);

/// Median submitted-to-completed time in seconds, leaving out the first
/// `warmup` tasks by ordinal when more than that many exist.
double transfer_round_trip(std::vector<TaskRecord> records, std::size_t warmup);

}  // namespace tapsb
