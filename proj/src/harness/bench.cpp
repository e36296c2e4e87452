#include "tapsb/harness/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <thread>

#include <fmt/format.h>

#include "tapsb/errors.hpp"
#include "tapsb/record.hpp"

namespace tapsb {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<BenchStat> BenchmarkReport::summary() const {
  std::vector<BenchStat> out;
  std::map<std::pair<std::string, std::string>, std::vector<double>> values;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.label, r.metric);
    if (values.find(key) == values.end()) out.push_back({r.label, r.metric, r.unit, 0, 0.0, 0.0});
    auto& v = values[key];
    if (!r.failed) v.push_back(r.value);
  }
  for (auto& s : out) {
    const auto& v = values[{s.label, s.metric}];
    s.n = v.size();
    if (v.empty()) {
      s.mean = s.stddev = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double sum = 0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0;
      for (double x : v) ss += (x - s.mean) * (x - s.mean);
      s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
  }
  return out;
}

double BenchmarkReport::mean(const std::string& label, const std::string& metric) const {
  for (const auto& s : summary()) {
    if (s.label == label && s.metric == metric) return s.mean;
  }
  throw Error(ErrorKind::Argument, fmt::format("no {} rows for '{}'", metric, label));
}

namespace {

std::ofstream open_csv(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write {}", path.string()));
  return out;
}

// Labels are generated internally but may carry commas from user input.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

fs::path sibling(const fs::path& path, const std::string& suffix) {
  return path.parent_path() / (path.stem().string() + suffix + path.extension().string());
}

}  // namespace

void report_write(const BenchmarkReport& report, const fs::path& path) {
  {
    auto out = open_csv(path);
    out << "label,metric,unit,rep,value\n";
    for (const auto& r : report.rows) {
      out << fmt::format("{},{},{},{},{}\n", csv_field(r.label), r.metric, r.unit, r.rep,
                         r.failed ? std::string("nan") : fmt::format("{}", r.value));
    }
    if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write {}", path.string()));
  }
  {
    auto out = open_csv(sibling(path, "_summary"));
    out << "label,metric,unit,n,mean,stddev\n";
    for (const auto& s : report.summary()) {
      out << fmt::format("{},{},{},{},{},{}\n", csv_field(s.label), s.metric, s.unit, s.n, s.mean, s.stddev);
    }
  }
  {
    auto out = open_csv(sibling(path, "_runs"));
    out << "label,rep,status,run_dir\n";
    for (const auto& r : report.rows) {
      out << fmt::format("{},{},{},{}\n", csv_field(r.label), r.rep, r.failed ? "failed" : "succeeded",
                         csv_field(r.run_dir.string()));
    }
  }
}

ExecutorSpec with_workers(ExecutorSpec spec, std::size_t workers) {
  if (spec.kind == ExecutorKind::LatencySim && spec.inner) {
    spec.inner = std::make_shared<ExecutorSpec>(with_workers(*spec.inner, workers));
  }
  spec.workers = workers;
  return spec;
}

std::string executor_label(const ExecutorSpec& spec) {
  if (spec.kind == ExecutorKind::LatencySim && spec.inner) {
    return fmt::format("latency-sim({})-w{}", to_string(spec.inner->kind), spec.inner->workers);
  }
  return fmt::format("{}-w{}", to_string(spec.kind), spec.workers);
}

BenchmarkReport bench_makespan(const std::vector<std::pair<std::string, RunConfig>>& configs, int repetitions) {
  BenchmarkReport report;
  for (const auto& [label, cfg] : configs) {
    for (int rep = 0; rep < repetitions; ++rep) {
      BenchRow row{label, "makespan", "s", rep, 0.0, true, {}};
      try {
        const RunOutcome out = run_app(cfg);
        row.run_dir = out.dir;
        row.failed = !out.ok;
        row.value = out.makespan_s;
      } catch (const Error&) {
        row.failed = true;
      }
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

BenchmarkReport bench_scaling(const ScalingOptions& opts) {
  BenchmarkReport report;
  for (const auto& base : opts.executors) {
    for (std::size_t w : opts.workers) {
      if (w < 1) throw Error(ErrorKind::Validation, "workers: must be >= 1");
      RunConfig cfg;
      cfg.app = "synthetic";
      cfg.app_params = {{"structure", "bag"}, {"task_count", opts.task_count}, {"sleep", opts.sleep}};
      cfg.executor = with_workers(base, w);
      cfg.run_dir = opts.run_dir;
      cfg.seed = opts.seed;
      const std::string label = executor_label(cfg.executor);
      for (int rep = 0; rep < opts.repetitions; ++rep) {
        BenchRow row{label, "throughput", "tasks/s", rep, 0.0, true, {}};
        try {
          const RunOutcome out = run_app(cfg);
          row.run_dir = out.dir;
          row.failed = !out.ok;
          if (out.ok) row.value = out.summary.at("throughput").get<double>();
        } catch (const Error&) {
          row.failed = true;
        }
        report.rows.push_back(std::move(row));
      }
    }
  }
  return report;
}

BenchmarkReport bench_transfer(const TransferOptions& opts) {
  BenchmarkReport report;
  const std::size_t workers =
      opts.workers > 0 ? opts.workers : std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 32);
  const std::uint64_t tasks = workers * opts.tasks_per_worker;
  // Repetitions are the outer loop so slow spells on the host spread over
  // every size instead of landing on one. Each repetition also rotates the
  // run order, because a run right after a large-payload run starts cold.
  for (int rep = 0; rep < opts.repetitions; ++rep) {
    auto transformers = opts.transformers;
    auto sizes = opts.sizes;
    if (!transformers.empty())
      std::rotate(transformers.begin(), transformers.begin() + rep % static_cast<int>(transformers.size()),
                  transformers.end());
    if (!sizes.empty())
      std::rotate(sizes.begin(), sizes.begin() + rep % static_cast<int>(sizes.size()), sizes.end());
    for (const auto& transformer : transformers) {
      for (std::uint64_t size : sizes) {
        RunConfig cfg;
        cfg.app = "synthetic";
        cfg.app_params = {{"structure", "bag"},
                          {"task_count", tasks},
                          {"input_bytes", size},
                          {"output_bytes", size}};
        cfg.executor = with_workers(opts.executor, workers);
        cfg.transformer = transformer;
        cfg.store_addr = opts.store_addr;
        cfg.filter = transformer == "none" ? FilterSpec::never() : opts.filter;
        cfg.run_dir = opts.run_dir;
        cfg.seed = opts.seed;
        const std::string label = fmt::format("{}-{}-{}B", executor_label(cfg.executor), transformer, size);
        BenchRow row{label, "round_trip", "s", rep, 0.0, true, {}};
        try {
          const RunOutcome out = run_app(cfg);
          row.run_dir = out.dir;
          row.failed = !out.ok;
          if (out.ok) row.value = transfer_round_trip(load_records(out.dir / "tasks.jsonl"), workers);
        } catch (const Error&) {
          row.failed = true;
        }
        report.rows.push_back(std::move(row));
      }
    }
  }
  return report;
}

double transfer_round_trip(std::vector<TaskRecord> records, std::size_t warmup) {
  if (records.empty()) return 0.0;
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.ordinal < b.ordinal; });
  if (records.size() > warmup) records.erase(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(warmup));
  std::vector<double> us;
  for (const auto& r : records) us.push_back(static_cast<double>(r.makespan_us));
  std::sort(us.begin(), us.end());
  const std::size_t m = us.size() / 2;
  const double median = us.size() % 2 ? us[m] : (us[m - 1] + us[m]) / 2;
  return median * 1e-6;
}

}  // namespace tapsb
