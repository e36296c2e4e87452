#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tapsb/engine.hpp"
#include "tapsb/executor.hpp"
#include "tapsb/record.hpp"
#include "tapsb/transform.hpp"
#include "tapsb/worker_pool.hpp"

namespace testsupport {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "tapsb-test-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline tapsb::ExecutorSpec spec(tapsb::ExecutorKind kind, std::size_t workers = 4) {
  tapsb::ExecutorSpec s;
  s.kind = kind;
  s.workers = workers;
  if (kind == tapsb::ExecutorKind::LatencySim) {
    s.inner = std::make_shared<tapsb::ExecutorSpec>();
    s.inner->kind = tapsb::ExecutorKind::ThreadPool;
    s.inner->workers = workers;
    s.sched_latency = 0.002;
  }
  return s;
}

inline const std::vector<tapsb::ExecutorKind>& all_kinds() {
  static const std::vector<tapsb::ExecutorKind> k{tapsb::ExecutorKind::Serial, tapsb::ExecutorKind::ThreadPool,
                                                  tapsb::ExecutorKind::WorkerPool, tapsb::ExecutorKind::LatencySim};
  return k;
}

/// Engine plus its in-memory sink.
struct Harness {
  std::shared_ptr<tapsb::MemoryRecordSink> sink = std::make_shared<tapsb::MemoryRecordSink>();
  std::unique_ptr<tapsb::Engine> engine;

  explicit Harness(tapsb::ExecutorSpec s, std::shared_ptr<tapsb::Transformer> t = nullptr,
                   tapsb::FilterSpec f = tapsb::FilterSpec::never()) {
    engine = std::make_unique<tapsb::Engine>(tapsb::make_executor(s), std::move(t), f, sink);
  }
  explicit Harness(tapsb::ExecutorKind k, std::size_t workers = 4) : Harness(spec(k, workers)) {}

  std::vector<tapsb::TaskRecord> finish() {
    engine->shutdown(true);
    return sink->records();
  }
};

inline std::map<std::string, tapsb::TaskRecord> by_id(const std::vector<tapsb::TaskRecord>& rs) {
  std::map<std::string, tapsb::TaskRecord> m;
  for (const auto& r : rs) m[r.task_id] = r;
  return m;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace testsupport
