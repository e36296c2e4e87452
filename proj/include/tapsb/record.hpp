#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace tapsb {

/// One telemetry row per task. Timestamps are wall-clock epoch microseconds;
/// durations are microseconds.
struct TaskRecord {
  std::string task_id;
  std::string function;
  std::vector<std::string> parents;
  std::int64_t submitted_at = 0;
  std::int64_t completed_at = 0;
  std::int64_t exec_started_at = 0;
  std::int64_t exec_ended_at = 0;
  std::int64_t transform_args_us = 0;
  std::int64_t resolve_args_us = 0;
  std::int64_t transform_result_us = 0;
  std::int64_t makespan_us = 0;
  std::string status;  // "succeeded" | "failed"
  std::string error_kind;
  std::string error_message;
  std::string executor;
  std::int64_t arg_bytes = 0;
  std::int64_t result_bytes = 0;
  std::int64_t ordinal = 0;  // submission order within one engine

  friend bool operator==(const TaskRecord&, const TaskRecord&) = default;
};

void to_json(nlohmann::json& j, const TaskRecord& r);
void from_json(const nlohmann::json& j, TaskRecord& r);

/// Empty when the record satisfies the timestamp ordering, makespan and
/// status invariants; otherwise a description of the first violation.
std::string check_record(const TaskRecord& r);

class RecordSink {
 public:
  virtual ~RecordSink() = default;
  /// Throws Error(Lifecycle) once closed.
  virtual void log(const TaskRecord& record) = 0;
  virtual void flush() {}
  virtual void close() = 0;
};

/// Appends one JSON object per line. Each line is written with a single
/// locked write, so concurrent loggers never interleave.
class JsonlRecordSink final : public RecordSink {
 public:
  /// Throws Error(Io) if the file cannot be opened for append.
  explicit JsonlRecordSink(std::filesystem::path path);
  ~JsonlRecordSink() override;

  void log(const TaskRecord& record) override;
  void flush() override;
  void close() override;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
  std::ofstream out_;
  bool closed_ = false;
};

/// Keeps records in memory; handy for tests and benchmarks.
class MemoryRecordSink final : public RecordSink {
 public:
  void log(const TaskRecord& record) override;
  void close() override;
  std::vector<TaskRecord> records() const;

 private:
  mutable std::mutex mu_;
  std::vector<TaskRecord> records_;
  bool closed_ = false;
};

/// Parses a JSONL record file in order. Throws Error(Parse) naming the
/// 1-based line number of the first malformed line.
std::vector<TaskRecord> load_records(const std::filesystem::path& path);

}  // namespace tapsb
