#include "tapsb/record.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "tapsb/errors.hpp"

namespace tapsb {

using nlohmann::json;

void to_json(json& j, const TaskRecord& r) {
  j = json{{"task_id", r.task_id},
           {"function", r.function},
           {"parents", r.parents},
           {"submitted_at", r.submitted_at},
           {"completed_at", r.completed_at},
           {"exec_started_at", r.exec_started_at},
           {"exec_ended_at", r.exec_ended_at},
           {"transform_args_us", r.transform_args_us},
           {"resolve_args_us", r.resolve_args_us},
           {"transform_result_us", r.transform_result_us},
           {"makespan_us", r.makespan_us},
           {"status", r.status},
           {"error_kind", r.error_kind},
           {"error_message", r.error_message},
           {"executor", r.executor},
           {"arg_bytes", r.arg_bytes},
           {"result_bytes", r.result_bytes},
           {"ordinal", r.ordinal}};
}

void from_json(const json& j, TaskRecord& r) {
  j.at("task_id").get_to(r.task_id);
  j.at("function").get_to(r.function);
  j.at("parents").get_to(r.parents);
  j.at("submitted_at").get_to(r.submitted_at);
  j.at("completed_at").get_to(r.completed_at);
  j.at("exec_started_at").get_to(r.exec_started_at);
  j.at("exec_ended_at").get_to(r.exec_ended_at);
  j.at("transform_args_us").get_to(r.transform_args_us);
  j.at("resolve_args_us").get_to(r.resolve_args_us);
  j.at("transform_result_us").get_to(r.transform_result_us);
  j.at("makespan_us").get_to(r.makespan_us);
  j.at("status").get_to(r.status);
  j.at("error_kind").get_to(r.error_kind);
  j.at("executor").get_to(r.executor);
  j.at("arg_bytes").get_to(r.arg_bytes);
  j.at("result_bytes").get_to(r.result_bytes);
  // additive fields
  r.error_message = j.value("error_message", "");
  r.ordinal = j.value("ordinal", std::int64_t{0});
}

std::string check_record(const TaskRecord& r) {
  if (r.submitted_at > r.exec_started_at) return fmt::format("{}: submitted_at > exec_started_at", r.task_id);
  if (r.exec_started_at > r.exec_ended_at) return fmt::format("{}: exec_started_at > exec_ended_at", r.task_id);
  if (r.exec_ended_at > r.completed_at) return fmt::format("{}: exec_ended_at > completed_at", r.task_id);
  if (r.makespan_us != r.completed_at - r.submitted_at) return fmt::format("{}: makespan_us mismatch", r.task_id);
  if (r.status != "succeeded" && r.status != "failed") return fmt::format("{}: bad status '{}'", r.task_id, r.status);
  if (r.status == "failed" && r.error_kind.empty()) return fmt::format("{}: failed without error_kind", r.task_id);
  return {};
}

JsonlRecordSink::JsonlRecordSink(std::filesystem::path path) : path_(std::move(path)) {
  out_.open(path_, std::ios::app);
  if (!out_) throw Error(ErrorKind::Io, fmt::format("cannot open record file {}", path_.string()));
}

JsonlRecordSink::~JsonlRecordSink() { close(); }

void JsonlRecordSink::log(const TaskRecord& record) {
  std::string line = json(record).dump();
  line += '\n';
  std::lock_guard lk(mu_);
  if (closed_) throw Error(ErrorKind::Lifecycle, "log on a closed record sink");
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
}

void JsonlRecordSink::flush() {
  std::lock_guard lk(mu_);
  if (!closed_) out_.flush();
}

void JsonlRecordSink::close() {
  std::lock_guard lk(mu_);
  if (closed_) return;
  closed_ = true;
  out_.close();
}

void MemoryRecordSink::log(const TaskRecord& record) {
  std::lock_guard lk(mu_);
  if (closed_) throw Error(ErrorKind::Lifecycle, "log on a closed record sink");
  records_.push_back(record);
}

void MemoryRecordSink::close() {
  std::lock_guard lk(mu_);
  closed_ = true;
}

std::vector<TaskRecord> MemoryRecordSink::records() const {
  std::lock_guard lk(mu_);
  return records_;
}

std::vector<TaskRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open record file {}", path.string()));
  std::vector<TaskRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line).get<TaskRecord>());
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Parse, fmt::format("{}: line {}: malformed record: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

}  // namespace tapsb
