#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tapsb/executor.hpp"
#include "tapsb/record.hpp"
#include "tapsb/transform.hpp"

namespace tapsb {

/// `$TAPSB_RUN_DIR`, else "runs".
std::filesystem::path default_run_dir();

/// Everything needed to replay one benchmark invocation.
struct RunConfig {
  std::string app;
  nlohmann::json app_params = nlohmann::json::object();
  ExecutorSpec executor;
  std::string transformer = "none";  // none | file | store
  std::string store_addr;            // store only; empty starts an embedded store
  FilterSpec filter;
  std::filesystem::path run_dir = default_run_dir();
  std::uint64_t seed = 0;
  std::uint64_t repeat = 1;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

nlohmann::json executor_spec_to_json(const ExecutorSpec& s);
/// Throws Error(Validation) naming the offending field.
ExecutorSpec executor_spec_from_json(const nlohmann::json& j);

nlohmann::json run_config_to_json(const RunConfig& c);
/// Missing keys keep their defaults; throws Error(Validation) naming the
/// offending field.
RunConfig run_config_from_json(const nlohmann::json& j);

void save_run_config(const RunConfig& c, const std::filesystem::path& path);
/// Throws Error(Io) or Error(Parse).
RunConfig load_run_config(const std::filesystem::path& path);

/// Checks app name, app params, executor spec and the transformer/filter
/// pairing; returns the config with app params completed by defaults.
RunConfig validate_run_config(const RunConfig& c);

/// Creates `<parent>/<YYYYmmdd-HHMMSS>-<8 hex>`; never reuses a directory.
std::filesystem::path fresh_run_directory(const std::filesystem::path& parent);

struct RunOutcome {
  std::filesystem::path dir;
  bool ok = false;
  std::string error;       // "kind: message" when !ok
  double makespan_s = 0;   // executor construction through shutdown
  nlohmann::json summary;  // contents of summary.json
};

/// One run: validates, creates a fresh run directory holding config.json,
/// tasks.jsonl, app.log, summary.json and data/, and executes the app.
/// Config errors throw before anything is created; app failures are
/// reported in the outcome (and summary.json) instead.
RunOutcome run_app(const RunConfig& config);

/// Structure of a run independent of the random task ids: for each record in
/// submission order, its function and the sorted submission indices of its
/// parents.
using DagSignature = std::vector<std::pair<std::string, std::vector<std::int64_t>>>;
DagSignature dag_signature(const std::vector<TaskRecord>& records);

}  // namespace tapsb
