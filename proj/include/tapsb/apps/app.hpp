#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tapsb/engine.hpp"

namespace tapsb {

/// Where an app writes its artifacts and free-form log lines.
struct AppContext {
  std::filesystem::path run_dir;
  std::function<void(const std::string&)> log = [](const std::string&) {};
};

/// An application composed of tasks. run() returns the app-specific part of
/// summary.json.
class App {
 public:
  virtual ~App() = default;
  virtual nlohmann::json run(Engine& engine, const AppContext& ctx) = 0;
};

/// One app parameter: its JSON type name ("int", "float", "string") and
/// default value.
struct ParamSpec {
  std::string name;
  std::string type;
  nlohmann::json default_value;
  std::string help;
};

struct AppInfo {
  std::string name;
  std::string description;
  std::vector<ParamSpec> params;
  /// Builds the app from fully-defaulted, validated params and the run seed.
  std::function<std::unique_ptr<App>(const nlohmann::json& params, std::uint64_t seed)> factory;
  /// Analytic task count for these params, when one exists.
  std::function<std::optional<std::uint64_t>(const nlohmann::json& params)> expected_tasks;
};

class AppRegistry {
 public:
  static AppRegistry& global();

  void add(AppInfo info);
  /// Throws Error(Usage) for unknown names.
  const AppInfo& find(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, AppInfo> apps_;
};

/// Fills defaults for missing keys and checks types; throws Error(Validation)
/// naming the first bad or unknown field.
nlohmann::json complete_params(const AppInfo& info, const nlohmann::json& params);

/// Shorthand for AppRegistry lookup + complete_params + factory.
std::unique_ptr<App> make_app(const std::string& name, const nlohmann::json& params, std::uint64_t seed);

}  // namespace tapsb
