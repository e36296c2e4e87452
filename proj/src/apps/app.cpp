#include "tapsb/apps/app.hpp"

#include <fmt/format.h>

#include "tapsb/apps/cholesky.hpp"
#include "tapsb/apps/failures.hpp"
#include "tapsb/apps/mapreduce.hpp"
#include "tapsb/apps/synthetic.hpp"
#include "tapsb/errors.hpp"

namespace tapsb {

using nlohmann::json;

AppRegistry& AppRegistry::global() {
  static AppRegistry* reg = [] {
    auto* r = new AppRegistry;
    r->add(cholesky::app_info());
    r->add(mapreduce::app_info());
    r->add(synthetic::app_info());
    r->add(failures::app_info());
    return r;
  }();
  return *reg;
}

void AppRegistry::add(AppInfo info) {
  if (apps_.count(info.name) != 0) throw Error(ErrorKind::Registration, fmt::format("app '{}' already registered", info.name));
  auto name = info.name;
  apps_.emplace(std::move(name), std::move(info));
}

const AppInfo& AppRegistry::find(const std::string& name) const {
  auto it = apps_.find(name);
  if (it == apps_.end()) {
    throw Error(ErrorKind::Usage, fmt::format("unknown app '{}' (known: {})", name, fmt::join(names(), ", ")));
  }
  return it->second;
}

bool AppRegistry::contains(const std::string& name) const { return apps_.count(name) != 0; }

std::vector<std::string> AppRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : apps_) out.push_back(name);
  return out;
}

json complete_params(const AppInfo& info, const json& params) {
  if (!params.is_null() && !params.is_object()) {
    throw Error(ErrorKind::Validation, fmt::format("{}: parameters must be a JSON object", info.name));
  }
  json out = json::object();
  for (const auto& p : info.params) {
    const bool given = params.is_object() && params.contains(p.name);
    const json& v = given ? params.at(p.name) : p.default_value;
    bool ok = false;
    if (p.type == "int") ok = v.is_number_integer() && v.get<std::int64_t>() >= 0;
    else if (p.type == "float") ok = v.is_number();
    else if (p.type == "string") ok = v.is_string();
    else if (p.type == "object") ok = v.is_object();
    if (!ok) {
      throw Error(ErrorKind::Validation,
                  fmt::format("{}: expected a {} value{}, got {}", p.name, p.type,
                              p.type == "int" ? " (non-negative)" : "", v.dump()));
    }
    out[p.name] = p.type == "float" ? json(v.get<double>()) : v;
  }
  if (params.is_object()) {
    for (const auto& [key, _] : params.items()) {
      if (!out.contains(key)) throw Error(ErrorKind::Validation, fmt::format("{}: unknown parameter for app {}", key, info.name));
    }
  }
  return out;
}

std::unique_ptr<App> make_app(const std::string& name, const json& params, std::uint64_t seed) {
  const AppInfo& info = AppRegistry::global().find(name);
  return info.factory(complete_params(info, params), seed);
}

}  // namespace tapsb
