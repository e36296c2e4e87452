#include "tapsb/transform.hpp"

#include <fstream>
#include <map>
#include <mutex>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "tapsb/errors.hpp"
#include "tapsb/ids.hpp"
#include "tapsb/store.hpp"

namespace tapsb {

namespace fs = std::filesystem;
using nlohmann::json;

FilterSpec FilterSpec::parse(std::string_view text) {
  if (text == "never") return never();
  if (text == "always") return always();
  const auto colon = text.find(':');
  const auto head = text.substr(0, colon);
  const auto rest = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  if (head == "min-size" && !rest.empty()) {
    std::uint64_t bytes = 0;
    for (char c : rest) {
      if (c < '0' || c > '9') throw Error(ErrorKind::Validation, fmt::format("filter: bad byte count '{}'", rest));
      bytes = bytes * 10 + static_cast<std::uint64_t>(c - '0');
    }
    return min_size(bytes);
  }
  if (head == "type-tag" && !rest.empty()) {
    std::set<TypeTag> tags;
    std::size_t at = 0;
    while (at <= rest.size()) {
      const auto plus = rest.find('+', at);
      const auto name = rest.substr(at, plus == std::string_view::npos ? std::string_view::npos : plus - at);
      try {
        tags.insert(type_tag_from_string(name));
      } catch (const Error&) {
        throw Error(ErrorKind::Validation, fmt::format("filter: unknown type tag '{}'", name));
      }
      if (plus == std::string_view::npos) break;
      at = plus + 1;
    }
    return type_tag(std::move(tags));
  }
  throw Error(ErrorKind::Validation,
              fmt::format("filter: '{}' is not never, always, min-size:BYTES or type-tag:TAGS", text));
}

std::string FilterSpec::str() const {
  switch (kind) {
    case FilterKind::Never: return "never";
    case FilterKind::Always: return "always";
    case FilterKind::MinSize: return fmt::format("min-size:{}", threshold);
    case FilterKind::TypeTag: {
      std::string out = "type-tag:";
      bool first = true;
      for (auto t : allowed) {
        if (!first) out += '+';
        out += to_string(t);
        first = false;
      }
      return out;
    }
  }
  return "never";
}

bool filter_check(const FilterSpec& filter, const Value& value) {
  switch (filter.kind) {
    case FilterKind::Never: return false;
    case FilterKind::Always: return true;
    case FilterKind::MinSize: return encoded_size(value) >= filter.threshold;
    case FilterKind::TypeTag: return filter.allowed.count(value.tag()) != 0;
  }
  return false;
}

// ------------------------------------------------------------------ file

FileTransformer::FileTransformer(fs::path dir) : dir_(fs::absolute(std::move(dir))) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec || !fs::is_directory(dir_)) {
    throw Error(ErrorKind::Transform, fmt::format("cannot create data directory {}", dir_.string()));
  }
}

Identifier FileTransformer::transform(const Value& value) {
  const ByteBuffer frame = encode(value);
  const std::string key = to_hex(random_key());
  const fs::path final_path = dir_ / (key + ".bin");
  const fs::path tmp_path = dir_ / ("." + key + ".tmp");
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
    if (!out) throw Error(ErrorKind::Transform, fmt::format("cannot write {}", tmp_path.string()));
  }
  std::error_code ec;
  fs::rename(tmp_path, final_path, ec);
  if (ec) throw Error(ErrorKind::Transform, fmt::format("cannot rename into {}: {}", final_path.string(), ec.message()));
  return Identifier{Scheme::File, final_path.string(), frame.size()};
}

Value FileTransformer::resolve(const Identifier& id) {
  if (id.scheme != Scheme::File) {
    throw Error(ErrorKind::Resolution, fmt::format("file transformer cannot resolve {} identifier {}",
                                                   to_string(id.scheme), id.locator));
  }
  std::ifstream in(id.locator, std::ios::binary | std::ios::ate);
  if (!in) throw Error(ErrorKind::Resolution, fmt::format("missing data file {}", id.locator));
  const auto size = static_cast<std::size_t>(in.tellg());
  ByteBuffer frame(size);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(frame.data()), static_cast<std::streamsize>(size));
  if (!in) throw Error(ErrorKind::Resolution, fmt::format("short read from {}", id.locator));
  try {
    return decode(frame);
  } catch (const Error& e) {
    throw Error(ErrorKind::Resolution, fmt::format("corrupt data file {}: {}", id.locator, e.what()));
  }
}

std::string FileTransformer::spec() const { return json{{"kind", "file"}, {"dir", dir_.string()}}.dump(); }

// ----------------------------------------------------------------- store

StoreTransformer::StoreTransformer(std::string address)
    : address_(std::move(address)), client_(std::make_unique<StoreClient>(address_)) {}

StoreTransformer::~StoreTransformer() = default;

Identifier StoreTransformer::transform(const Value& value) {
  const ByteBuffer frame = encode(value);
  const Key128 key = random_key();
  StoreStatus st;
  try {
    st = client_->put(key, frame);
  } catch (const Error& e) {
    throw Error(ErrorKind::Transform, e.what());
  }
  if (st == StoreStatus::Replaced) {
    throw Error(ErrorKind::Transform, fmt::format("store key collision on {}", to_hex(key)));
  }
  if (st != StoreStatus::Ok) throw Error(ErrorKind::Transform, "store rejected PUT");
  return Identifier{Scheme::Store, to_hex(key), frame.size()};
}

Value StoreTransformer::resolve(const Identifier& id) {
  if (id.scheme != Scheme::Store) {
    throw Error(ErrorKind::Resolution, fmt::format("store transformer cannot resolve {} identifier {}",
                                                   to_string(id.scheme), id.locator));
  }
  std::optional<ByteBuffer> frame;
  try {
    frame = client_->get(key_from_hex(id.locator));
  } catch (const Error& e) {
    throw Error(ErrorKind::Resolution, fmt::format("store key {}: {}", id.locator, e.what()));
  }
  if (!frame) throw Error(ErrorKind::Resolution, fmt::format("missing store key {}", id.locator));
  try {
    return decode(*frame);
  } catch (const Error& e) {
    throw Error(ErrorKind::Resolution, fmt::format("corrupt store entry {}: {}", id.locator, e.what()));
  }
}

std::string StoreTransformer::spec() const { return json{{"kind", "store"}, {"addr", address_}}.dump(); }

// ----------------------------------------------------------------- cache

namespace {

std::mutex g_cache_mu;
std::map<std::string, std::weak_ptr<Transformer>> g_cache;
// Instances built from a spec in this process stay alive for its lifetime
// (worker processes resolve many tasks against the same store/dir).
std::map<std::string, std::shared_ptr<Transformer>> g_owned;

}  // namespace

void register_transformer(const std::shared_ptr<Transformer>& t) {
  std::lock_guard lk(g_cache_mu);
  g_cache[t->spec()] = t;
}

std::shared_ptr<Transformer> transformer_from_spec(const std::string& spec) {
  if (spec.empty()) return nullptr;
  std::lock_guard lk(g_cache_mu);
  if (auto it = g_cache.find(spec); it != g_cache.end()) {
    if (auto live = it->second.lock()) return live;
  }
  json j;
  try {
    j = json::parse(spec);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, fmt::format("bad transformer spec: {}", e.what()));
  }
  std::shared_ptr<Transformer> t;
  const std::string kind = j.value("kind", "");
  if (kind == "file") {
    t = std::make_shared<FileTransformer>(j.at("dir").get<std::string>());
  } else if (kind == "store") {
    t = std::make_shared<StoreTransformer>(j.at("addr").get<std::string>());
  } else {
    throw Error(ErrorKind::Parse, fmt::format("unknown transformer kind '{}'", kind));
  }
  g_cache[spec] = t;
  g_owned[spec] = t;
  return t;
}

}  // namespace tapsb
