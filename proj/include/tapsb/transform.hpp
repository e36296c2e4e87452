#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <string_view>

#include "tapsb/value.hpp"

namespace tapsb {

class StoreClient;

enum class FilterKind { Never, Always, MinSize, TypeTag };

/// Decides which argument/result values the transformer externalizes.
struct FilterSpec {
  FilterKind kind = FilterKind::Never;
  std::uint64_t threshold = 0;  // min-size, in serialized frame bytes
  std::set<TypeTag> allowed;    // type-tag

  static FilterSpec never() { return {}; }
  static FilterSpec always() { return {FilterKind::Always, 0, {}}; }
  static FilterSpec min_size(std::uint64_t bytes) { return {FilterKind::MinSize, bytes, {}}; }
  static FilterSpec type_tag(std::set<TypeTag> tags) { return {FilterKind::TypeTag, 0, std::move(tags)}; }

  /// Text form used on the CLI and in config files: `never`, `always`,
  /// `min-size:BYTES`, `type-tag:TAG[+TAG...]`.
  static FilterSpec parse(std::string_view text);
  std::string str() const;

  friend bool operator==(const FilterSpec&, const FilterSpec&) = default;
};

/// Pure predicate. min-size transforms values whose serialized frame is at
/// least `threshold` bytes; type-tag matches the frame's type tag.
bool filter_check(const FilterSpec& filter, const Value& value);

/// Moves values out of task messages and back.
class Transformer {
 public:
  virtual ~Transformer() = default;

  /// Persists the serialized frame under a fresh locator. Throws
  /// Error(Transform) on I/O or connection failure.
  virtual Identifier transform(const Value& value) = 0;

  /// Returns the value whose frame is byte-identical to the transformed
  /// one. Throws Error(Resolution) naming the locator if it is gone.
  virtual Value resolve(const Identifier& id) = 0;

  /// JSON description from which any process can rebuild an equivalent
  /// transformer (see transformer_from_spec).
  virtual std::string spec() const = 0;
};

/// Writes each frame to `<dir>/<hex-key>.bin` via a temporary file and
/// rename. Files are left in place; the run directory owns their lifetime.
class FileTransformer final : public Transformer {
 public:
  /// Throws Error(Transform) if `dir` cannot be created.
  explicit FileTransformer(std::filesystem::path dir);

  Identifier transform(const Value& value) override;
  Value resolve(const Identifier& id) override;
  std::string spec() const override;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

/// Client transformer for the key-value store service (store.hpp): PUT on
/// transform, GET on resolve. Entries are left in place.
class StoreTransformer final : public Transformer {
 public:
  explicit StoreTransformer(std::string address);
  ~StoreTransformer() override;

  Identifier transform(const Value& value) override;
  Value resolve(const Identifier& id) override;
  std::string spec() const override;

  const std::string& address() const { return address_; }

 private:
  std::string address_;
  std::unique_ptr<StoreClient> client_;
};

/// Builds a transformer from Transformer::spec() output. An empty spec means
/// no transformer (returns nullptr). Instances are cached per spec string in
/// each process, so in-process executors share the engine's instance.
std::shared_ptr<Transformer> transformer_from_spec(const std::string& spec);

/// Makes `t` the cached instance for its spec in this process.
void register_transformer(const std::shared_ptr<Transformer>& t);

}  // namespace tapsb
