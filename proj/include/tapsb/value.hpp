#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tapsb {

using ByteBuffer = std::vector<std::uint8_t>;

/// Frame type tags. The numeric values are part of the wire format.
enum class TypeTag : std::uint8_t {
  None = 0x00,
  Bytes = 0x01,
  Text = 0x02,
  Int = 0x03,
  Float = 0x04,
  F64Array = 0x05,
  List = 0x06,
  Ident = 0x07,
};

std::string_view to_string(TypeTag tag);
TypeTag type_tag_from_string(std::string_view name);

enum class Scheme : std::uint8_t { File = 0, Store = 1 };

std::string_view to_string(Scheme scheme);

/// Reference to a value that a transformer moved out of the task message.
struct Identifier {
  Scheme scheme = Scheme::File;
  std::string locator;
  std::uint64_t size = 0;  // serialized frame length of the referenced value

  friend bool operator==(const Identifier&, const Identifier&) = default;
};

/// Self-describing task argument / result value.
///
/// Every value has a canonical frame encoding:
///
///   u32 LE payload length | u8 type tag | payload
///
/// so a frame is always `kFrameHeaderSize + payload` bytes long. Lists
/// hold a concatenation of child frames.
class Value {
 public:
  using List = std::vector<Value>;

  Value() = default;

  static Value none() { return Value{}; }
  static Value bytes(ByteBuffer data);
  static Value bytes(std::string_view data);
  static Value text(std::string s);
  static Value integer(std::int64_t v);
  static Value real(double v);
  static Value array(std::vector<double> v);
  static Value list(List items);
  static Value ident(Identifier id);

  TypeTag tag() const;
  bool is(TypeTag t) const { return tag() == t; }

  const ByteBuffer& as_bytes() const;
  const std::string& as_text() const;
  std::int64_t as_int() const;
  double as_float() const;
  const std::vector<double>& as_array() const;
  const List& as_list() const;
  const Identifier& as_ident() const;

  ByteBuffer& mutable_bytes();
  List& mutable_list();

  friend bool operator==(const Value&, const Value&) = default;

 private:
  using Storage = std::variant<std::monostate, ByteBuffer, std::string, std::int64_t, double,
                               std::vector<double>, List, Identifier>;
  explicit Value(Storage s) : v_(std::move(s)) {}
  Storage v_;
};

inline constexpr std::size_t kFrameHeaderSize = 5;

/// Length of the frame `encode(v)` would produce, without encoding.
std::size_t encoded_size(const Value& v);

ByteBuffer encode(const Value& v);
void encode_into(const Value& v, ByteBuffer& out);

/// Decodes exactly one frame spanning all of `frame`.
Value decode(std::span<const std::uint8_t> frame);

/// Decodes one frame starting at `offset`, advancing it past the frame.
Value decode_one(std::span<const std::uint8_t> buf, std::size_t& offset);

}  // namespace tapsb
