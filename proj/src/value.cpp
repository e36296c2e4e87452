#include "tapsb/value.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include <fmt/format.h>

#include "tapsb/errors.hpp"

namespace tapsb {

static_assert(std::endian::native == std::endian::little, "wire format assumes a little-endian host");

std::string_view to_string(TypeTag tag) {
  switch (tag) {
    case TypeTag::None: return "none";
    case TypeTag::Bytes: return "bytes";
    case TypeTag::Text: return "text";
    case TypeTag::Int: return "int";
    case TypeTag::Float: return "float";
    case TypeTag::F64Array: return "f64-array";
    case TypeTag::List: return "list";
    case TypeTag::Ident: return "identifier";
  }
  return "unknown";
}

TypeTag type_tag_from_string(std::string_view name) {
  for (auto t : {TypeTag::None, TypeTag::Bytes, TypeTag::Text, TypeTag::Int, TypeTag::Float,
                 TypeTag::F64Array, TypeTag::List, TypeTag::Ident}) {
    if (to_string(t) == name) return t;
  }
  throw Error(ErrorKind::Parse, fmt::format("unknown type tag '{}'", name));
}

std::string_view to_string(Scheme scheme) { return scheme == Scheme::File ? "file" : "store"; }

Value Value::bytes(ByteBuffer data) { return Value(Storage(std::move(data))); }
Value Value::bytes(std::string_view data) { return Value(Storage(ByteBuffer(data.begin(), data.end()))); }
Value Value::text(std::string s) { return Value(Storage(std::move(s))); }
Value Value::integer(std::int64_t v) { return Value(Storage(v)); }
Value Value::real(double v) { return Value(Storage(v)); }
Value Value::array(std::vector<double> v) { return Value(Storage(std::move(v))); }
Value Value::list(List items) { return Value(Storage(std::move(items))); }
Value Value::ident(Identifier id) { return Value(Storage(std::move(id))); }

TypeTag Value::tag() const {
  static constexpr TypeTag kByIndex[] = {TypeTag::None,  TypeTag::Bytes,    TypeTag::Text, TypeTag::Int,
                                         TypeTag::Float, TypeTag::F64Array, TypeTag::List, TypeTag::Ident};
  return kByIndex[v_.index()];
}

namespace {

template <typename T>
const T& get_as(const auto& storage, TypeTag want, TypeTag have) {
  if (const T* p = std::get_if<T>(&storage)) return *p;
  throw Error(ErrorKind::Argument, fmt::format("expected {} value, got {}", to_string(want), to_string(have)));
}

}  // namespace

const ByteBuffer& Value::as_bytes() const { return get_as<ByteBuffer>(v_, TypeTag::Bytes, tag()); }
const std::string& Value::as_text() const { return get_as<std::string>(v_, TypeTag::Text, tag()); }
std::int64_t Value::as_int() const { return get_as<std::int64_t>(v_, TypeTag::Int, tag()); }
double Value::as_float() const {
  // ints widen silently; config-driven callers often pass whole numbers
  if (auto* i = std::get_if<std::int64_t>(&v_)) return static_cast<double>(*i);
  return get_as<double>(v_, TypeTag::Float, tag());
}
const std::vector<double>& Value::as_array() const {
  return get_as<std::vector<double>>(v_, TypeTag::F64Array, tag());
}
const Value::List& Value::as_list() const { return get_as<List>(v_, TypeTag::List, tag()); }
const Identifier& Value::as_ident() const { return get_as<Identifier>(v_, TypeTag::Ident, tag()); }

ByteBuffer& Value::mutable_bytes() { return const_cast<ByteBuffer&>(as_bytes()); }
Value::List& Value::mutable_list() { return const_cast<List&>(as_list()); }

namespace {

std::size_t payload_size(const Value& v) {
  switch (v.tag()) {
    case TypeTag::None: return 0;
    case TypeTag::Bytes: return v.as_bytes().size();
    case TypeTag::Text: return v.as_text().size();
    case TypeTag::Int:
    case TypeTag::Float: return 8;
    case TypeTag::F64Array: return 8 + 8 * v.as_array().size();
    case TypeTag::List: {
      std::size_t n = 0;
      for (const auto& item : v.as_list()) n += encoded_size(item);
      return n;
    }
    case TypeTag::Ident: return 1 + 8 + v.as_ident().locator.size();
  }
  return 0;
}

void put_u32(ByteBuffer& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

void put_u64(ByteBuffer& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

void put_raw(ByteBuffer& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return x;
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return x;
}

[[noreturn]] void malformed(const char* what) {
  throw Error(ErrorKind::Serialization, fmt::format("malformed frame: {}", what));
}

}  // namespace

std::size_t encoded_size(const Value& v) { return kFrameHeaderSize + payload_size(v); }

void encode_into(const Value& v, ByteBuffer& out) {
  const std::size_t payload = payload_size(v);
  if (payload > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorKind::Serialization, fmt::format("frame payload of {} bytes exceeds 4 GiB", payload));
  }
  put_u32(out, static_cast<std::uint32_t>(payload));
  out.push_back(static_cast<std::uint8_t>(v.tag()));
  switch (v.tag()) {
    case TypeTag::None: break;
    case TypeTag::Bytes: put_raw(out, v.as_bytes().data(), v.as_bytes().size()); break;
    case TypeTag::Text: put_raw(out, v.as_text().data(), v.as_text().size()); break;
    case TypeTag::Int: put_u64(out, static_cast<std::uint64_t>(v.as_int())); break;
    case TypeTag::Float: put_u64(out, std::bit_cast<std::uint64_t>(v.as_float())); break;
    case TypeTag::F64Array: {
      const auto& a = v.as_array();
      put_u64(out, a.size());
      put_raw(out, a.data(), a.size() * sizeof(double));
      break;
    }
    case TypeTag::List:
      for (const auto& item : v.as_list()) encode_into(item, out);
      break;
    case TypeTag::Ident: {
      const auto& id = v.as_ident();
      out.push_back(static_cast<std::uint8_t>(id.scheme));
      put_u64(out, id.size);
      put_raw(out, id.locator.data(), id.locator.size());
      break;
    }
  }
}

ByteBuffer encode(const Value& v) {
  ByteBuffer out;
  out.reserve(encoded_size(v));
  encode_into(v, out);
  return out;
}

Value decode_one(std::span<const std::uint8_t> buf, std::size_t& offset) {
  if (buf.size() - offset < kFrameHeaderSize) malformed("truncated header");
  const std::uint32_t len = get_u32(buf, offset);
  const auto tag = static_cast<TypeTag>(buf[offset + 4]);
  const std::size_t start = offset + kFrameHeaderSize;
  if (buf.size() - start < len) malformed("truncated payload");
  auto payload = buf.subspan(start, len);
  offset = start + len;

  switch (tag) {
    case TypeTag::None:
      if (len != 0) malformed("none with payload");
      return Value::none();
    case TypeTag::Bytes: return Value::bytes(ByteBuffer(payload.begin(), payload.end()));
    case TypeTag::Text: return Value::text(std::string(payload.begin(), payload.end()));
    case TypeTag::Int:
      if (len != 8) malformed("int width");
      return Value::integer(static_cast<std::int64_t>(get_u64(payload, 0)));
    case TypeTag::Float:
      if (len != 8) malformed("float width");
      return Value::real(std::bit_cast<double>(get_u64(payload, 0)));
    case TypeTag::F64Array: {
      if (len < 8) malformed("array header");
      const std::uint64_t n = get_u64(payload, 0);
      if ((len - 8) / 8 != n || (len - 8) % 8 != 0) malformed("array length mismatch");
      std::vector<double> a(n);
      if (n > 0) std::memcpy(a.data(), payload.data() + 8, n * sizeof(double));
      return Value::array(std::move(a));
    }
    case TypeTag::List: {
      Value::List items;
      std::size_t at = 0;
      while (at < payload.size()) items.push_back(decode_one(payload, at));
      return Value::list(std::move(items));
    }
    case TypeTag::Ident: {
      if (len < 9) malformed("identifier header");
      if (payload[0] > 1) malformed("identifier scheme");
      Identifier id;
      id.scheme = static_cast<Scheme>(payload[0]);
      id.size = get_u64(payload, 1);
      id.locator.assign(payload.begin() + 9, payload.end());
      return Value::ident(std::move(id));
    }
  }
  malformed("unknown type tag");
}

Value decode(std::span<const std::uint8_t> frame) {
  std::size_t at = 0;
  Value v = decode_one(frame, at);
  if (at != frame.size()) malformed("trailing bytes");
  return v;
}

}  // namespace tapsb
