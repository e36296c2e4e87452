#include "tapsb/ids.hpp"

#include <chrono>
#include <random>

#include <fmt/format.h>

#include "tapsb/errors.hpp"
#include "tapsb/rng.hpp"

namespace tapsb {

std::int64_t wall_now_us() {
  using namespace std::chrono;
  return duration_cast<microseconds>(system_clock::now().time_since_epoch()).count();
}

std::int64_t mono_now_us() {
  using namespace std::chrono;
  return duration_cast<microseconds>(steady_clock::now().time_since_epoch()).count();
}

Key128 random_key() {
  thread_local Xoshiro256 gen([] {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^
           static_cast<std::uint64_t>(mono_now_us());
  }());
  Key128 key{};
  for (int half = 0; half < 2; ++half) {
    const std::uint64_t x = gen.next();
    for (int i = 0; i < 8; ++i) key[half * 8 + i] = static_cast<std::uint8_t>(x >> (8 * i));
  }
  return key;
}

std::string to_hex(const Key128& key) {
  std::string out;
  out.reserve(32);
  for (auto b : key) out += fmt::format("{:02x}", b);
  return out;
}

Key128 key_from_hex(std::string_view hex) {
  if (hex.size() != 32) throw Error(ErrorKind::Parse, fmt::format("bad key '{}'", hex));
  Key128 key{};
  for (std::size_t i = 0; i < 16; ++i) {
    auto nib = [&](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      throw Error(ErrorKind::Parse, fmt::format("bad key '{}'", hex));
    };
    key[i] = static_cast<std::uint8_t>(nib(hex[2 * i]) << 4 | nib(hex[2 * i + 1]));
  }
  return key;
}

TaskId TaskId::generate() {
  Key128 k = random_key();
  k[6] = static_cast<std::uint8_t>((k[6] & 0x0f) | 0x40);
  k[8] = static_cast<std::uint8_t>((k[8] & 0x3f) | 0x80);
  const std::string h = to_hex(k);
  return TaskId(fmt::format("{}-{}-{}-{}-{}", h.substr(0, 8), h.substr(8, 4), h.substr(12, 4), h.substr(16, 4),
                            h.substr(20)));
}

TaskId TaskId::parse(std::string_view text) {
  if (text.size() != 36 || text[8] != '-' || text[13] != '-' || text[18] != '-' || text[23] != '-') {
    throw Error(ErrorKind::Parse, fmt::format("bad task id '{}'", text));
  }
  return TaskId(std::string(text));
}

}  // namespace tapsb
