#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace tapsb {

/// Wall-clock microseconds since the Unix epoch. Record timestamps use this
/// so rows written by different processes on one host can be merged.
std::int64_t wall_now_us();

/// Monotonic microseconds, for durations only.
std::int64_t mono_now_us();

using Key128 = std::array<std::uint8_t, 16>;

/// Fresh random 128-bit key from a per-thread generator seeded by the OS.
Key128 random_key();

std::string to_hex(const Key128& key);
Key128 key_from_hex(std::string_view hex);

/// Unique task identity, rendered as a lowercase hyphenated UUIDv4.
class TaskId {
 public:
  TaskId() = default;
  static TaskId generate();
  static TaskId parse(std::string_view text);

  const std::string& str() const { return text_; }
  bool empty() const { return text_.empty(); }

  friend bool operator==(const TaskId&, const TaskId&) = default;
  friend auto operator<=>(const TaskId&, const TaskId&) = default;

 private:
  explicit TaskId(std::string text) : text_(std::move(text)) {}
  std::string text_;
};

}  // namespace tapsb

template <>
struct std::hash<tapsb::TaskId> {
  std::size_t operator()(const tapsb::TaskId& id) const noexcept { return std::hash<std::string>{}(id.str()); }
};
