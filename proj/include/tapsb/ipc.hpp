#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tapsb/value.hpp"

namespace tapsb::ipc {

// Worker protocol over a local stream socket. Every message is
//
//   u32 LE body length | u8 message type | body
//
// Bodies (all integers little-endian):
//   REGISTER  u32 worker index, u32 pid                    worker -> pool
//   TASK      u64 task id, u32 name length, name, u32 argc, argc frames
//   RESULT    u64 task id, u8 status (0 ok, 1 error), then a frame (ok)
//             or u32 length + UTF-8 "kind: message" text (error)
//   PING/PONG u64 nonce
enum class MessageType : std::uint8_t { Register = 1, Task = 2, Result = 3, Ping = 4, Pong = 5 };

struct Message {
  MessageType type{};
  ByteBuffer body;
};

/// Writes the whole message; false on a closed or broken peer.
bool send_message(int fd, MessageType type, const ByteBuffer& body);

/// Blocks for one message; nullopt on EOF or error. `timeout_ms` < 0 waits
/// forever.
std::optional<Message> recv_message(int fd, int timeout_ms = -1);

struct TaskRequest {
  std::uint64_t id = 0;
  std::string function;
  std::vector<Value> args;
};

struct TaskResult {
  std::uint64_t id = 0;
  bool ok = true;
  Value value;
  std::string error_text;  // "kind: message"
};

ByteBuffer encode_task(const TaskRequest& t);
TaskRequest decode_task(const ByteBuffer& body);
ByteBuffer encode_result(const TaskResult& r);
TaskResult decode_result(const ByteBuffer& body);

ByteBuffer encode_u64(std::uint64_t x);
std::uint64_t decode_u64(const ByteBuffer& body, std::size_t at = 0);

/// Worker main loop: announces itself with REGISTER and serves TASK/PING
/// until the pool closes the socket. Returns the process exit status.
int serve_worker(int fd, std::uint32_t index);

}  // namespace tapsb::ipc
