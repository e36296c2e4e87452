#include "tapsb/ipc.hpp"

#include <cerrno>
#include <cstring>

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fmt/format.h>

#include "tapsb/detail/fdio.hpp"
#include "tapsb/errors.hpp"
#include "tapsb/registry.hpp"

namespace tapsb::ipc {

using detail::read_all;
using detail::write_all;

namespace {

void put_u32(ByteBuffer& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

std::uint32_t get_u32(const ByteBuffer& b, std::size_t at) {
  if (b.size() < at + 4) throw Error(ErrorKind::Serialization, "truncated message");
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return x;
}

}  // namespace

ByteBuffer encode_u64(std::uint64_t x) {
  ByteBuffer out;
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
  return out;
}

std::uint64_t decode_u64(const ByteBuffer& b, std::size_t at) {
  if (b.size() < at + 8) throw Error(ErrorKind::Serialization, "truncated message");
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return x;
}

bool send_message(int fd, MessageType type, const ByteBuffer& body) {
  ByteBuffer header;
  put_u32(header, static_cast<std::uint32_t>(body.size()));
  header.push_back(static_cast<std::uint8_t>(type));
  return write_all(fd, header.data(), header.size()) && write_all(fd, body.data(), body.size());
}

std::optional<Message> recv_message(int fd, int timeout_ms) {
  if (timeout_ms >= 0) {
    pollfd pfd{fd, POLLIN, 0};
    int rc;
    do {
      rc = ::poll(&pfd, 1, timeout_ms);
    } while (rc < 0 && errno == EINTR);
    if (rc <= 0) return std::nullopt;
  }
  std::uint8_t header[5];
  if (!read_all(fd, header, sizeof header)) return std::nullopt;
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(header[i]) << (8 * i);
  Message m;
  m.type = static_cast<MessageType>(header[4]);
  m.body.resize(len);
  if (len > 0 && !read_all(fd, m.body.data(), len)) return std::nullopt;
  return m;
}

ByteBuffer encode_task(const TaskRequest& t) {
  ByteBuffer out = encode_u64(t.id);
  put_u32(out, static_cast<std::uint32_t>(t.function.size()));
  out.insert(out.end(), t.function.begin(), t.function.end());
  put_u32(out, static_cast<std::uint32_t>(t.args.size()));
  for (const auto& a : t.args) encode_into(a, out);
  return out;
}

TaskRequest decode_task(const ByteBuffer& body) {
  TaskRequest t;
  t.id = decode_u64(body, 0);
  const std::uint32_t name_len = get_u32(body, 8);
  std::size_t at = 12;
  if (body.size() < at + name_len) throw Error(ErrorKind::Serialization, "truncated task name");
  t.function.assign(body.begin() + at, body.begin() + at + name_len);
  at += name_len;
  const std::uint32_t argc = get_u32(body, at);
  at += 4;
  for (std::uint32_t i = 0; i < argc; ++i) t.args.push_back(decode_one(body, at));
  return t;
}

ByteBuffer encode_result(const TaskResult& r) {
  ByteBuffer out = encode_u64(r.id);
  out.push_back(r.ok ? 0 : 1);
  if (r.ok) {
    encode_into(r.value, out);
  } else {
    put_u32(out, static_cast<std::uint32_t>(r.error_text.size()));
    out.insert(out.end(), r.error_text.begin(), r.error_text.end());
  }
  return out;
}

TaskResult decode_result(const ByteBuffer& body) {
  TaskResult r;
  r.id = decode_u64(body, 0);
  if (body.size() < 9) throw Error(ErrorKind::Serialization, "truncated result");
  r.ok = body[8] == 0;
  std::size_t at = 9;
  if (r.ok) {
    r.value = decode_one(body, at);
  } else {
    const std::uint32_t n = get_u32(body, at);
    at += 4;
    if (body.size() < at + n) throw Error(ErrorKind::Serialization, "truncated error text");
    r.error_text.assign(body.begin() + at, body.begin() + at + n);
  }
  return r;
}

int serve_worker(int fd, std::uint32_t index) {
  mark_worker_process();
  ByteBuffer reg;
  put_u32(reg, index);
  put_u32(reg, static_cast<std::uint32_t>(::getpid()));
  if (!send_message(fd, MessageType::Register, reg)) return 1;

  for (;;) {
    auto msg = recv_message(fd);
    if (!msg) return 0;
    switch (msg->type) {
      case MessageType::Ping:
        if (!send_message(fd, MessageType::Pong, msg->body)) return 1;
        break;
      case MessageType::Task: {
        TaskResult r;
        try {
          TaskRequest t = decode_task(msg->body);
          r.id = t.id;
          r.value = invoke_task(t.function, t.args);
        } catch (const Error& e) {
          r.ok = false;
          r.error_text = fmt::format("{}: {}", to_string(e.kind()), e.what());
        }
        if (!send_message(fd, MessageType::Result, encode_result(r))) return 1;
        break;
      }
      default:
        return 2;
    }
  }
}

}  // namespace tapsb::ipc
