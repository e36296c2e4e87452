#include "tapsb/store.hpp"

#include <atomic>
#include <cerrno>
#include <cstring>
#include <shared_mutex>
#include <thread>
#include <unordered_map>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fmt/format.h>

#include "tapsb/detail/fdio.hpp"
#include "tapsb/errors.hpp"

namespace tapsb {

using detail::read_all;
using detail::write_all;

std::pair<std::string, std::uint16_t> split_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon + 1 == address.size()) {
    throw Error(ErrorKind::Parse, fmt::format("address '{}' is not host:port", address));
  }
  int port = 0;
  try {
    port = std::stoi(address.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorKind::Parse, fmt::format("address '{}' has a bad port", address));
  }
  if (port < 0 || port > 65535) throw Error(ErrorKind::Parse, fmt::format("address '{}' has a bad port", address));
  return {address.substr(0, colon), static_cast<std::uint16_t>(port)};
}

namespace {

void put_u64(std::uint8_t* out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(x >> (8 * i));
}

std::uint64_t get_u64(const std::uint8_t* in) {
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return x;
}

bool send_frame(int fd, const ByteBuffer& frame) {
  std::uint8_t len[8];
  put_u64(len, frame.size());
  return write_all(fd, len, 8) && write_all(fd, frame.data(), frame.size());
}

bool recv_frame(int fd, ByteBuffer& frame) {
  std::uint8_t len[8];
  if (!read_all(fd, len, 8)) return false;
  frame.resize(get_u64(len));
  return frame.empty() || read_all(fd, frame.data(), frame.size());
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

int connect_to(const std::string& address) {
  const auto [host, port] = split_address(address);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port_s = std::to_string(port);
  if (::getaddrinfo(host.c_str(), port_s.c_str(), &hints, &res) != 0) {
    throw Error(ErrorKind::Io, fmt::format("cannot resolve store host '{}'", host));
  }
  int fd = -1;
  for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw Error(ErrorKind::Io, fmt::format("cannot connect to store at {}", address));
  set_nodelay(fd);
  return fd;
}

using KeyString = std::string;  // 16 raw key bytes

}  // namespace

// ---------------------------------------------------------------- server

struct StoreServer::Impl {
  std::string host;
  std::uint16_t port = 0;
  int listen_fd = -1;
  std::atomic<bool> stopping{false};
  std::thread acceptor;

  std::mutex conn_mu;
  std::vector<int> conn_fds;
  std::vector<std::thread> conn_threads;

  mutable std::shared_mutex data_mu;
  std::unordered_map<KeyString, ByteBuffer> data;

  void serve(int fd) {
    for (;;) {
      std::uint8_t head[17];
      if (!read_all(fd, head, sizeof head)) break;
      const auto op = static_cast<StoreOp>(head[0]);
      KeyString key(reinterpret_cast<const char*>(head + 1), 16);
      bool ok = true;
      switch (op) {
        case StoreOp::Put: {
          ByteBuffer frame;
          if (!recv_frame(fd, frame)) {
            ok = false;
            break;
          }
          bool replaced;
          {
            std::unique_lock lk(data_mu);
            auto [it, inserted] = data.insert_or_assign(std::move(key), std::move(frame));
            replaced = !inserted;
          }
          const auto st = static_cast<std::uint8_t>(replaced ? StoreStatus::Replaced : StoreStatus::Ok);
          ok = write_all(fd, &st, 1);
          break;
        }
        case StoreOp::Get: {
          std::optional<ByteBuffer> frame;
          {
            std::shared_lock lk(data_mu);
            auto it = data.find(key);
            if (it != data.end()) frame = it->second;
          }
          const auto st = static_cast<std::uint8_t>(frame ? StoreStatus::Ok : StoreStatus::Missing);
          ok = write_all(fd, &st, 1) && (!frame || send_frame(fd, *frame));
          break;
        }
        case StoreOp::Exists: {
          bool found;
          {
            std::shared_lock lk(data_mu);
            found = data.count(key) != 0;
          }
          const auto st = static_cast<std::uint8_t>(found ? StoreStatus::Ok : StoreStatus::Missing);
          ok = write_all(fd, &st, 1);
          break;
        }
        case StoreOp::Delete: {
          bool found;
          {
            std::unique_lock lk(data_mu);
            found = data.erase(key) != 0;
          }
          const auto st = static_cast<std::uint8_t>(found ? StoreStatus::Ok : StoreStatus::Missing);
          ok = write_all(fd, &st, 1);
          break;
        }
        default: {
          const auto st = static_cast<std::uint8_t>(StoreStatus::Error);
          write_all(fd, &st, 1);
          ok = false;
        }
      }
      if (!ok) break;
    }
    ::shutdown(fd, SHUT_RDWR);
  }

  void accept_loop() {
    for (;;) {
      const int fd = ::accept4(listen_fd, nullptr, nullptr, SOCK_CLOEXEC);
      if (fd < 0) {
        if (stopping) return;
        if (errno == EINTR || errno == ECONNABORTED) continue;
        return;
      }
      set_nodelay(fd);
      std::lock_guard lk(conn_mu);
      if (stopping) {
        ::close(fd);
        return;
      }
      conn_fds.push_back(fd);
      conn_threads.emplace_back([this, fd] { serve(fd); });
    }
  }
};

StoreServer::StoreServer(const std::string& bind) : impl_(std::make_unique<Impl>()) {
  auto [host, port] = split_address(bind);
  impl_->host = host;
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  const std::string ip = (host == "localhost") ? "127.0.0.1" : host;
  if (::inet_pton(AF_INET, ip.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw Error(ErrorKind::Startup, fmt::format("store: bad bind host '{}'", host));
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 128) != 0) {
    const int err = errno;
    ::close(fd);
    throw Error(ErrorKind::Startup, fmt::format("store: cannot listen on {}: {}", bind, std::strerror(err)));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  impl_->port = ntohs(addr.sin_port);
  impl_->listen_fd = fd;
  impl_->acceptor = std::thread([this] { impl_->accept_loop(); });
}

StoreServer::~StoreServer() { stop(); }

std::string StoreServer::address() const { return fmt::format("{}:{}", impl_->host, impl_->port); }
std::uint16_t StoreServer::port() const { return impl_->port; }

std::size_t StoreServer::size() const {
  std::shared_lock lk(impl_->data_mu);
  return impl_->data.size();
}

void StoreServer::stop() {
  if (impl_->stopping.exchange(true)) return;
  ::shutdown(impl_->listen_fd, SHUT_RDWR);
  if (impl_->acceptor.joinable()) impl_->acceptor.join();
  ::close(impl_->listen_fd);
  std::vector<std::thread> threads;
  {
    std::lock_guard lk(impl_->conn_mu);
    for (int fd : impl_->conn_fds) ::shutdown(fd, SHUT_RDWR);
    threads.swap(impl_->conn_threads);
  }
  for (auto& t : threads) t.join();
  for (int fd : impl_->conn_fds) ::close(fd);
}

std::unique_ptr<StoreServer> store_serve(const std::string& bind) { return std::make_unique<StoreServer>(bind); }

// ---------------------------------------------------------------- client

StoreClient::StoreClient(std::string address) : address_(std::move(address)) { split_address(address_); }

StoreClient::~StoreClient() {
  for (int fd : idle_) ::close(fd);
}

int StoreClient::acquire() {
  {
    std::lock_guard lk(mu_);
    if (!idle_.empty()) {
      const int fd = idle_.back();
      idle_.pop_back();
      return fd;
    }
  }
  return connect_to(address_);
}

void StoreClient::release(int fd) {
  std::lock_guard lk(mu_);
  idle_.push_back(fd);
}

namespace {

// Runs one request on a pooled connection; a failure closes the connection
// and throws Error(Io).
template <typename Fn>
auto with_connection(int fd, Fn&& fn) {
  try {
    return fn(fd);
  } catch (...) {
    ::close(fd);
    throw;
  }
}

[[noreturn]] void io_failure(const std::string& address) {
  throw Error(ErrorKind::Io, fmt::format("store connection to {} failed", address));
}

bool send_head(int fd, StoreOp op, const Key128& key) {
  std::uint8_t head[17];
  head[0] = static_cast<std::uint8_t>(op);
  std::memcpy(head + 1, key.data(), 16);
  return write_all(fd, head, sizeof head);
}

StoreStatus recv_status(int fd, const std::string& address) {
  std::uint8_t st;
  if (!read_all(fd, &st, 1)) io_failure(address);
  return static_cast<StoreStatus>(st);
}

}  // namespace

StoreStatus StoreClient::put(const Key128& key, const ByteBuffer& frame) {
  const int fd = acquire();
  const auto st = with_connection(fd, [&](int c) {
    if (!send_head(c, StoreOp::Put, key) || !send_frame(c, frame)) io_failure(address_);
    return recv_status(c, address_);
  });
  release(fd);
  return st;
}

std::optional<ByteBuffer> StoreClient::get(const Key128& key) {
  const int fd = acquire();
  auto out = with_connection(fd, [&](int c) -> std::optional<ByteBuffer> {
    if (!send_head(c, StoreOp::Get, key)) io_failure(address_);
    if (recv_status(c, address_) != StoreStatus::Ok) return std::nullopt;
    ByteBuffer frame;
    if (!recv_frame(c, frame)) io_failure(address_);
    return frame;
  });
  release(fd);
  return out;
}

bool StoreClient::exists(const Key128& key) {
  const int fd = acquire();
  const bool found = with_connection(fd, [&](int c) {
    if (!send_head(c, StoreOp::Exists, key)) io_failure(address_);
    return recv_status(c, address_) == StoreStatus::Ok;
  });
  release(fd);
  return found;
}

bool StoreClient::erase(const Key128& key) {
  const int fd = acquire();
  const bool found = with_connection(fd, [&](int c) {
    if (!send_head(c, StoreOp::Delete, key)) io_failure(address_);
    return recv_status(c, address_) == StoreStatus::Ok;
  });
  release(fd);
  return found;
}

}  // namespace tapsb
