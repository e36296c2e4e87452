#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tapsb/ids.hpp"
#include "tapsb/value.hpp"

namespace tapsb {

// Key-value store wire protocol, one TCP connection carrying any number of
// request/response pairs:
//
//   request  = u8 opcode | 16-byte key | [u64 LE length | frame]  (PUT only)
//   response = u8 status | [u64 LE length | frame]                (GET hit only)
//
// PUT stores the frame (last write wins) and answers Ok for a new key or
// Replaced when the key already existed, which lets clients that use fresh
// random keys detect collisions.
enum class StoreOp : std::uint8_t { Put = 1, Get = 2, Exists = 3, Delete = 4 };
enum class StoreStatus : std::uint8_t { Ok = 0, Missing = 1, Replaced = 2, Error = 3 };

/// Threaded TCP key-value service. Binding port 0 picks a free port.
class StoreServer {
 public:
  /// `bind` is "host:port". Throws Error(Startup) if the port is taken.
  explicit StoreServer(const std::string& bind);
  ~StoreServer();

  StoreServer(const StoreServer&) = delete;
  StoreServer& operator=(const StoreServer&) = delete;

  /// "host:port" with the actual bound port.
  std::string address() const;
  std::uint16_t port() const;
  std::size_t size() const;

  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Starts a store service; equivalent to constructing StoreServer.
std::unique_ptr<StoreServer> store_serve(const std::string& bind);

/// Blocking client. Safe for concurrent use; keeps a small pool of idle
/// connections. Connection failures throw Error(Io).
class StoreClient {
 public:
  explicit StoreClient(std::string address);
  ~StoreClient();

  StoreStatus put(const Key128& key, const ByteBuffer& frame);
  std::optional<ByteBuffer> get(const Key128& key);
  bool exists(const Key128& key);
  bool erase(const Key128& key);

  const std::string& address() const { return address_; }

 private:
  int acquire();
  void release(int fd);
  std::string address_;
  std::mutex mu_;
  std::vector<int> idle_;
};

/// Splits "host:port"; throws Error(Parse).
std::pair<std::string, std::uint16_t> split_address(const std::string& address);

}  // namespace tapsb
