#pragma once

// Bidirectional frame channels: an in-memory pair (used by the threaded
// runtime) and TCP sockets. Both carry the encoded byte form of each frame.

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dba/errors.hpp"
#include "dba/wire.hpp"

namespace dba {

class ReceiveTimeout : public Error {
 public:
  using Error::Error;
};

inline constexpr std::chrono::milliseconds kWaitForever = std::chrono::milliseconds::max();

class Channel {
 public:
  virtual ~Channel() = default;
  /// Throws WorkerDisconnected when the peer is gone.
  virtual void send(const Frame& frame) = 0;
  /// Throws ReceiveTimeout, WorkerDisconnected (peer closed) or CorruptStream.
  virtual Frame receive(std::chrono::milliseconds timeout = kWaitForever) = 0;
  virtual void close() = 0;
};

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_memory_channel_pair();

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
  std::string to_string() const { return host + ":" + std::to_string(port); }
};

/// "host:port". Throws std::invalid_argument.
Endpoint parse_endpoint(const std::string& text);
/// Endpoints separated by commas, whitespace or newlines; '#' starts a comment.
std::vector<Endpoint> parse_endpoint_list(const std::string& text);

/// Connects, retrying until `timeout` elapses. Throws WorkerDisconnected.
std::unique_ptr<Channel> connect_tcp(const Endpoint& endpoint,
                                     std::chrono::milliseconds timeout);

class TcpListener {
 public:
  /// Binds and listens; port 0 picks an ephemeral port.
  explicit TcpListener(const Endpoint& endpoint);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<Channel> accept();
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace dba
