#include "dba/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace dba {
namespace {

using Clock = std::chrono::steady_clock;

Clock::time_point deadline_after(std::chrono::milliseconds timeout) {
  if (timeout == kWaitForever) return Clock::time_point::max();
  return Clock::now() + timeout;
}

struct MemoryLink {
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::vector<std::uint8_t>> queue[2];  // queue[i]: messages to side i
  bool closed[2] = {false, false};
};

class MemoryChannel final : public Channel {
 public:
  MemoryChannel(std::shared_ptr<MemoryLink> link, int side) : link_(std::move(link)), side_(side) {}
  ~MemoryChannel() override { close(); }

  void send(const Frame& frame) override {
    auto bytes = encode_frame(frame);
    std::lock_guard lock(link_->mutex);
    if (link_->closed[side_]) throw WorkerDisconnected("channel closed");
    if (link_->closed[1 - side_]) throw WorkerDisconnected("peer closed the channel");
    link_->queue[1 - side_].push_back(std::move(bytes));
    link_->cv.notify_all();
  }

  Frame receive(std::chrono::milliseconds timeout) override {
    const auto deadline = deadline_after(timeout);
    std::unique_lock lock(link_->mutex);
    auto& q = link_->queue[side_];
    auto ready = [&] { return !q.empty() || link_->closed[1 - side_] || link_->closed[side_]; };
    if (deadline == Clock::time_point::max()) {
      link_->cv.wait(lock, ready);
    } else if (!link_->cv.wait_until(lock, deadline, ready)) {
      throw ReceiveTimeout("no message within the receive timeout");
    }
    if (q.empty()) throw WorkerDisconnected("peer closed the channel");
    auto bytes = std::move(q.front());
    q.pop_front();
    lock.unlock();
    return decode_frame(bytes);
  }

  void close() override {
    std::lock_guard lock(link_->mutex);
    link_->closed[side_] = true;
    link_->cv.notify_all();
  }

 private:
  std::shared_ptr<MemoryLink> link_;
  int side_;
};

class SocketChannel final : public Channel {
 public:
  explicit SocketChannel(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~SocketChannel() override { close(); }

  void send(const Frame& frame) override {
    const auto bytes = encode_frame(frame);
    std::size_t sent = 0;
    while (sent < bytes.size()) {
      const auto n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw WorkerDisconnected(std::string("send failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  Frame receive(std::chrono::milliseconds timeout) override {
    const auto deadline = deadline_after(timeout);
    std::vector<std::uint8_t> bytes(kFrameHeaderSize);
    read_exact(bytes.data(), kFrameHeaderSize, deadline);
    const auto header = decode_frame_header(bytes);
    bytes.resize(kFrameHeaderSize + header.payload_size + kFrameTrailerSize);
    read_exact(bytes.data() + kFrameHeaderSize, bytes.size() - kFrameHeaderSize, deadline);
    return decode_frame(bytes);
  }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  void read_exact(std::uint8_t* out, std::size_t n, Clock::time_point deadline) {
    std::size_t got = 0;
    while (got < n) {
      if (fd_ < 0) throw WorkerDisconnected("channel closed");
      int wait_ms = -1;
      if (deadline != Clock::time_point::max()) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - Clock::now());
        if (left.count() <= 0) throw ReceiveTimeout("no message within the receive timeout");
        wait_ms = static_cast<int>(std::min<long long>(left.count(), 1 << 30));
      }
      pollfd pfd{fd_, POLLIN, 0};
      const int r = ::poll(&pfd, 1, wait_ms);
      if (r < 0) {
        if (errno == EINTR) continue;
        throw WorkerDisconnected(std::string("poll failed: ") + std::strerror(errno));
      }
      if (r == 0) continue;
      const auto k = ::recv(fd_, out + got, n - got, 0);
      if (k == 0) throw WorkerDisconnected("peer closed the connection");
      if (k < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw WorkerDisconnected(std::string("recv failed: ") + std::strerror(errno));
      }
      got += static_cast<std::size_t>(k);
    }
  }

  int fd_;
};

addrinfo* resolve(const Endpoint& ep, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* result = nullptr;
  const auto port = std::to_string(ep.port);
  const char* host = ep.host.empty() ? nullptr : ep.host.c_str();
  const int rc = ::getaddrinfo(host, port.c_str(), &hints, &result);
  if (rc != 0) {
    throw WorkerDisconnected("cannot resolve " + ep.to_string() + ": " + ::gai_strerror(rc));
  }
  return result;
}

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_memory_channel_pair() {
  auto link = std::make_shared<MemoryLink>();
  return {std::make_unique<MemoryChannel>(link, 0), std::make_unique<MemoryChannel>(link, 1)};
}

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon + 1 == text.size()) {
    throw std::invalid_argument("endpoint must be host:port, got '" + text + "'");
  }
  Endpoint ep;
  ep.host = text.substr(0, colon);
  const auto port_text = text.substr(colon + 1);
  std::size_t used = 0;
  unsigned long port = 0;
  try {
    port = std::stoul(port_text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != port_text.size() || port > 65535) {
    throw std::invalid_argument("bad port in endpoint '" + text + "'");
  }
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

std::vector<Endpoint> parse_endpoint_list(const std::string& text) {
  std::vector<Endpoint> out;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    line = line.substr(0, line.find('#'));
    for (auto& ch : line) {
      if (ch == ',') ch = ' ';
    }
    std::istringstream words(line);
    std::string word;
    while (words >> word) out.push_back(parse_endpoint(word));
  }
  return out;
}

std::unique_ptr<Channel> connect_tcp(const Endpoint& endpoint,
                                     std::chrono::milliseconds timeout) {
  const auto deadline = deadline_after(timeout);
  std::string last_error;
  while (true) {
    addrinfo* info = resolve(endpoint, false);
    for (auto* a = info; a != nullptr; a = a->ai_next) {
      const int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) {
        ::freeaddrinfo(info);
        return std::make_unique<SocketChannel>(fd);
      }
      last_error = std::strerror(errno);
      ::close(fd);
    }
    ::freeaddrinfo(info);
    if (Clock::now() >= deadline) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  throw WorkerDisconnected("cannot connect to " + endpoint.to_string() + ": " + last_error);
}

TcpListener::TcpListener(const Endpoint& endpoint) {
  addrinfo* info = resolve(endpoint, true);
  std::string error = "no address";
  for (auto* a = info; a != nullptr; a = a->ai_next) {
    const int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 16) == 0) {
      fd_ = fd;
      break;
    }
    error = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(info);
  if (fd_ < 0) throw std::runtime_error("cannot listen on " + endpoint.to_string() + ": " + error);
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() { close(); }

std::unique_ptr<Channel> TcpListener::accept() {
  while (true) {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) return std::make_unique<SocketChannel>(fd);
    if (errno == EINTR) continue;
    throw std::runtime_error(std::string("accept failed: ") + std::strerror(errno));
  }
}

void TcpListener::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

}  // namespace dba
