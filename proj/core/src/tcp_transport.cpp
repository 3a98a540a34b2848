#include "icat/tcp_transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <vector>

#include "icat/errors.hpp"

namespace icat {

namespace {

struct FdGuard {
  int fd;
  ~FdGuard() {
    if (fd >= 0) ::close(fd);
  }
};

bool send_all(int fd, const std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n <= 0) return false;
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

bool recv_all(int fd, std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    ssize_t n = ::recv(fd, data, len, 0);
    if (n <= 0) return false;
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

constexpr std::uint32_t kMaxFrame = 1u << 20;

// Reads one length-prefixed frame; empty return means the peer went away.
Bytes read_frame(int fd) {
  std::uint8_t hdr[4];
  if (!recv_all(fd, hdr, 4)) return {};
  std::uint32_t len = (std::uint32_t{hdr[0]} << 24) | (std::uint32_t{hdr[1]} << 16) |
                      (std::uint32_t{hdr[2]} << 8) | std::uint32_t{hdr[3]};
  if (len == 0 || len > kMaxFrame) raise(ErrorCode::ProtocolError, "bad frame length");
  Bytes body(len);
  if (!recv_all(fd, body.data(), len)) return {};
  return body;
}

std::pair<std::string, std::string> split_addr(const std::string& endpoint) {
  auto colon = endpoint.rfind(':');
  if (colon == std::string::npos)
    raise(ErrorCode::ConfigError, "address must be host:port, got " + endpoint);
  return {endpoint.substr(0, colon), endpoint.substr(colon + 1)};
}

} // namespace

PeerMessage TcpTransport::request(const std::string& endpoint, const PeerMessage& msg) {
  auto [host, port] = split_addr(endpoint);

  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
    raise(ErrorCode::OriginUnreachable, "cannot resolve " + endpoint);

  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) raise(ErrorCode::OriginUnreachable, "cannot connect to " + endpoint);
  FdGuard guard{fd};

  timeval tv{timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));

  Bytes frame = msg.encode();
  if (!send_all(fd, frame.data(), frame.size()))
    raise(ErrorCode::OriginUnreachable, "send failed to " + endpoint);
  Bytes reply = read_frame(fd);
  if (reply.empty()) raise(ErrorCode::OriginUnreachable, "no reply from " + endpoint);
  return PeerMessage::decode(reply);
}

TcpServer::TcpServer(const std::string& listen_addr, MessageHandler handler)
    : addr_(listen_addr), handler_(std::move(handler)) {}

TcpServer::~TcpServer() { stop(); }

void TcpServer::start() {
  auto [host, port] = split_addr(addr_);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.empty() ? nullptr : host.c_str(), port.c_str(), &hints, &res) != 0 ||
      !res)
    raise(ErrorCode::IoError, "cannot resolve listen address " + addr_);

  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (listen_fd_ < 0) {
    ::freeaddrinfo(res);
    raise(ErrorCode::IoError, "cannot create listen socket");
  }
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(listen_fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(listen_fd_, 16) != 0) {
    ::freeaddrinfo(res);
    ::close(listen_fd_);
    listen_fd_ = -1;
    raise(ErrorCode::IoError, "cannot bind " + addr_);
  }
  ::freeaddrinfo(res);

  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  if (::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len) == 0)
    port_ = ntohs(bound.sin_port);

  running_ = true;
  thread_ = std::thread([this] { accept_loop(); });
}

void TcpServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  listen_fd_ = -1;
  if (thread_.joinable()) thread_.join();
}

void TcpServer::accept_loop() {
  std::vector<std::thread> workers;
  while (running_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      continue;
    }
    workers.emplace_back([this, fd] {
      FdGuard guard{fd};
      try {
        Bytes frame = read_frame(fd);
        if (frame.empty()) return;
        PeerMessage reply = handler_(PeerMessage::decode(frame));
        Bytes out = reply.encode();
        send_all(fd, out.data(), out.size());
      } catch (...) {
        // drop the connection; the client surfaces the failure
      }
    });
  }
  for (auto& w : workers)
    if (w.joinable()) w.join();
}

} // namespace icat
