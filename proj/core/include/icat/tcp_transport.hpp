#pragma once

#include <atomic>
#include <thread>

#include "icat/transport.hpp"

namespace icat {

/// One connection per request over "host:port" endpoints.
class TcpTransport : public Transport {
public:
  explicit TcpTransport(int timeout_ms = 5000) : timeout_ms_(timeout_ms) {}
  PeerMessage request(const std::string& endpoint, const PeerMessage& msg) override;

private:
  int timeout_ms_;
};

/// Frame server dispatching each request to a handler; one thread per
/// connection, one request/reply per connection.
class TcpServer {
public:
  TcpServer(const std::string& listen_addr, MessageHandler handler);
  ~TcpServer();

  void start(); // binds, listens, spawns the accept loop
  void stop();
  std::uint16_t port() const { return port_; } // resolved port (after start)

private:
  void accept_loop();

  std::string addr_;
  MessageHandler handler_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread thread_;
};

} // namespace icat
