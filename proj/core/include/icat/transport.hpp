#pragma once

#include <functional>
#include <map>
#include <string>

#include "icat/messages.hpp"

namespace icat {

/// Request/reply channel to named endpoints. Implementations surface
/// delivery failure as OriginUnreachable; no retries here, callers decide.
class Transport {
public:
  virtual ~Transport() = default;
  virtual PeerMessage request(const std::string& endpoint, const PeerMessage& msg) = 0;
};

using MessageHandler = std::function<PeerMessage(const PeerMessage&)>;

/// In-process transport with a deterministic scheduler: requests run the
/// registered handler synchronously; per-endpoint byte counters measure
/// traffic through the real codec, so size bounds are testable without
/// sockets.
class SimTransport : public Transport {
public:
  void register_endpoint(const std::string& name, MessageHandler handler);
  void remove_endpoint(const std::string& name);
  /// Simulates an unreachable or absent peer.
  void set_down(const std::string& name, bool down);
  /// Intercepts frames bound for an endpoint (fault injection); the hook may
  /// mutate the raw frame bytes before decoding.
  void set_frame_hook(const std::string& name, std::function<void(Bytes&)> hook);

  PeerMessage request(const std::string& endpoint, const PeerMessage& msg) override;

  std::uint64_t bytes_to(const std::string& endpoint) const;   // requests
  std::uint64_t bytes_from(const std::string& endpoint) const; // replies
  void reset_counters();

private:
  struct Endpoint {
    MessageHandler handler;
    bool down = false;
    std::function<void(Bytes&)> frame_hook;
    std::uint64_t bytes_in = 0;
    std::uint64_t bytes_out = 0;
  };
  std::map<std::string, Endpoint> endpoints_;
};

} // namespace icat
