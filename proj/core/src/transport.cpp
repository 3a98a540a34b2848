#include "icat/transport.hpp"

#include "icat/errors.hpp"

namespace icat {

void SimTransport::register_endpoint(const std::string& name, MessageHandler handler) {
  endpoints_[name].handler = std::move(handler);
}

void SimTransport::remove_endpoint(const std::string& name) { endpoints_.erase(name); }

void SimTransport::set_down(const std::string& name, bool down) {
  auto it = endpoints_.find(name);
  if (it != endpoints_.end()) it->second.down = down;
}

void SimTransport::set_frame_hook(const std::string& name, std::function<void(Bytes&)> hook) {
  auto it = endpoints_.find(name);
  if (it != endpoints_.end()) it->second.frame_hook = std::move(hook);
}

PeerMessage SimTransport::request(const std::string& endpoint, const PeerMessage& msg) {
  auto it = endpoints_.find(endpoint);
  if (it == endpoints_.end() || it->second.down || !it->second.handler)
    raise(ErrorCode::OriginUnreachable, "endpoint unreachable: " + endpoint);
  Endpoint& ep = it->second;

  // Round-trip through the codec so traffic counts and tampering hooks see
  // exactly what a socket would carry.
  Bytes frame = msg.encode();
  ep.bytes_in += frame.size();
  if (ep.frame_hook) ep.frame_hook(frame);
  PeerMessage delivered = PeerMessage::decode(BytesView(frame).subspan(4));

  PeerMessage reply = ep.handler(delivered);
  Bytes reply_frame = reply.encode();
  ep.bytes_out += reply_frame.size();
  return PeerMessage::decode(BytesView(reply_frame).subspan(4));
}

std::uint64_t SimTransport::bytes_to(const std::string& endpoint) const {
  auto it = endpoints_.find(endpoint);
  return it == endpoints_.end() ? 0 : it->second.bytes_in;
}

std::uint64_t SimTransport::bytes_from(const std::string& endpoint) const {
  auto it = endpoints_.find(endpoint);
  return it == endpoints_.end() ? 0 : it->second.bytes_out;
}

void SimTransport::reset_counters() {
  for (auto& [name, ep] : endpoints_) {
    ep.bytes_in = 0;
    ep.bytes_out = 0;
  }
}

} // namespace icat
