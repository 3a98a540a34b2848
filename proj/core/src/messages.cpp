#include "icat/messages.hpp"

#include <algorithm>

#include "icat/errors.hpp"

namespace icat {

namespace {

// field presence per message type
struct Layout {
  bool status = false;
  bool token = false;
  bool snapshot = false;
  bool block = false;
  bool counter = false;
  bool payload = false;
};

Layout layout_of(MsgType type) {
  switch (type) {
    case MsgType::Store: return {.token = true};
    case MsgType::StoreReply: return {.status = true};
    case MsgType::StoredVersionRequest: return {};
    case MsgType::StoredVersionReply: return {.status = true, .token = true};
    case MsgType::RecoverVersionRequest: return {};
    case MsgType::RecoverVersionReply: return {.status = true, .token = true};
    case MsgType::RecoverBegin: return {.snapshot = true};
    case MsgType::RecoverData: return {.snapshot = true, .block = true, .payload = true};
    case MsgType::RecoverGetNext: return {.snapshot = true, .block = true};
    case MsgType::RecoverEndOfData: return {.status = true, .snapshot = true};
    case MsgType::VersionReset: return {.token = true, .counter = true};
    case MsgType::UpdateBegin: return {.snapshot = true};
    case MsgType::UpdateData: return {.snapshot = true, .block = true, .payload = true};
    case MsgType::UpdateGetNext: return {.snapshot = true, .block = true};
    case MsgType::UpdateEndOfData: return {.status = true, .snapshot = true};
  }
  raise(ErrorCode::ProtocolError, "unknown message type");
}

void put_u32_be(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

} // namespace

Bytes PeerMessage::encode() const {
  Layout l = layout_of(type);
  Bytes body;
  body.push_back(static_cast<std::uint8_t>(type));
  body.insert(body.end(), origin_id.begin(), origin_id.end());
  if (l.status) body.push_back(static_cast<std::uint8_t>(status));
  if (l.token) {
    Bytes t = token.serialize();
    body.insert(body.end(), t.begin(), t.end());
  }
  if (l.snapshot) put_u64(body, snapshot_id);
  if (l.block) put_u64(body, block_no);
  if (l.counter) put_u64(body, reset_counter);
  if (l.payload) {
    put_u32(body, static_cast<std::uint32_t>(payload.size()));
    body.insert(body.end(), payload.begin(), payload.end());
  }

  Bytes frame;
  put_u32_be(frame, static_cast<std::uint32_t>(body.size()));
  frame.insert(frame.end(), body.begin(), body.end());
  return frame;
}

PeerMessage PeerMessage::decode(BytesView frame) {
  ByteReader r(frame);
  PeerMessage m;
  std::uint8_t tag = 0;
  BytesView span;
  if (!r.read_u8(tag) || !r.read_bytes(16, span))
    raise(ErrorCode::ProtocolError, "truncated frame header");
  if (tag < static_cast<std::uint8_t>(MsgType::Store) ||
      tag > static_cast<std::uint8_t>(MsgType::UpdateEndOfData))
    raise(ErrorCode::ProtocolError, "unknown message tag " + std::to_string(tag));
  m.type = static_cast<MsgType>(tag);
  std::copy(span.begin(), span.end(), m.origin_id.begin());

  Layout l = layout_of(m.type);
  if (l.status) {
    std::uint8_t s = 0;
    if (!r.read_u8(s) || s > static_cast<std::uint8_t>(MsgStatus::Failed))
      raise(ErrorCode::ProtocolError, "bad status field");
    m.status = static_cast<MsgStatus>(s);
  }
  if (l.token) {
    if (!r.read_bytes(40, span)) raise(ErrorCode::ProtocolError, "truncated token");
    m.token = CatalogToken::parse(span);
  }
  if (l.snapshot && !r.read_u64(m.snapshot_id))
    raise(ErrorCode::ProtocolError, "truncated snapshot id");
  if (l.block && !r.read_u64(m.block_no))
    raise(ErrorCode::ProtocolError, "truncated block number");
  if (l.counter && !r.read_u64(m.reset_counter))
    raise(ErrorCode::ProtocolError, "truncated reset counter");
  if (l.payload) {
    std::uint32_t len = 0;
    if (!r.read_u32(len) || !r.read_bytes(len, span))
      raise(ErrorCode::ProtocolError, "truncated payload");
    m.payload.assign(span.begin(), span.end());
  }
  if (r.remaining() != 0) raise(ErrorCode::ProtocolError, "trailing octets in frame");
  return m;
}

} // namespace icat
