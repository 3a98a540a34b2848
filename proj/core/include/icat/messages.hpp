#pragma once

#include <cstdint>

#include "icat/config.hpp"
#include "icat/policy.hpp"

namespace icat {

enum class MsgType : std::uint8_t {
  Store = 1,
  StoreReply,
  StoredVersionRequest,
  StoredVersionReply,
  RecoverVersionRequest,
  RecoverVersionReply,
  RecoverBegin,
  RecoverData,
  RecoverGetNext,
  RecoverEndOfData,
  VersionReset,
  UpdateBegin,
  UpdateData,
  UpdateGetNext,
  UpdateEndOfData,
};

enum class MsgStatus : std::uint8_t {
  Ok = 0,
  StaleToken,
  NoToken,
  NoReplica,
  UnknownSnapshot,
  Unauthorized,
  Failed,
};

/// One protocol frame. Which fields are meaningful depends on the type; the
/// codec writes and reads only those. Wire form: u32 big-endian length, then
/// type u8, origin_id (16 octets), body.
struct PeerMessage {
  MsgType type = MsgType::Store;
  OriginId origin_id{};
  MsgStatus status = MsgStatus::Ok;
  CatalogToken token;
  std::uint64_t snapshot_id = 0;
  std::uint64_t block_no = 0;
  std::uint64_t reset_counter = 0;
  Bytes payload; // one page for Data frames

  bool operator==(const PeerMessage&) const = default;

  /// Full frame including the length prefix.
  Bytes encode() const;
  /// Parses a frame body (everything after the length prefix).
  /// Raises ProtocolError on unknown tags or malformed bodies.
  static PeerMessage decode(BytesView frame);
};

} // namespace icat
