#include <doctest.h>

#include "icat/messages.hpp"
#include "util.hpp"

using namespace icat;

namespace {

PeerMessage sample(MsgType type) {
  PeerMessage m;
  m.type = type;
  m.origin_id = origin_id_of("origin1");
  m.status = MsgStatus::Ok;
  m.token.snapshot_id = 42;
  m.token.authenticator = sha256().hash(to_bytes("la"));
  m.snapshot_id = 42;
  m.block_no = 7;
  m.reset_counter = 1700000000;
  m.payload = Bytes(64, 0xA5);
  return m;
}

PeerMessage round_trip(const PeerMessage& m) {
  Bytes frame = m.encode();
  // strip the length prefix, as a transport would
  return PeerMessage::decode(BytesView(frame).subspan(4));
}

} // namespace

TEST_CASE("every message type survives the codec") {
  for (int t = 1; t <= 15; ++t) {
    PeerMessage m = sample(static_cast<MsgType>(t));
    PeerMessage back = round_trip(m);
    CAPTURE(t);
    CHECK(back.type == m.type);
    CHECK(back.origin_id == m.origin_id);
    // fields not carried by this type come back defaulted; re-encoding must
    // be byte-identical either way
    CHECK(back.encode() == m.encode());
  }
}

TEST_CASE("token-bearing messages stay within 128 octets") {
  for (MsgType t : {MsgType::Store, MsgType::StoreReply, MsgType::StoredVersionRequest,
                    MsgType::StoredVersionReply}) {
    PeerMessage m = sample(t);
    m.payload.clear();
    CHECK(m.encode().size() <= 128);
  }
}

TEST_CASE("malformed frames are protocol errors") {
  auto expect_protocol_error = [](Bytes frame) {
    CHECK(icat::test::code_of([&] { PeerMessage::decode(frame); }) ==
          ErrorCode::ProtocolError);
  };

  expect_protocol_error({});           // empty
  expect_protocol_error({0, 1, 2});    // truncated header
  Bytes unknown_tag(17, 0);
  unknown_tag[0] = 99;
  expect_protocol_error(unknown_tag);  // tag outside the protocol

  // a Store frame cut short inside its token
  Bytes store = sample(MsgType::Store).encode();
  expect_protocol_error(Bytes(store.begin() + 4, store.end() - 10));
  // trailing junk after a complete body
  Bytes full(store.begin() + 4, store.end());
  full.push_back(0);
  expect_protocol_error(full);
}

TEST_CASE("update data frames carry one page verbatim") {
  PeerMessage m = sample(MsgType::UpdateData);
  m.payload = Bytes(4096, 0x3C);
  PeerMessage back = round_trip(m);
  CHECK(back.payload == m.payload);
  CHECK(back.snapshot_id == 42);
  CHECK(back.block_no == 7);
  // framing overhead: length(4) + tag(1) + origin(16) + sid(8) + block(8) + len(4)
  CHECK(m.encode().size() == 4096 + 41);
}
