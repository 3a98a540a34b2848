#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "icat/treap_pad.hpp"
#include "util.hpp"

using namespace icat;
using icat::test::TempDir;

namespace {

Bytes key_of(int i) { return to_bytes("key/" + std::to_string(i)); }
Bytes value_of(int i) { return to_bytes("val:" + std::to_string(i)); }

} // namespace

TEST_CASE("single-node authenticator matches the frozen reference") {
  // sha256('N' | sha256('k') | sha256('v') | le64(1) | 0^32 | 0^32),
  // computed independently with python hashlib
  Digest a = node_authenticator(sha256().hash(to_bytes("k")), sha256().hash(to_bytes("v")), 1,
                                nil_digest(), nil_digest(), sha256());
  CHECK(a.hex() == "4bdd442035b8a581d91a6cb7c30970b8f01c69657f1a72bd5dffd72234a3e7f1");

  TempDir dir;
  auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);
  pad->insert(to_bytes("k"), to_bytes("v"));
  SnapshotView v = pad->snapshot();
  CHECK(v.pra == a);
}

TEST_CASE("two-node tree root and authenticator match the frozen reference") {
  // priorities: sha256('a') > sha256('b'), so 'a' is the root and 'b' its
  // right child; pra frozen from an independent fold
  TempDir dir;
  auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);
  pad->insert(to_bytes("b"), to_bytes("2"));
  pad->insert(to_bytes("a"), to_bytes("1"));
  SnapshotView v = pad->snapshot();
  CHECK(v.pra.hex() == "44b9189fb38ee24e0d0bbc5787d29de123ebc1cb7cc0ac0f05bbc9d71b2b4039");
}

TEST_CASE("empty tree seals to the nil authenticator") {
  TempDir dir;
  auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);
  SnapshotView v = pad->snapshot();
  CHECK(v.snapshot_id == 1);
  CHECK(v.root.is_nil());
  CHECK(v.pra.is_nil());
}

TEST_CASE("set-uniqueness: insertion order does not change the authenticator") {
  std::vector<int> keys(200);
  for (int i = 0; i < 200; ++i) keys[i] = i;

  Digest reference;
  std::mt19937 rng(7);
  for (int round = 0; round < 5; ++round) {
    TempDir dir;
    auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);
    std::shuffle(keys.begin(), keys.end(), rng);
    for (int k : keys) pad->insert(key_of(k), value_of(k));
    SnapshotView v = pad->snapshot();
    if (round == 0)
      reference = v.pra;
    else
      CHECK(v.pra == reference);
  }
}

TEST_CASE("duplicate insert and missing amend are rejected") {
  TempDir dir;
  auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);
  pad->insert(to_bytes("k"), to_bytes("v"));
  CHECK(icat::test::code_of([&] { pad->insert(to_bytes("k"), to_bytes("w")); }) ==
        ErrorCode::KeyExists);
  CHECK(icat::test::code_of([&] { pad->amend(to_bytes("missing"), to_bytes("x")); }) ==
        ErrorCode::KeyNotFound);
}

TEST_CASE("historical snapshots stay queryable after later changes") {
  TempDir dir;
  auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);

  pad->insert(to_bytes("doc"), to_bytes("v1"));
  pad->snapshot(); // 1
  pad->amend(to_bytes("doc"), to_bytes("+v2"));
  pad->insert(to_bytes("other"), to_bytes("o"));
  pad->snapshot(); // 2
  pad->snapshot(); // 3, no changes

  auto at1 = pad->get(to_bytes("doc"), 1);
  REQUIRE(at1);
  CHECK(at1->first == to_bytes("v1"));
  CHECK(at1->second == 1);

  auto at2 = pad->get(to_bytes("doc"), 2);
  REQUIRE(at2);
  CHECK(at2->first == to_bytes("v1+v2"));
  CHECK(at2->second == 2);

  auto at3 = pad->get(to_bytes("doc"), 3);
  REQUIRE(at3);
  CHECK(at3->first == to_bytes("v1+v2"));
  CHECK(at3->second == 2); // stored epoch, not query epoch

  CHECK_FALSE(pad->get(to_bytes("other"), 1));
  CHECK(pad->get(to_bytes("other"), 2));
  CHECK(icat::test::code_of([&] { pad->get(to_bytes("doc"), 9); }) ==
        ErrorCode::UnknownSnapshot);
}

TEST_CASE("amends within one epoch collapse into a single version") {
  TempDir dir;
  auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);
  pad->insert(to_bytes("k"), to_bytes("a"));
  pad->amend(to_bytes("k"), to_bytes("b"));
  pad->amend(to_bytes("k"), to_bytes("c"));
  pad->snapshot();
  auto v = pad->get(to_bytes("k"), 1);
  REQUIRE(v);
  CHECK(v->first == to_bytes("abc"));
  CHECK(v->second == 1);
}

TEST_CASE("membership proofs verify and reject tampering") {
  TempDir dir;
  auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);
  for (int i = 0; i < 50; ++i) pad->insert(key_of(i), value_of(i));
  SnapshotView v = pad->snapshot();

  MembershipProof proof = pad->prove(key_of(17), 1);
  VerifiedEntry entry = verify_proof(proof, v.pra);
  CHECK(entry.value == value_of(17));
  CHECK(entry.value_snapshot_id == 1);

  SUBCASE("tampered value") {
    MembershipProof bad = proof;
    bad.target_value[0] ^= 1;
    CHECK_THROWS_AS(verify_proof(bad, v.pra), Error);
  }
  SUBCASE("tampered sibling digest") {
    MembershipProof bad = proof;
    REQUIRE(bad.path.size() > 1);
    bad.path[1].sibling.value[0] ^= 1;
    CHECK_THROWS_AS(verify_proof(bad, v.pra), Error);
  }
  SUBCASE("tampered stored epoch") {
    MembershipProof bad = proof;
    bad.target_value_snapshot_id = 2;
    bad.path[0].value_snapshot_id = 2;
    CHECK_THROWS_AS(verify_proof(bad, v.pra), Error);
  }
  SUBCASE("wrong root authenticator") {
    Digest other = v.pra;
    other.value[0] ^= 1;
    CHECK_THROWS_AS(verify_proof(proof, other), Error);
  }
}

TEST_CASE("verified_get answers presence and absence against the authenticator") {
  TempDir dir;
  auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);
  for (int i = 0; i < 50; ++i) pad->insert(key_of(i), value_of(i));
  SnapshotView v1 = pad->snapshot();
  for (int i = 50; i < 60; ++i) pad->insert(key_of(i), value_of(i));
  SnapshotView v2 = pad->snapshot();

  auto hit = pad->verified_get(key_of(3), 1, v1.pra);
  REQUIRE(hit);
  CHECK(hit->first == value_of(3));

  // key ingested after snapshot 1 is verifiably absent there
  CHECK_FALSE(pad->verified_get(key_of(55), 1, v1.pra));
  CHECK(pad->verified_get(key_of(55), 2, v2.pra));
  CHECK_FALSE(pad->verified_get(to_bytes("never"), 2, v2.pra));

  // a wrong authenticator turns into an integrity failure, not an answer
  Digest wrong = v1.pra;
  wrong.value[5] ^= 0x10;
  CHECK(icat::test::code_of([&] { pad->verified_get(key_of(3), 1, wrong); }) ==
        ErrorCode::IntegrityViolation);
  CHECK(icat::test::code_of([&] { pad->verified_get(to_bytes("never"), 1, wrong); }) ==
        ErrorCode::IntegrityViolation);
}

TEST_CASE("selective caching schedule") {
  // cache iff depth mod skip_no equals (snapshot - 1) mod skip_no
  CHECK(should_cache(0, 1, 0));
  CHECK(should_cache(9, 7, 0));
  CHECK(should_cache(0, 1, 2));
  CHECK_FALSE(should_cache(1, 1, 2));
  CHECK(should_cache(1, 2, 2));
  CHECK_FALSE(should_cache(0, 2, 2));
  CHECK(should_cache(4, 5, 4));
  CHECK_FALSE(should_cache(4, 6, 4));
}

TEST_CASE("skip factor changes storage, never answers") {
  std::map<std::string, std::map<std::uint64_t, Bytes>> oracle;
  std::vector<std::pair<Digest, std::uint64_t>> sizes;
  for (std::uint32_t skip : {0u, 2u, 4u}) {
    TempDir dir;
    auto pad = TreapPad::create(dir.file("p.icat"), 4096, skip);
    std::mt19937 rng(99);
    for (int s = 1; s <= 6; ++s) {
      for (int i = 0; i < 40; ++i) {
        int k = static_cast<int>(rng() % 500);
        Bytes key = key_of(k);
        if (pad->get_open(key))
          pad->amend(key, to_bytes("+"));
        else
          pad->insert(key, value_of(k));
      }
      pad->snapshot();
    }
    // record every key's value at every snapshot
    std::map<std::string, std::map<std::uint64_t, Bytes>> results;
    for (int k = 0; k < 500; ++k) {
      for (std::uint64_t s = 1; s <= 6; ++s) {
        auto v = pad->verified_get(key_of(k), s, pad->view(s).pra);
        if (v) results[std::to_string(k)][s] = v->first;
      }
    }
    if (oracle.empty())
      oracle = results;
    else
      CHECK(results == oracle);
    sizes.emplace_back(pad->view(6).pra, pad->store().file_size());
  }
  // identical trees regardless of skip factor; storage non-increasing
  CHECK(sizes[0].first == sizes[1].first);
  CHECK(sizes[1].first == sizes[2].first);
  CHECK(sizes[1].second <= sizes[0].second);
  CHECK(sizes[2].second <= sizes[1].second);
}

TEST_CASE("pad state survives reopen, including the open epoch") {
  TempDir dir;
  Digest pra1;
  {
    auto pad = TreapPad::create(dir.file("p.icat"), 4096, 2);
    for (int i = 0; i < 30; ++i) pad->insert(key_of(i), value_of(i));
    pra1 = pad->snapshot().pra;
    pad->insert(key_of(100), value_of(100)); // open-epoch change
    pad->store().flush(true);
  }
  {
    auto pad = TreapPad::open(dir.file("p.icat"), 2);
    CHECK(pad->latest_snapshot() == 1);
    CHECK(pad->view(1).pra == pra1);
    auto open_val = pad->get_open(key_of(100));
    REQUIRE(open_val);
    CHECK(open_val->first == value_of(100));
    SnapshotView v2 = pad->snapshot(); // seals the reopened open epoch
    CHECK(v2.snapshot_id == 2);
    CHECK(pad->verified_get(key_of(100), 2, v2.pra));
    CHECK(pad->verified_get(key_of(5), 1, pra1));
  }
}

TEST_CASE("bounded fat nodes: long version histories relocate without losing history") {
  TempDir dir;
  auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);
  pad->insert(to_bytes("hot"), to_bytes("v"));
  for (int i = 0; i < 40; ++i) pad->insert(key_of(i), value_of(i));
  pad->snapshot();

  Bytes expected = to_bytes("v");
  // each epoch appends 200 octets; the value soon exceeds what one record
  // can hold alongside its history, forcing node copies
  for (int s = 2; s <= 20; ++s) {
    Bytes chunk(200, static_cast<std::uint8_t>('a' + s % 26));
    pad->amend(to_bytes("hot"), chunk);
    expected.insert(expected.end(), chunk.begin(), chunk.end());
    pad->snapshot();
  }

  Bytes rolling = to_bytes("v");
  for (std::uint64_t s = 1; s <= 20; ++s) {
    if (s >= 2) {
      Bytes chunk(200, static_cast<std::uint8_t>('a' + s % 26));
      rolling.insert(rolling.end(), chunk.begin(), chunk.end());
    }
    auto v = pad->verified_get(to_bytes("hot"), s, pad->view(s).pra);
    REQUIRE(v);
    CHECK(v->first == rolling);
  }
  auto final_val = pad->get(to_bytes("hot"), 20);
  REQUIRE(final_val);
  CHECK(final_val->first == expected);

  // a value too large for any record is rejected up front
  CHECK(icat::test::code_of([&] {
          pad->insert(to_bytes("huge"), Bytes(5000, 1));
        }) == ErrorCode::RecordTooLarge);
}

TEST_CASE("block replication reproduces the origin bit-exactly") {
  TempDir dir;
  auto origin = TreapPad::create(dir.file("origin.icat"), 4096, 2);
  auto replica = TreapPad::create_replica(dir.file("replica.icat"), 4096, 2);

  std::mt19937 rng(5);
  for (int s = 1; s <= 5; ++s) {
    for (int i = 0; i < 30; ++i) {
      int k = static_cast<int>(rng() % 200);
      if (origin->get_open(key_of(k)))
        origin->amend(key_of(k), to_bytes("+"));
      else
        origin->insert(key_of(k), value_of(k));
    }
    SnapshotView v = origin->snapshot();

    replica->binary_update_begin(v.snapshot_id);
    auto block = origin->get_first_block_of_snapshot(v.snapshot_id);
    while (block) {
      replica->binary_update_block(v.snapshot_id, *block);
      block = origin->get_next_block_of_snapshot(v.snapshot_id, block->block_no);
    }
    replica->binary_update_commit(v.snapshot_id);

    CHECK(replica->latest_snapshot() == v.snapshot_id);
    CHECK(replica->view(v.snapshot_id).pra == v.pra);
  }

  // replica answers match for every key and snapshot
  for (int k = 0; k < 200; ++k) {
    for (std::uint64_t s = 1; s <= 5; ++s) {
      auto a = origin->verified_get(key_of(k), s, origin->view(s).pra);
      auto b = replica->verified_get(key_of(k), s, replica->view(s).pra);
      CHECK(a == b);
    }
  }
}

TEST_CASE("replication rejects gaps and tampered streams") {
  TempDir dir;
  auto origin = TreapPad::create(dir.file("origin.icat"), 4096, 0);
  // a wide first epoch and a tiny second one, so plenty of pages keep their
  // epoch-1 stamp after the second seal
  for (int i = 0; i < 200; ++i) origin->insert(key_of(i), value_of(i));
  origin->snapshot();
  origin->insert(key_of(200), value_of(200));
  origin->snapshot();
  REQUIRE(origin->store().blocks_of_epoch(2).size() < origin->store().block_count());

  auto replica = TreapPad::create_replica(dir.file("replica.icat"), 4096, 0);
  // a session can only move the replica forward
  CHECK(icat::test::code_of([&] { replica->binary_update_begin(0); }) ==
        ErrorCode::SnapshotGap);

  SUBCASE("missing intermediate blocks fail the commit verification") {
    // jump straight to snapshot 2 but stream only the blocks last touched by
    // epoch 2; the epoch-1 pages are absent and the chain cannot be rebuilt
    replica->binary_update_begin(2);
    auto block = origin->get_first_block_of_snapshot(2);
    while (block) {
      replica->binary_update_block(2, *block);
      block = origin->get_next_block_of_snapshot(2, block->block_no);
    }
    CHECK_THROWS_AS(replica->binary_update_commit(2), Error);
    CHECK(replica->latest_snapshot() == 0);
  }

  SUBCASE("a complete multi-epoch stream commits in one session") {
    replica->binary_update_begin(2);
    for (std::uint64_t e = 1; e <= 2; ++e) {
      auto block = origin->get_first_block_of_snapshot(e);
      while (block) {
        replica->binary_update_block(2, *block);
        block = origin->get_next_block_of_snapshot(e, block->block_no);
      }
    }
    replica->binary_update_commit(2);
    CHECK(replica->latest_snapshot() == 2);
    for (int i = 0; i <= 200; i += 7) {
      auto got = replica->verified_get(key_of(i), 2, replica->view(2).pra);
      REQUIRE(got);
      CHECK(got->first == value_of(i));
    }
  }

  SUBCASE("tampered page fails the commit verification") {
    replica->binary_update_begin(1);
    auto block = origin->get_first_block_of_snapshot(1);
    while (block) {
      BlockImage image = *block;
      // flip one octet of the structure roots record (top of page 0's heap)
      if (image.block_no == 0) image.payload[image.payload.size() - 40] ^= 0x40;
      replica->binary_update_block(1, image);
      block = origin->get_next_block_of_snapshot(1, image.block_no);
    }
    CHECK_THROWS_AS(replica->binary_update_commit(1), Error);
    CHECK(replica->latest_snapshot() == 0);
  }
}
