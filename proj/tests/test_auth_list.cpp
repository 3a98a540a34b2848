#include <doctest.h>

#include "icat/auth_list.hpp"
#include "util.hpp"

using namespace icat;
using icat::test::TempDir;

namespace {

SnapshotRecord make_record(std::uint64_t sid) {
  SnapshotRecord r;
  r.snapshot_id = sid;
  r.root = sid % 3 == 0 ? RecordId::nil() : RecordId{sid, static_cast<std::uint16_t>(sid % 7)};
  r.pra = sha256().hash(to_bytes("pra" + std::to_string(sid)));
  r.timestamp = 1700000000 + sid * 60;
  return r;
}

// Independent reference: fold the entire record sequence from scratch,
// keeping every element authenticator.
std::vector<Digest> brute_force_auths(const std::vector<SnapshotRecord>& records) {
  std::vector<Digest> auths;
  for (std::size_t i = 1; i <= records.size(); ++i) {
    std::vector<Digest> links;
    for (std::size_t l = 0; l < list_link_count(i); ++l) {
      std::size_t pred = i - (std::size_t{1} << l);
      links.push_back(pred == 0 ? nil_digest() : auths[pred - 1]);
    }
    auths.push_back(
        list_element_authenticator(i, snapshot_record_digest(records[i - 1]), links));
  }
  return auths;
}

} // namespace

TEST_CASE("first element authenticator matches the frozen reference") {
  // sha256('E' | le64(1) | sha256('S' | le64(1) | ff*8 | sha256('x') |
  // le64(1700000000)) | 0^32), computed independently with python hashlib
  SnapshotRecord r;
  r.snapshot_id = 1;
  r.root = RecordId::nil();
  r.pra = sha256().hash(to_bytes("x"));
  r.timestamp = 1700000000;

  TempDir dir;
  auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);
  AuthList list(*pad);
  Digest la = list.append(r);
  CHECK(la.hex() == "bca403408f8eddfccfa908a701ad12c55942ec5e09d1ab4f7902c8bf1556ca1b");
}

TEST_CASE("appends are sequential only") {
  TempDir dir;
  auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);
  AuthList list(*pad);
  list.append(make_record(1));
  list.append(make_record(2));
  list.append(make_record(3));
  CHECK(icat::test::code_of([&] { list.append(make_record(5)); }) ==
        ErrorCode::NonSequentialAppend);
  CHECK(icat::test::code_of([&] { list.append(make_record(3)); }) ==
        ErrorCode::NonSequentialAppend);
}

TEST_CASE("identical record sequences give identical authenticators") {
  TempDir d1, d2;
  auto p1 = TreapPad::create(d1.file("a.icat"), 4096, 0);
  auto p2 = TreapPad::create(d2.file("b.icat"), 8192, 3);
  AuthList l1(*p1), l2(*p2);
  for (std::uint64_t i = 1; i <= 20; ++i) {
    Digest a = l1.append(make_record(i));
    Digest b = l2.append(make_record(i));
    CHECK(a == b);
  }
}

TEST_CASE("365-element list: every proof verifies and matches the brute-force fold") {
  TempDir dir;
  auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);
  AuthList list(*pad);

  std::vector<SnapshotRecord> records;
  for (std::uint64_t i = 1; i <= 365; ++i) {
    records.push_back(make_record(i));
    list.append(records.back());
  }
  std::vector<Digest> reference = brute_force_auths(records);
  CHECK(list.la() == reference.back());

  std::size_t max_chain = 0;
  for (std::uint64_t i = 1; i <= 365; ++i) {
    ListProof proof = list.prove(i);
    max_chain = std::max(max_chain, proof.chain.size());
    SnapshotRecord got = verify_list_proof(proof, list.la());
    CHECK(got == records[i - 1]);
  }
  CHECK(list.prove(365).chain.size() == 1);
  CHECK(max_chain <= 2 * 9); // O(log 365) links
}

TEST_CASE("proofs bind every field of the record") {
  TempDir dir;
  auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);
  AuthList list(*pad);
  for (std::uint64_t i = 1; i <= 10; ++i) list.append(make_record(i));
  ListProof proof = list.prove(4);

  SUBCASE("valid") { CHECK(verify_list_proof(proof, list.la()) == make_record(4)); }
  SUBCASE("altered timestamp") {
    proof.target.timestamp += 1;
    CHECK_THROWS_AS(verify_list_proof(proof, list.la()), Error);
  }
  SUBCASE("altered pra") {
    proof.target.pra.value[0] ^= 1;
    CHECK_THROWS_AS(verify_list_proof(proof, list.la()), Error);
  }
  SUBCASE("altered link digest") {
    proof.chain.back().links[0].value[0] ^= 1;
    CHECK_THROWS_AS(verify_list_proof(proof, list.la()), Error);
  }
  SUBCASE("proof against a truncated list's authenticator") {
    TempDir dir2;
    auto pad2 = TreapPad::create(dir2.file("q.icat"), 4096, 0);
    AuthList shorter(*pad2);
    for (std::uint64_t i = 1; i <= 3; ++i) shorter.append(make_record(i));
    ListProof p3 = list.prove(3);
    CHECK(verify_list_proof(shorter.prove(3), shorter.la()) == make_record(3));
    CHECK_THROWS_AS(verify_list_proof(p3, shorter.la()), Error);
  }
}

TEST_CASE("later appends never change earlier provable content") {
  TempDir dir;
  auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);
  AuthList list(*pad);
  for (std::uint64_t i = 1; i <= 8; ++i) list.append(make_record(i));

  for (std::uint64_t i = 9; i <= 40; ++i) {
    list.append(make_record(i));
    for (std::uint64_t j = 1; j <= 8; ++j)
      CHECK(verify_list_proof(list.prove(j), list.la()) == make_record(j));
  }
}

TEST_CASE("list state survives reopen through the shared store") {
  TempDir dir;
  Digest la;
  {
    auto pad = TreapPad::create(dir.file("p.icat"), 4096, 0);
    AuthList list(*pad);
    for (std::uint64_t i = 1; i <= 12; ++i) list.append(make_record(i));
    la = list.la();
    pad->store().flush(true);
  }
  auto pad = TreapPad::open(dir.file("p.icat"), 0);
  AuthList list(*pad);
  CHECK(list.size() == 12);
  CHECK(list.la() == la);
  CHECK(verify_list_proof(list.prove(7), la) == make_record(7));
}
