#include <doctest.h>

#include "icat/policy.hpp"
#include "util.hpp"

using namespace icat;

namespace {

CatalogToken token_of(int n) {
  CatalogToken t;
  t.snapshot_id = static_cast<std::uint64_t>(n);
  t.authenticator = sha256().hash(to_bytes("token" + std::to_string(n)));
  return t;
}

} // namespace

TEST_CASE("token serialization stays within the message budget") {
  CatalogToken t = token_of(123456);
  Bytes wire = t.serialize();
  CHECK(wire.size() == 40);
  CHECK(wire.size() <= 128);
  CHECK(CatalogToken::parse(wire) == t);
  CHECK_THROWS_AS(CatalogToken::parse(BytesView(wire.data(), 10)), Error);
}

TEST_CASE("seal quorum: strict majority of acknowledgements") {
  PolicyConfig p; // 50% / 70%
  CHECK(seal_quorum_met(3, 3, p));
  CHECK_FALSE(seal_quorum_met(5, 10, p)); // 5/10 not > 50%
  CHECK(seal_quorum_met(6, 10, p));
  CHECK_FALSE(seal_quorum_met(0, 0, p));
  CHECK_FALSE(seal_quorum_met(1, 4, p));
}

TEST_CASE("verify decision on the worked vote splits") {
  PolicyConfig p;
  CatalogToken local = token_of(9);
  CatalogToken other = token_of(8);

  SUBCASE("8 local, 1 other, 1 absent of 10: accepted") {
    VoteTally t;
    t.verifier_count = 10;
    for (int i = 0; i < 8; ++i) t.add_vote(local);
    t.add_vote(other);
    CHECK(t.participant_count() == 9);
    CHECK(evaluate_verify(t, local, p) == VerifyDecision::Accepted);
  }
  SUBCASE("7 other, 2 local, 1 absent of 10: mismatch") {
    VoteTally t;
    t.verifier_count = 10;
    for (int i = 0; i < 7; ++i) t.add_vote(other);
    for (int i = 0; i < 2; ++i) t.add_vote(local);
    CHECK(evaluate_verify(t, local, p) == VerifyDecision::Mismatch);
    // and the other token would win a recover poll over the same replies
    PolicyConfig rp;
    VoteTally rt = t;
    auto winner = evaluate_recover(rt, rp);
    REQUIRE(winner);
    CHECK(*winner == other);
  }
  SUBCASE("4 replies of 10: quorum failed") {
    VoteTally t;
    t.verifier_count = 10;
    for (int i = 0; i < 4; ++i) t.add_vote(local);
    CHECK(evaluate_verify(t, local, p) == VerifyDecision::QuorumFailed);
  }
}

TEST_CASE("decision function agrees with the two inequalities for all v <= 12") {
  // Restated adversary bound: with v verifiers, a absentees and s subverted
  // votes for a forged token (the rest voting the honest one), the forged
  // token wins iff (v-a)/v > 1/2 and s >= 0.7 (v-a).
  PolicyConfig p;
  CatalogToken honest = token_of(1);
  CatalogToken forged = token_of(2);

  for (std::uint32_t v = 1; v <= 12; ++v) {
    for (std::uint32_t a = 0; a <= v; ++a) {
      std::uint32_t participants = v - a;
      for (std::uint32_t s = 0; s <= participants; ++s) {
        VoteTally t;
        t.verifier_count = v;
        for (std::uint32_t i = 0; i < s; ++i) t.add_vote(forged);
        for (std::uint32_t i = 0; i < participants - s; ++i) t.add_vote(honest);

        bool quorum = participants * 2 > v;                 // (v-a)/v > 50%
        bool forged_wins = s * 10 >= 7 * participants;      // s >= 70% (v-a)
        bool honest_wins = (participants - s) * 10 >= 7 * participants;

        CAPTURE(v);
        CAPTURE(a);
        CAPTURE(s);
        CHECK((evaluate_verify(t, forged, p) == VerifyDecision::Accepted) ==
              (quorum && forged_wins));
        CHECK((evaluate_verify(t, honest, p) == VerifyDecision::Accepted) ==
              (quorum && honest_wins));
        if (!quorum) {
          CHECK(evaluate_verify(t, honest, p) == VerifyDecision::QuorumFailed);
        }
      }
    }
  }
}

TEST_CASE("recover selection requires a strict supermajority") {
  PolicyConfig p;
  CatalogToken a = token_of(1);
  CatalogToken b = token_of(2);

  SUBCASE("4 preservers agreeing") {
    VoteTally t;
    t.verifier_count = 4;
    for (int i = 0; i < 4; ++i) t.add_vote(a);
    auto winner = evaluate_recover(t, p);
    REQUIRE(winner);
    CHECK(*winner == a);
  }
  SUBCASE("1 reply of 4 fails the quorum") {
    VoteTally t;
    t.verifier_count = 4;
    t.add_vote(a);
    CHECK_FALSE(evaluate_recover(t, p));
  }
  SUBCASE("split vote with no supermajority") {
    VoteTally t;
    t.verifier_count = 4;
    t.add_vote(a);
    t.add_vote(a);
    t.add_vote(b);
    t.add_vote(b);
    CHECK_FALSE(evaluate_recover(t, p));
  }
  SUBCASE("exactly 70% is not strictly more than 70%") {
    VoteTally t;
    t.verifier_count = 10;
    for (int i = 0; i < 7; ++i) t.add_vote(a);
    for (int i = 0; i < 3; ++i) t.add_vote(b);
    CHECK_FALSE(evaluate_recover(t, p));
    t.add_vote(a); // 8 of 11
    auto winner = evaluate_recover(t, p);
    REQUIRE(winner);
    CHECK(*winner == a);
  }
}
