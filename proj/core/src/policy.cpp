#include "icat/policy.hpp"

#include <algorithm>

#include "icat/errors.hpp"

namespace icat {

Bytes CatalogToken::serialize() const {
  Bytes out;
  put_u64(out, snapshot_id);
  out.insert(out.end(), authenticator.value.begin(), authenticator.value.end());
  return out;
}

CatalogToken CatalogToken::parse(BytesView data) {
  if (data.size() != 8 + Digest::kSize) raise(ErrorCode::CorruptData, "bad token size");
  CatalogToken t;
  t.snapshot_id = load_u64(data.data());
  std::copy(data.begin() + 8, data.end(), t.authenticator.value.begin());
  return t;
}

void VoteTally::add_vote(const CatalogToken& token) {
  for (auto& [t, n] : votes) {
    if (t == token) {
      ++n;
      return;
    }
  }
  votes.emplace_back(token, 1);
}

std::uint32_t VoteTally::participant_count() const {
  std::uint32_t n = 0;
  for (const auto& [t, c] : votes) n += c;
  return n;
}

std::uint32_t VoteTally::votes_for(const CatalogToken& token) const {
  for (const auto& [t, c] : votes)
    if (t == token) return c;
  return 0;
}

namespace {
// a / b > threshold_bp / 10000, in integers
bool exceeds(std::uint64_t a, std::uint64_t b, std::uint32_t threshold_bp) {
  return a * 10000 > static_cast<std::uint64_t>(threshold_bp) * b;
}
// a / b >= threshold_bp / 10000
bool reaches(std::uint64_t a, std::uint64_t b, std::uint32_t threshold_bp) {
  return a * 10000 >= static_cast<std::uint64_t>(threshold_bp) * b;
}
} // namespace

bool seal_quorum_met(std::uint32_t acks, std::uint32_t verifier_count,
                     const PolicyConfig& policy) {
  return verifier_count > 0 && exceeds(acks, verifier_count, policy.quorum_bp);
}

VerifyDecision evaluate_verify(const VoteTally& tally, const CatalogToken& local,
                               const PolicyConfig& policy) {
  std::uint32_t participants = tally.participant_count();
  if (tally.verifier_count == 0 ||
      !exceeds(participants, tally.verifier_count, policy.quorum_bp))
    return VerifyDecision::QuorumFailed;
  if (reaches(tally.votes_for(local), participants, policy.winning_bp))
    return VerifyDecision::Accepted;
  return VerifyDecision::Mismatch;
}

std::optional<CatalogToken> evaluate_recover(const VoteTally& tally,
                                             const PolicyConfig& policy) {
  std::uint32_t participants = tally.participant_count();
  if (tally.verifier_count == 0 ||
      !exceeds(participants, tally.verifier_count, policy.recover_quorum_bp))
    return std::nullopt;
  for (const auto& [token, count] : tally.votes)
    if (exceeds(count, participants, policy.recover_winning_bp)) return token;
  return std::nullopt;
}

} // namespace icat
