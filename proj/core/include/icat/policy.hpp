#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "icat/hash.hpp"

namespace icat {

/// The unit published to verifiers at each seal: latest snapshot id plus the
/// list authenticator. Serializes to 40 octets.
struct CatalogToken {
  std::uint64_t snapshot_id = 0;
  Digest authenticator;

  bool operator==(const CatalogToken&) const = default;

  Bytes serialize() const;
  static CatalogToken parse(BytesView data); // CorruptData on bad size
};

/// Vote thresholds as basis points (1/100 of a percent) so the decision
/// functions stay in integer arithmetic. Defaults: quorum 50%, winning 70%
/// for both the verify and recover flows.
struct PolicyConfig {
  std::uint32_t quorum_bp = 5000;
  std::uint32_t winning_bp = 7000;
  std::uint32_t recover_quorum_bp = 5000;
  std::uint32_t recover_winning_bp = 7000;
  std::uint32_t reply_timeout_s = 5;
};

/// Replies from one polling round, aggregated per token.
struct VoteTally {
  std::vector<std::pair<CatalogToken, std::uint32_t>> votes;
  std::uint32_t verifier_count = 0;

  void add_vote(const CatalogToken& token);
  std::uint32_t participant_count() const; // verifier_count minus absentees
  std::uint32_t votes_for(const CatalogToken& token) const;
};

/// Seal succeeds iff positive acks / verifier_count > quorum.
bool seal_quorum_met(std::uint32_t acks, std::uint32_t verifier_count,
                     const PolicyConfig& policy);

enum class VerifyDecision {
  Accepted,     // local token won the vote
  QuorumFailed, // too few replies
  Mismatch,     // quorum reached but another token won, or local fell short
};

/// Default decision function: participants/verifiers > quorum AND votes for
/// the local token >= winning * participants.
VerifyDecision evaluate_verify(const VoteTally& tally, const CatalogToken& local,
                               const PolicyConfig& policy);

/// Winning token of a recover poll: participants/preservers > recover quorum
/// AND its votes > recover winning * participants. nullopt when no token
/// qualifies (callers report a quorum failure).
std::optional<CatalogToken> evaluate_recover(const VoteTally& tally,
                                             const PolicyConfig& policy);

} // namespace icat
