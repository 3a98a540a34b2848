#pragma once

#include <cstdint>
#include <vector>

#include "icat/hash.hpp"
#include "icat/treap_pad.hpp"

namespace icat {

/// One entry of the authenticated append-only list: everything a peer needs
/// to pin a sealed snapshot. snapshot_id is 1-based and equals the element's
/// position in the list.
struct SnapshotRecord {
  std::uint64_t snapshot_id = 0;
  RecordId root = RecordId::nil();
  Digest pra;
  std::uint64_t timestamp = 0; // seconds since the Unix epoch, UTC

  bool operator==(const SnapshotRecord&) const = default;
};

struct ListProofNode {
  std::uint64_t index = 0;
  Digest record_digest;
  std::vector<Digest> links; // predecessor authenticators, level order

  bool operator==(const ListProofNode&) const = default;
};

/// Chain from the target element up to the list head. Verification folds it
/// without any store access.
struct ListProof {
  SnapshotRecord target;
  std::vector<ListProofNode> chain; // chain.front() is the target element

  bool operator==(const ListProof&) const = default;
};

/// H("S" | LE64(snapshot_id) | root (8 octets) | pra | LE64(timestamp))
Digest snapshot_record_digest(const SnapshotRecord& record,
                              const HashFunction& hash = sha256());

/// E_i = H("E" | LE64(i) | record_digest | links...), one link per level l
/// with 2^l dividing i, pointing at element i - 2^l (nil digest when that
/// predecessor does not exist).
Digest list_element_authenticator(std::uint64_t index, const Digest& record_digest,
                                  const std::vector<Digest>& links,
                                  const HashFunction& hash = sha256());

/// Number of skip levels of element i (trailing zeros of i, plus one).
std::size_t list_link_count(std::uint64_t index);

/// Pure function of the proof; throws ProofMismatch unless folding the chain
/// reproduces expected_la. Returns the authenticated record.
SnapshotRecord verify_list_proof(const ListProof& proof, const Digest& expected_la,
                                 const HashFunction& hash = sha256());

/// Append-only skip list with deterministic tower heights, stored in the
/// same record store as the tree so block replication carries both.
class AuthList {
public:
  explicit AuthList(TreapPad& pad); // loads existing elements from the store

  std::uint64_t size() const { return records_.size(); }
  /// Head authenticator; nil digest while empty.
  Digest la() const;

  const SnapshotRecord& record(std::uint64_t snapshot_id) const;

  /// record.snapshot_id must be size() + 1. Returns the new LA.
  Digest append(const SnapshotRecord& record);

  ListProof prove(std::uint64_t snapshot_id) const;

  /// Re-read the list after the underlying pad changed out-of-band
  /// (binary update sessions).
  void reload();

private:
  std::vector<Digest> links_of(std::uint64_t index) const;

  TreapPad* pad_;
  std::vector<RecordId> ids_;
  std::vector<Digest> auths_; // E_i for each element
  std::vector<SnapshotRecord> records_;
};

} // namespace icat
