#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "icat/hash.hpp"
#include "icat/record_store.hpp"

namespace icat {

/// One sealed snapshot of the dictionary: its root node and the root
/// authenticator (PRA) committing to the whole tree at that snapshot.
struct SnapshotView {
  std::uint64_t snapshot_id = 0;
  RecordId root = RecordId::nil();
  Digest pra;
};

enum class ProofSide : std::uint8_t { Self = 0, Left = 1, Right = 2 };

/// One node on the path from the target element to the root. For ancestors,
/// `side` records on which side the lower node hangs and `sibling` is the
/// other child's authenticator.
struct ProofEntry {
  Digest key_digest;
  Digest value_digest;
  std::uint64_t value_snapshot_id = 0;
  ProofSide side = ProofSide::Self;
  Digest sibling;

  bool operator==(const ProofEntry&) const = default;
};

/// Path material sufficient to recompute a PRA from one element, with no
/// access to the store during verification.
struct MembershipProof {
  std::uint64_t snapshot_id = 0;
  std::vector<ProofEntry> path; // target first, root last
  Bytes target_value;
  std::uint64_t target_value_snapshot_id = 0;
  Digest target_left;  // the target node's child authenticators
  Digest target_right;

  bool operator==(const MembershipProof&) const = default;

  Bytes serialize() const;
};

struct VerifiedEntry {
  Digest key_digest;
  Bytes value;
  std::uint64_t value_snapshot_id = 0;
};

/// A(N, s) = H("N" | H(key) | H(value at s) | LE64(value_snapshot_id) |
///             A(left at s) | A(right at s)), nil child = 32 zero octets.
Digest node_authenticator(const Digest& key_digest, const Digest& value_digest,
                          std::uint64_t value_snapshot_id, const Digest& left,
                          const Digest& right, const HashFunction& hash);

/// Pure function of its inputs; performs no store reads.
/// Throws ProofMismatch when folding the path does not reproduce expected_pra.
VerifiedEntry verify_proof(const MembershipProof& proof, const Digest& expected_pra,
                           const HashFunction& hash = sha256());

/// Selective authenticator caching schedule. True iff skip_no = 0 or
/// depth mod skip_no = (snapshot - 1) mod skip_no.
bool should_cache(std::uint64_t depth, std::uint64_t snapshot, std::uint32_t skip_no);

/// Persistent authenticated dictionary over a deterministic treap with
/// bounded fat nodes. Keys are arbitrary octet sequences; priority is the
/// hash of the key, so the tree shape depends only on the element set.
class TreapPad {
public:
  static std::unique_ptr<TreapPad> create(const std::string& path, std::uint32_t page_size,
                                          std::uint32_t skip_no,
                                          const HashFunction& hash = sha256());
  static std::unique_ptr<TreapPad> open(const std::string& path, std::uint32_t skip_no,
                                        const HashFunction& hash = sha256());
  /// An empty store with no structures yet; populated exclusively through
  /// binary-update sessions (replicas, recovery rebuilds).
  static std::unique_ptr<TreapPad> create_replica(const std::string& path,
                                                  std::uint32_t page_size,
                                                  std::uint32_t skip_no,
                                                  const HashFunction& hash = sha256());

  void insert(BytesView key, BytesView value);
  void amend(BytesView key, BytesView suffix);

  /// Seals the open epoch: computes authenticators over everything dirtied
  /// this epoch, records the snapshot, advances the store epoch and syncs.
  SnapshotView snapshot();
  /// Split form for callers that must write more epoch-stamped data (the
  /// snapshot record list) between sealing the tree and advancing the epoch.
  SnapshotView seal_tree();
  void finish_seal();

  std::uint64_t latest_snapshot() const { return views_.size(); }
  std::uint64_t open_epoch() const { return store_->current_epoch(); }
  const SnapshotView& view(std::uint64_t snapshot_id) const;

  /// Value as of a sealed snapshot, and the epoch it was stored.
  std::optional<std::pair<Bytes, std::uint64_t>> get(BytesView key,
                                                     std::uint64_t snapshot_id) const;
  /// Unverified read against the open epoch (host reconciliation loop).
  std::optional<std::pair<Bytes, std::uint64_t>> get_open(BytesView key) const;

  MembershipProof prove(BytesView key, std::uint64_t snapshot_id) const;

  /// Proof-checked read: every returned value (and every absence) is bound
  /// to expected_pra. Any page corruption on the lookup path surfaces as
  /// IntegrityViolation, never as wrong data.
  std::optional<std::pair<Bytes, std::uint64_t>> verified_get(BytesView key,
                                                              std::uint64_t snapshot_id,
                                                              const Digest& expected_pra) const;

  // Block-level synchronization interface.
  std::optional<BlockImage> get_first_block_of_snapshot(std::uint64_t snapshot_id) const;
  std::optional<BlockImage> get_next_block_of_snapshot(std::uint64_t snapshot_id,
                                                       std::uint64_t block_no) const;
  void binary_update_begin(std::uint64_t snapshot_id);
  void binary_update_block(std::uint64_t snapshot_id, const BlockImage& image);
  void binary_update_commit(std::uint64_t snapshot_id);
  void binary_update_abort();

  /// Root authenticator recomputed from node contents alone, ignoring all
  /// cached authenticators. Used as the commit verification hook.
  Digest recompute_pra(std::uint64_t snapshot_id) const;

  RecordStore& store() { return *store_; }
  const RecordStore& store() const { return *store_; }
  const HashFunction& hash() const { return *hash_; }
  std::uint32_t skip_no() const { return skip_no_; }

private:
  struct VersionEntry {
    std::uint64_t snapshot_id = 0;
    RecordId left = RecordId::nil();
    RecordId right = RecordId::nil();
    bool has_value = false;
    Bytes value;
  };
  struct AuthEntry {
    std::uint64_t snapshot_id = 0;
    Digest auth;
  };
  struct NodeRecord {
    Bytes key;
    std::vector<VersionEntry> entries;
    std::vector<AuthEntry> auths;

    Bytes serialize() const;
    static NodeRecord parse(BytesView data);
    const VersionEntry* entry_at(std::uint64_t snapshot_id) const;
    // (value, value_snapshot_id) as of snapshot_id; nullopt if none yet
    std::optional<std::pair<BytesView, std::uint64_t>> value_at(std::uint64_t snapshot_id) const;
  };
  struct PathStep {
    RecordId id;
    NodeRecord node;
    ProofSide came_from = ProofSide::Self; // side of the next-lower node
  };

  TreapPad(std::unique_ptr<RecordStore> store, std::uint32_t skip_no, const HashFunction& hash);

  NodeRecord load_node(RecordId id) const;
  RecordId write_node(RecordId id, const NodeRecord& node, std::uint64_t epoch);
  RecordId copy_node(const NodeRecord& node, std::uint64_t epoch);
  Digest priority(BytesView key) const;
  void set_open_state(NodeRecord& node, std::uint64_t epoch, RecordId left, RecordId right,
                      const Bytes* value) const;

  RecordId insert_rec(RecordId id, BytesView key, BytesView value, const Digest& key_priority,
                      std::uint64_t epoch);
  void mark_dirty(RecordId id) { dirty_.insert(id.packed()); }

  Digest resolve_auth(RecordId id, std::uint64_t snapshot_id) const;
  std::pair<RecordId, Digest> seal_visit(RecordId id, std::uint64_t depth, std::uint64_t epoch);
  Digest recompute_auth(RecordId id, std::uint64_t snapshot_id) const;
  void ensure_change_index() const;
  std::uint64_t last_subtree_change(RecordId id, std::uint64_t snapshot_id) const;

  void load_superblock();
  void save_superblock();
  void load_chain();
  void rebuild_dirty();
  RecordId root_at(std::uint64_t snapshot_id) const;
  std::vector<PathStep> descend(BytesView key, RecordId root, std::uint64_t snapshot_id,
                                bool* found) const;

  friend class AuthList;
  RecordId aasl_head() const { return aasl_head_; }
  std::uint64_t aasl_count() const { return aasl_count_; }
  void set_aasl_state(RecordId head, std::uint64_t count);

  std::unique_ptr<RecordStore> store_;
  const HashFunction* hash_;
  std::uint32_t skip_no_;

  bool has_superblock_ = false;
  std::vector<SnapshotView> views_;
  RecordId chain_head_ = RecordId::nil();
  RecordId aasl_head_ = RecordId::nil();
  std::uint64_t aasl_count_ = 0;
  RecordId open_root_ = RecordId::nil();

  std::unordered_set<std::uint64_t> dirty_; // nodes whose authenticator changes this epoch
  mutable std::unordered_map<std::uint64_t, std::vector<std::uint64_t>> change_index_;
  mutable bool change_index_complete_ = false;

  std::optional<std::uint64_t> session_snapshot_;
};

} // namespace icat
