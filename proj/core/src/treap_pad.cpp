#include "icat/treap_pad.hpp"

#include <algorithm>
#include <cassert>

namespace icat {

namespace {

constexpr std::uint8_t kFlagLeft = 0x01;
constexpr std::uint8_t kFlagRight = 0x02;
constexpr std::uint8_t kFlagValue = 0x04;

// Superblock record, always at (0, 0): heads of the snapshot record chain
// and the authenticated list, plus the open-epoch root pointer, all stored
// inside the same block space so that block replication carries them along.
// Layout: chain_head 8 | chain_count u64 | aasl_head 8 | aasl_count u64 |
// open_root 8.
constexpr std::size_t kSuperblockSize = 40;

RecordId superblock_id() { return RecordId{0, 0}; }

bool key_less(BytesView a, BytesView b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

bool key_eq(BytesView a, BytesView b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

} // namespace

bool should_cache(std::uint64_t depth, std::uint64_t snapshot, std::uint32_t skip_no) {
  if (skip_no == 0) return true;
  return depth % skip_no == (snapshot - 1) % skip_no;
}

Digest node_authenticator(const Digest& key_digest, const Digest& value_digest,
                          std::uint64_t value_snapshot_id, const Digest& left,
                          const Digest& right, const HashFunction& hash) {
  auto h = hash.begin();
  const std::uint8_t tag = 'N';
  h->update(BytesView(&tag, 1));
  h->update(key_digest);
  h->update(value_digest);
  h->update_u64(value_snapshot_id);
  h->update(left);
  h->update(right);
  return h->finish();
}

VerifiedEntry verify_proof(const MembershipProof& proof, const Digest& expected_pra,
                           const HashFunction& hash) {
  if (proof.path.empty() || proof.path.front().side != ProofSide::Self)
    raise(ErrorCode::ProofMismatch, "malformed proof path");
  const ProofEntry& target = proof.path.front();
  if (hash.hash(proof.target_value) != target.value_digest)
    raise(ErrorCode::ProofMismatch, "target value does not match its digest");
  if (proof.target_value_snapshot_id != target.value_snapshot_id)
    raise(ErrorCode::ProofMismatch, "target snapshot id mismatch");

  Digest acc = node_authenticator(target.key_digest, target.value_digest,
                                  target.value_snapshot_id, proof.target_left,
                                  proof.target_right, hash);
  for (std::size_t i = 1; i < proof.path.size(); ++i) {
    const ProofEntry& e = proof.path[i];
    if (e.side == ProofSide::Self)
      raise(ErrorCode::ProofMismatch, "interior proof entry marked self");
    Digest left = e.side == ProofSide::Left ? acc : e.sibling;
    Digest right = e.side == ProofSide::Left ? e.sibling : acc;
    acc = node_authenticator(e.key_digest, e.value_digest, e.value_snapshot_id, left, right, hash);
  }
  if (acc != expected_pra)
    raise(ErrorCode::ProofMismatch, "proof does not fold to the expected root authenticator");
  return VerifiedEntry{target.key_digest, proof.target_value, target.value_snapshot_id};
}

Bytes MembershipProof::serialize() const {
  Bytes out;
  put_u64(out, snapshot_id);
  put_u16(out, static_cast<std::uint16_t>(path.size()));
  for (const auto& e : path) {
    out.insert(out.end(), e.key_digest.value.begin(), e.key_digest.value.end());
    out.insert(out.end(), e.value_digest.value.begin(), e.value_digest.value.end());
    put_u64(out, e.value_snapshot_id);
    out.push_back(static_cast<std::uint8_t>(e.side));
    out.insert(out.end(), e.sibling.value.begin(), e.sibling.value.end());
  }
  put_u32(out, static_cast<std::uint32_t>(target_value.size()));
  out.insert(out.end(), target_value.begin(), target_value.end());
  put_u64(out, target_value_snapshot_id);
  out.insert(out.end(), target_left.value.begin(), target_left.value.end());
  out.insert(out.end(), target_right.value.begin(), target_right.value.end());
  return out;
}

// ---------------------------------------------------------------------------
// NodeRecord serialization (pinned layout for bit-exact replication)

Bytes TreapPad::NodeRecord::serialize() const {
  Bytes out;
  put_u16(out, static_cast<std::uint16_t>(key.size()));
  out.insert(out.end(), key.begin(), key.end());
  put_u16(out, static_cast<std::uint16_t>(entries.size()));
  for (const auto& e : entries) {
    put_u64(out, e.snapshot_id);
    std::uint8_t flags = 0;
    if (!e.left.is_nil()) flags |= kFlagLeft;
    if (!e.right.is_nil()) flags |= kFlagRight;
    if (e.has_value) flags |= kFlagValue;
    out.push_back(flags);
    if (!e.left.is_nil()) e.left.encode(out);
    if (!e.right.is_nil()) e.right.encode(out);
    if (e.has_value) {
      put_u16(out, static_cast<std::uint16_t>(e.value.size()));
      out.insert(out.end(), e.value.begin(), e.value.end());
    }
  }
  put_u16(out, static_cast<std::uint16_t>(auths.size()));
  for (const auto& a : auths) {
    put_u64(out, a.snapshot_id);
    out.insert(out.end(), a.auth.value.begin(), a.auth.value.end());
  }
  return out;
}

TreapPad::NodeRecord TreapPad::NodeRecord::parse(BytesView data) {
  ByteReader r(data);
  NodeRecord n;
  std::uint16_t key_len = 0;
  BytesView span;
  if (!r.read_u16(key_len) || !r.read_bytes(key_len, span))
    raise(ErrorCode::CorruptData, "truncated node key");
  n.key.assign(span.begin(), span.end());
  std::uint16_t entry_count = 0;
  if (!r.read_u16(entry_count) || entry_count == 0)
    raise(ErrorCode::CorruptData, "node without version entries");
  n.entries.reserve(entry_count);
  std::uint64_t prev_sid = 0;
  for (std::uint16_t i = 0; i < entry_count; ++i) {
    VersionEntry e;
    std::uint8_t flags = 0;
    if (!r.read_u64(e.snapshot_id) || !r.read_u8(flags))
      raise(ErrorCode::CorruptData, "truncated version entry");
    if (e.snapshot_id == 0 || (i > 0 && e.snapshot_id <= prev_sid))
      raise(ErrorCode::CorruptData, "version entries not strictly increasing");
    prev_sid = e.snapshot_id;
    if (flags & ~(kFlagLeft | kFlagRight | kFlagValue))
      raise(ErrorCode::CorruptData, "unknown version entry flags");
    if (flags & kFlagLeft) {
      if (!r.read_bytes(8, span)) raise(ErrorCode::CorruptData, "truncated child pointer");
      e.left = RecordId::decode(span.data());
    }
    if (flags & kFlagRight) {
      if (!r.read_bytes(8, span)) raise(ErrorCode::CorruptData, "truncated child pointer");
      e.right = RecordId::decode(span.data());
    }
    if (flags & kFlagValue) {
      std::uint16_t value_len = 0;
      if (!r.read_u16(value_len) || !r.read_bytes(value_len, span))
        raise(ErrorCode::CorruptData, "truncated value");
      e.has_value = true;
      e.value.assign(span.begin(), span.end());
    }
    n.entries.push_back(std::move(e));
  }
  if (!n.entries.front().has_value)
    raise(ErrorCode::CorruptData, "first version entry carries no value");
  std::uint16_t auth_count = 0;
  if (!r.read_u16(auth_count)) raise(ErrorCode::CorruptData, "truncated auth cache");
  n.auths.reserve(auth_count);
  prev_sid = 0;
  for (std::uint16_t i = 0; i < auth_count; ++i) {
    AuthEntry a;
    if (!r.read_u64(a.snapshot_id) || !r.read_bytes(Digest::kSize, span))
      raise(ErrorCode::CorruptData, "truncated auth entry");
    if (i > 0 && a.snapshot_id <= prev_sid)
      raise(ErrorCode::CorruptData, "auth entries not strictly increasing");
    prev_sid = a.snapshot_id;
    std::copy(span.begin(), span.end(), a.auth.value.begin());
    n.auths.push_back(a);
  }
  if (r.remaining() != 0) raise(ErrorCode::CorruptData, "trailing octets in node record");
  return n;
}

const TreapPad::VersionEntry* TreapPad::NodeRecord::entry_at(std::uint64_t snapshot_id) const {
  for (auto it = entries.rbegin(); it != entries.rend(); ++it)
    if (it->snapshot_id <= snapshot_id) return &*it;
  return nullptr;
}

std::optional<std::pair<BytesView, std::uint64_t>> TreapPad::NodeRecord::value_at(
    std::uint64_t snapshot_id) const {
  for (auto it = entries.rbegin(); it != entries.rend(); ++it)
    if (it->snapshot_id <= snapshot_id && it->has_value)
      return std::make_pair(BytesView(it->value), it->snapshot_id);
  return std::nullopt;
}

// ---------------------------------------------------------------------------

TreapPad::TreapPad(std::unique_ptr<RecordStore> store, std::uint32_t skip_no,
                   const HashFunction& hash)
    : store_(std::move(store)), hash_(&hash), skip_no_(skip_no) {}

std::unique_ptr<TreapPad> TreapPad::create(const std::string& path, std::uint32_t page_size,
                                           std::uint32_t skip_no, const HashFunction& hash) {
  auto pad = std::unique_ptr<TreapPad>(new TreapPad(RecordStore::create(path, page_size),
                                                    skip_no, hash));
  Bytes sb(kSuperblockSize, 0xFF); // nil heads and root, zero counts
  store_u64(sb.data() + 8, 0);
  store_u64(sb.data() + 24, 0);
  RecordId id = pad->store_->insert_record(sb);
  assert(id == superblock_id());
  (void)id;
  pad->has_superblock_ = true;
  pad->change_index_complete_ = true;
  pad->store_->flush(true);
  return pad;
}

std::unique_ptr<TreapPad> TreapPad::create_replica(const std::string& path,
                                                   std::uint32_t page_size,
                                                   std::uint32_t skip_no,
                                                   const HashFunction& hash) {
  auto pad = std::unique_ptr<TreapPad>(new TreapPad(RecordStore::create(path, page_size),
                                                    skip_no, hash));
  pad->has_superblock_ = false;
  pad->change_index_complete_ = true;
  return pad;
}

std::unique_ptr<TreapPad> TreapPad::open(const std::string& path, std::uint32_t skip_no,
                                         const HashFunction& hash) {
  auto pad = std::unique_ptr<TreapPad>(new TreapPad(RecordStore::open(path), skip_no, hash));
  if (pad->store_->block_count() == 0) {
    pad->has_superblock_ = false; // replica shell, nothing replicated yet
    pad->change_index_complete_ = true;
    return pad;
  }
  pad->load_superblock();
  pad->load_chain();
  pad->change_index_complete_ = pad->views_.empty();
  pad->rebuild_dirty();
  return pad;
}

// The in-memory set of open-epoch changes does not survive a restart;
// rediscover it from version entries stamped with the open epoch.
void TreapPad::rebuild_dirty() {
  dirty_.clear();
  if (open_root_.is_nil()) return;
  std::uint64_t epoch = store_->current_epoch();
  auto dfs = [&](auto&& self, RecordId id) -> bool {
    if (id.is_nil()) return false;
    NodeRecord n = load_node(id);
    const VersionEntry* st = n.entry_at(epoch);
    if (!st) raise(ErrorCode::CorruptData, "reachable node with no state");
    bool own = std::any_of(n.entries.begin(), n.entries.end(),
                           [&](const VersionEntry& e) { return e.snapshot_id == epoch; });
    bool left = self(self, st->left);
    bool right = self(self, st->right);
    if (own || left || right) {
      dirty_.insert(id.packed());
      return true;
    }
    return false;
  };
  dfs(dfs, open_root_);
}

void TreapPad::load_superblock() {
  Bytes sb = store_->read_record(superblock_id());
  if (sb.size() != kSuperblockSize)
    raise(ErrorCode::CorruptData, "bad superblock record");
  chain_head_ = RecordId::decode(sb.data());
  // chain count at offset 8 is redundant with the walked chain length
  aasl_head_ = RecordId::decode(sb.data() + 16);
  aasl_count_ = load_u64(sb.data() + 24);
  open_root_ = RecordId::decode(sb.data() + 32);
  has_superblock_ = true;
}

void TreapPad::save_superblock() {
  Bytes sb;
  chain_head_.encode(sb);
  put_u64(sb, views_.size());
  aasl_head_.encode(sb);
  put_u64(sb, aasl_count_);
  open_root_.encode(sb);
  RecordId id = store_->update_record(superblock_id(), sb);
  assert(id == superblock_id());
  (void)id;
}

void TreapPad::set_aasl_state(RecordId head, std::uint64_t count) {
  aasl_head_ = head;
  aasl_count_ = count;
  save_superblock();
}

void TreapPad::load_chain() {
  views_.clear();
  RecordId id = chain_head_;
  while (!id.is_nil()) {
    Bytes rec = store_->read_record(id);
    if (rec.size() != 56) raise(ErrorCode::CorruptData, "bad snapshot chain record");
    SnapshotView v;
    v.snapshot_id = load_u64(rec.data());
    v.root = RecordId::decode(rec.data() + 8);
    std::copy(rec.begin() + 16, rec.begin() + 48, v.pra.value.begin());
    views_.push_back(v);
    id = RecordId::decode(rec.data() + 48);
    if (views_.size() > 1 &&
        views_[views_.size() - 2].snapshot_id != v.snapshot_id + 1)
      raise(ErrorCode::CorruptData, "snapshot chain not sequential");
  }
  std::reverse(views_.begin(), views_.end());
  if (!views_.empty() && views_.front().snapshot_id != 1)
    raise(ErrorCode::CorruptData, "snapshot chain does not start at 1");
}

const SnapshotView& TreapPad::view(std::uint64_t snapshot_id) const {
  if (snapshot_id == 0 || snapshot_id > views_.size())
    raise(ErrorCode::UnknownSnapshot, "snapshot " + std::to_string(snapshot_id));
  return views_[snapshot_id - 1];
}

RecordId TreapPad::root_at(std::uint64_t snapshot_id) const {
  return view(snapshot_id).root;
}

TreapPad::NodeRecord TreapPad::load_node(RecordId id) const {
  return NodeRecord::parse(store_->read_record(id));
}

Digest TreapPad::priority(BytesView key) const { return hash_->hash(key); }

void TreapPad::set_open_state(NodeRecord& node, std::uint64_t epoch, RecordId left,
                              RecordId right, const Bytes* value) const {
  if (!node.entries.empty() && node.entries.back().snapshot_id == epoch) {
    VersionEntry& e = node.entries.back();
    e.left = left;
    e.right = right;
    if (value) {
      e.has_value = true;
      e.value = *value;
    }
  } else {
    VersionEntry e;
    e.snapshot_id = epoch;
    e.left = left;
    e.right = right;
    if (value) {
      e.has_value = true;
      e.value = *value;
    }
    node.entries.push_back(std::move(e));
  }
}

RecordId TreapPad::copy_node(const NodeRecord& node, std::uint64_t epoch) {
  const VersionEntry* st = node.entry_at(epoch);
  auto val = node.value_at(epoch);
  if (!st || !val) raise(ErrorCode::CorruptData, "node copy of stateless node");

  NodeRecord fresh;
  fresh.key = node.key;
  if (val->second == epoch) {
    VersionEntry e;
    e.snapshot_id = epoch;
    e.left = st->left;
    e.right = st->right;
    e.has_value = true;
    e.value.assign(val->first.begin(), val->first.end());
    fresh.entries.push_back(std::move(e));
  } else {
    // Keep the value under its original snapshot id so the stored-epoch
    // claim carried in proofs survives the copy. The copy is only reachable
    // from the open epoch onward, so the early entry is never consulted for
    // older snapshots.
    VersionEntry first;
    first.snapshot_id = val->second;
    first.has_value = true;
    first.value.assign(val->first.begin(), val->first.end());
    fresh.entries.push_back(std::move(first));
    VersionEntry top;
    top.snapshot_id = epoch;
    top.left = st->left;
    top.right = st->right;
    fresh.entries.push_back(std::move(top));
  }
  RecordId id = store_->insert_record(fresh.serialize());
  mark_dirty(id);
  return id;
}

RecordId TreapPad::write_node(RecordId id, const NodeRecord& node, std::uint64_t epoch) {
  try {
    RecordId out = store_->update_record(id, node.serialize());
    mark_dirty(out);
    return out;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::RecordTooLarge) throw;
    return copy_node(node, epoch); // bounded fat node overflow
  }
}

RecordId TreapPad::insert_rec(RecordId id, BytesView key, BytesView value,
                              const Digest& key_priority, std::uint64_t epoch) {
  if (id.is_nil()) {
    NodeRecord n;
    n.key.assign(key.begin(), key.end());
    VersionEntry e;
    e.snapshot_id = epoch;
    e.has_value = true;
    e.value.assign(value.begin(), value.end());
    n.entries.push_back(std::move(e));
    Bytes ser = n.serialize();
    if (ser.size() > store_->max_record_size()) {
      NodeRecord minimal;
      minimal.key = n.key;
      minimal.entries.push_back(VersionEntry{epoch, RecordId::nil(), RecordId::nil(), true, {}});
      if (minimal.serialize().size() > store_->max_record_size())
        raise(ErrorCode::KeyTooLarge, "key exceeds what a minimal node can hold");
      raise(ErrorCode::RecordTooLarge, "key/value pair exceeds the fat-node bound");
    }
    RecordId nid = store_->insert_record(ser);
    mark_dirty(nid);
    return nid;
  }

  NodeRecord n = load_node(id);
  if (key_eq(key, n.key)) raise(ErrorCode::KeyExists, "key already present");
  const VersionEntry* st = n.entry_at(epoch);
  if (!st) raise(ErrorCode::CorruptData, "reachable node with no state");
  bool go_left = key_less(key, n.key);
  RecordId old_child = go_left ? st->left : st->right;
  RecordId left = st->left;
  RecordId right = st->right;

  RecordId new_child = insert_rec(old_child, key, value, key_priority, epoch);
  if (go_left)
    left = new_child;
  else
    right = new_child;

  RecordId my_id = id;
  if (new_child != old_child) {
    set_open_state(n, epoch, left, right, nullptr);
    my_id = write_node(id, n, epoch);
    if (my_id != id) n = load_node(my_id);
  }

  // Heap fix: the subtree root below may now out-prioritize this node.
  NodeRecord child = load_node(new_child);
  Digest child_prio = priority(child.key);
  Digest my_prio = priority(n.key);
  if ((go_left && child_prio > my_prio) || (!go_left && child_prio > my_prio)) {
    const VersionEntry* cst = child.entry_at(epoch);
    if (!cst) raise(ErrorCode::CorruptData, "reachable node with no state");
    if (go_left) {
      // rotate right: this node's left takes the child's right subtree
      set_open_state(n, epoch, cst->right, right, nullptr);
      my_id = write_node(my_id, n, epoch);
      set_open_state(child, epoch, cst->left, my_id, nullptr);
    } else {
      set_open_state(n, epoch, left, cst->left, nullptr);
      my_id = write_node(my_id, n, epoch);
      set_open_state(child, epoch, my_id, cst->right, nullptr);
    }
    RecordId risen = write_node(new_child, child, epoch);
    mark_dirty(my_id);
    return risen;
  }

  mark_dirty(my_id);
  return my_id;
}

void TreapPad::insert(BytesView key, BytesView value) {
  if (session_snapshot_) raise(ErrorCode::NotInUpdateSession, "mutation during update session");
  if (!has_superblock_) raise(ErrorCode::IoError, "pad not initialized");
  std::uint64_t epoch = store_->current_epoch();
  Digest prio = priority(key);
  RecordId before = open_root_;
  open_root_ = insert_rec(open_root_, key, value, prio, epoch);
  if (open_root_ != before) save_superblock();
}

void TreapPad::amend(BytesView key, BytesView suffix) {
  if (session_snapshot_) raise(ErrorCode::NotInUpdateSession, "mutation during update session");
  if (!has_superblock_) raise(ErrorCode::IoError, "pad not initialized");
  std::uint64_t epoch = store_->current_epoch();

  bool found = false;
  auto path = descend(key, open_root_, epoch, &found);
  if (!found) raise(ErrorCode::KeyNotFound, "amend of missing key");

  PathStep& target = path.back();
  auto val = target.node.value_at(epoch);
  if (!val) raise(ErrorCode::CorruptData, "node without value");
  Bytes combined(val->first.begin(), val->first.end());
  combined.insert(combined.end(), suffix.begin(), suffix.end());
  const VersionEntry* st = target.node.entry_at(epoch);
  set_open_state(target.node, epoch, st->left, st->right, &combined);
  RecordId new_id = write_node(target.id, target.node, epoch);

  // Fix ancestor pointers when the record moved or the node was copied.
  RecordId child_was = target.id;
  RecordId child_now = new_id;
  for (auto it = path.rbegin() + 1; it != path.rend(); ++it) {
    mark_dirty(it->id);
    if (child_now == child_was) {
      child_was = it->id;
      child_now = it->id;
      continue;
    }
    const VersionEntry* ast = it->node.entry_at(epoch);
    RecordId left = ast->left;
    RecordId right = ast->right;
    if (left == child_was)
      left = child_now;
    else if (right == child_was)
      right = child_now;
    else
      raise(ErrorCode::CorruptData, "parent does not reference child");
    set_open_state(it->node, epoch, left, right, nullptr);
    child_was = it->id;
    child_now = write_node(it->id, it->node, epoch);
  }
  if (child_was == open_root_ && child_now != open_root_) {
    open_root_ = child_now;
    save_superblock();
  }
  mark_dirty(path.back().id);
  mark_dirty(new_id);
}

std::vector<TreapPad::PathStep> TreapPad::descend(BytesView key, RecordId root,
                                                  std::uint64_t snapshot_id, bool* found) const {
  std::vector<PathStep> path;
  *found = false;
  RecordId cur = root;
  while (!cur.is_nil()) {
    PathStep step;
    step.id = cur;
    step.node = load_node(cur);
    const VersionEntry* st = step.node.entry_at(snapshot_id);
    if (!st) raise(ErrorCode::CorruptData, "reachable node with no state at snapshot");
    if (key_eq(key, step.node.key)) {
      step.came_from = ProofSide::Self;
      path.push_back(std::move(step));
      *found = true;
      return path;
    }
    if (key_less(key, step.node.key)) {
      step.came_from = ProofSide::Left;
      cur = st->left;
    } else {
      step.came_from = ProofSide::Right;
      cur = st->right;
    }
    path.push_back(std::move(step));
  }
  return path;
}

// ---------------------------------------------------------------------------
// Authenticators

std::uint64_t TreapPad::last_subtree_change(RecordId id, std::uint64_t snapshot_id) const {
  auto it = change_index_.find(id.packed());
  if (it == change_index_.end() || it->second.empty())
    raise(ErrorCode::CorruptData, "no change history for reachable node");
  const auto& sids = it->second;
  auto pos = std::upper_bound(sids.begin(), sids.end(), snapshot_id);
  if (pos == sids.begin())
    raise(ErrorCode::CorruptData, "node has no change at or before snapshot");
  return *(pos - 1);
}

void TreapPad::ensure_change_index() const {
  if (change_index_complete_) return;
  change_index_.clear();
  std::unordered_map<std::uint64_t, NodeRecord> nodes;
  auto node_of = [&](RecordId id) -> const NodeRecord& {
    auto it = nodes.find(id.packed());
    if (it != nodes.end()) return it->second;
    return nodes.emplace(id.packed(), load_node(id)).first->second;
  };
  for (const auto& v : views_) {
    std::uint64_t s = v.snapshot_id;
    auto dfs = [&](auto&& self, RecordId id) -> bool {
      if (id.is_nil()) return false;
      const NodeRecord& n = node_of(id);
      const VersionEntry* st = n.entry_at(s);
      if (!st) raise(ErrorCode::CorruptData, "reachable node with no state at snapshot");
      bool own = !n.entries.empty() &&
                 std::any_of(n.entries.begin(), n.entries.end(),
                             [&](const VersionEntry& e) { return e.snapshot_id == s; });
      bool left = self(self, st->left);
      bool right = self(self, st->right);
      if (own || left || right) {
        change_index_[id.packed()].push_back(s);
        return true;
      }
      return false;
    };
    dfs(dfs, v.root);
  }
  change_index_complete_ = true;
}

Digest TreapPad::resolve_auth(RecordId id, std::uint64_t snapshot_id) const {
  ensure_change_index();
  std::uint64_t change = last_subtree_change(id, snapshot_id);
  NodeRecord n = load_node(id);
  for (auto it = n.auths.rbegin(); it != n.auths.rend(); ++it) {
    if (it->snapshot_id > snapshot_id) continue;
    if (it->snapshot_id >= change) return it->auth;
    break; // older entries are stale for this snapshot
  }
  const VersionEntry* st = n.entry_at(snapshot_id);
  auto val = n.value_at(snapshot_id);
  if (!st || !val) raise(ErrorCode::CorruptData, "node without state during recomputation");
  Digest left = st->left.is_nil() ? nil_digest() : resolve_auth(st->left, snapshot_id);
  Digest right = st->right.is_nil() ? nil_digest() : resolve_auth(st->right, snapshot_id);
  return node_authenticator(hash_->hash(n.key), hash_->hash(val->first), val->second, left,
                            right, *hash_);
}

Digest TreapPad::recompute_auth(RecordId id, std::uint64_t snapshot_id) const {
  NodeRecord n = load_node(id);
  const VersionEntry* st = n.entry_at(snapshot_id);
  auto val = n.value_at(snapshot_id);
  if (!st || !val) raise(ErrorCode::CorruptData, "node without state during recomputation");
  Digest left = st->left.is_nil() ? nil_digest() : recompute_auth(st->left, snapshot_id);
  Digest right = st->right.is_nil() ? nil_digest() : recompute_auth(st->right, snapshot_id);
  return node_authenticator(hash_->hash(n.key), hash_->hash(val->first), val->second, left,
                            right, *hash_);
}

Digest TreapPad::recompute_pra(std::uint64_t snapshot_id) const {
  RecordId root = root_at(snapshot_id);
  if (root.is_nil()) return nil_digest();
  return recompute_auth(root, snapshot_id);
}

std::pair<RecordId, Digest> TreapPad::seal_visit(RecordId id, std::uint64_t depth,
                                                 std::uint64_t epoch) {
  NodeRecord n = load_node(id);
  const VersionEntry* st = n.entry_at(epoch);
  if (!st) raise(ErrorCode::CorruptData, "dirty node with no state");
  RecordId left = st->left;
  RecordId right = st->right;

  Digest left_auth = nil_digest();
  Digest right_auth = nil_digest();
  bool moved_child = false;
  if (!left.is_nil()) {
    if (dirty_.contains(left.packed())) {
      auto [nl, a] = seal_visit(left, depth + 1, epoch);
      left_auth = a;
      if (nl != left) {
        left = nl;
        moved_child = true;
      }
    } else {
      left_auth = resolve_auth(left, epoch);
    }
  }
  if (!right.is_nil()) {
    if (dirty_.contains(right.packed())) {
      auto [nr, a] = seal_visit(right, depth + 1, epoch);
      right_auth = a;
      if (nr != right) {
        right = nr;
        moved_child = true;
      }
    } else {
      right_auth = resolve_auth(right, epoch);
    }
  }

  if (moved_child) {
    set_open_state(n, epoch, left, right, nullptr);
    RecordId moved = write_node(id, n, epoch);
    if (moved != id) {
      id = moved;
      n = load_node(id);
    }
  }

  auto val = n.value_at(epoch);
  if (!val) raise(ErrorCode::CorruptData, "node without value");
  Digest auth = node_authenticator(hash_->hash(n.key), hash_->hash(val->first), val->second,
                                   left_auth, right_auth, *hash_);

  if (should_cache(depth, epoch, skip_no_)) {
    n.auths.push_back(AuthEntry{epoch, auth});
    try {
      RecordId moved = store_->update_record(id, n.serialize());
      id = moved;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::RecordTooLarge) throw;
      // Fat-node bound reached: drop the cache entry, proofs recompute it.
      n.auths.pop_back();
    }
  }
  change_index_[id.packed()].push_back(epoch);
  return {id, auth};
}

SnapshotView TreapPad::seal_tree() {
  if (session_snapshot_) raise(ErrorCode::NotInUpdateSession, "seal during update session");
  if (!has_superblock_) raise(ErrorCode::IoError, "pad not initialized");
  ensure_change_index();
  std::uint64_t epoch = store_->current_epoch();
  if (epoch != views_.size() + 1)
    raise(ErrorCode::IoError, "store epoch out of step with snapshot chain");

  Digest pra = nil_digest();
  if (!open_root_.is_nil()) {
    if (dirty_.contains(open_root_.packed())) {
      auto [root, auth] = seal_visit(open_root_, 0, epoch);
      open_root_ = root;
      pra = auth;
    } else {
      pra = resolve_auth(open_root_, epoch);
    }
  }

  Bytes rec;
  put_u64(rec, epoch);
  open_root_.encode(rec);
  rec.insert(rec.end(), pra.value.begin(), pra.value.end());
  chain_head_.encode(rec);
  chain_head_ = store_->insert_record(rec);

  SnapshotView v{epoch, open_root_, pra};
  views_.push_back(v);
  save_superblock();
  dirty_.clear();
  return v;
}

void TreapPad::finish_seal() {
  store_->set_current_epoch(views_.size() + 1);
  store_->flush(true);
}

SnapshotView TreapPad::snapshot() {
  SnapshotView v = seal_tree();
  finish_seal();
  return v;
}

// ---------------------------------------------------------------------------
// Queries

std::optional<std::pair<Bytes, std::uint64_t>> TreapPad::get(BytesView key,
                                                             std::uint64_t snapshot_id) const {
  if (snapshot_id == 0) return std::nullopt;
  RecordId root = root_at(snapshot_id); // throws UnknownSnapshot beyond the chain
  bool found = false;
  auto path = descend(key, root, snapshot_id, &found);
  if (!found) return std::nullopt;
  auto val = path.back().node.value_at(snapshot_id);
  if (!val) raise(ErrorCode::CorruptData, "node without value");
  return std::make_pair(Bytes(val->first.begin(), val->first.end()), val->second);
}

std::optional<std::pair<Bytes, std::uint64_t>> TreapPad::get_open(BytesView key) const {
  if (open_root_.is_nil()) return std::nullopt;
  bool found = false;
  auto path = descend(key, open_root_, store_->current_epoch(), &found);
  if (!found) return std::nullopt;
  auto val = path.back().node.value_at(store_->current_epoch());
  if (!val) raise(ErrorCode::CorruptData, "node without value");
  return std::make_pair(Bytes(val->first.begin(), val->first.end()), val->second);
}

MembershipProof TreapPad::prove(BytesView key, std::uint64_t snapshot_id) const {
  ensure_change_index();
  RecordId root = root_at(snapshot_id);
  bool found = false;
  auto path = descend(key, root, snapshot_id, &found);
  if (!found) raise(ErrorCode::KeyNotFound, "prove of missing key");

  MembershipProof proof;
  proof.snapshot_id = snapshot_id;

  const PathStep& target = path.back();
  const VersionEntry* st = target.node.entry_at(snapshot_id);
  auto val = target.node.value_at(snapshot_id);
  if (!st || !val) raise(ErrorCode::CorruptData, "target node without state");
  proof.target_value.assign(val->first.begin(), val->first.end());
  proof.target_value_snapshot_id = val->second;
  proof.target_left = st->left.is_nil() ? nil_digest() : resolve_auth(st->left, snapshot_id);
  proof.target_right = st->right.is_nil() ? nil_digest() : resolve_auth(st->right, snapshot_id);

  ProofEntry te;
  te.key_digest = hash_->hash(target.node.key);
  te.value_digest = hash_->hash(val->first);
  te.value_snapshot_id = val->second;
  te.side = ProofSide::Self;
  te.sibling = nil_digest();
  proof.path.push_back(te);

  for (std::size_t i = path.size() - 1; i-- > 0;) {
    const PathStep& anc = path[i];
    const VersionEntry* ast = anc.node.entry_at(snapshot_id);
    auto aval = anc.node.value_at(snapshot_id);
    if (!ast || !aval) raise(ErrorCode::CorruptData, "ancestor node without state");
    ProofEntry e;
    e.key_digest = hash_->hash(anc.node.key);
    e.value_digest = hash_->hash(aval->first);
    e.value_snapshot_id = aval->second;
    e.side = anc.came_from;
    RecordId sibling = anc.came_from == ProofSide::Left ? ast->right : ast->left;
    e.sibling = sibling.is_nil() ? nil_digest() : resolve_auth(sibling, snapshot_id);
    proof.path.push_back(e);
  }
  return proof;
}

std::optional<std::pair<Bytes, std::uint64_t>> TreapPad::verified_get(
    BytesView key, std::uint64_t snapshot_id, const Digest& expected_pra) const {
  try {
    RecordId root = root_at(snapshot_id);
    if (root.is_nil()) {
      if (expected_pra != nil_digest())
        raise(ErrorCode::ProofMismatch, "empty tree against non-nil authenticator");
      return std::nullopt;
    }
    ensure_change_index();
    bool found = false;
    auto path = descend(key, root, snapshot_id, &found);
    if (found) {
      MembershipProof proof = prove(key, snapshot_id);
      VerifiedEntry entry = verify_proof(proof, expected_pra, *hash_);
      return std::make_pair(entry.value, entry.value_snapshot_id);
    }
    // Verified absence: fold the traversed path, including both child
    // authenticators of the boundary node, back to the expected PRA. If the
    // fold matches, every comparison taken was authentic and the key is
    // genuinely absent at this snapshot.
    Digest acc;
    for (std::size_t i = path.size(); i-- > 0;) {
      const PathStep& step = path[i];
      const VersionEntry* st = step.node.entry_at(snapshot_id);
      auto val = step.node.value_at(snapshot_id);
      if (!st || !val) raise(ErrorCode::CorruptData, "node without state");
      Digest left, right;
      if (i + 1 == path.size()) {
        left = st->left.is_nil() ? nil_digest() : resolve_auth(st->left, snapshot_id);
        right = st->right.is_nil() ? nil_digest() : resolve_auth(st->right, snapshot_id);
      } else if (step.came_from == ProofSide::Left) {
        left = acc;
        right = st->right.is_nil() ? nil_digest() : resolve_auth(st->right, snapshot_id);
      } else {
        right = acc;
        left = st->left.is_nil() ? nil_digest() : resolve_auth(st->left, snapshot_id);
      }
      acc = node_authenticator(hash_->hash(step.node.key), hash_->hash(val->first), val->second,
                               left, right, *hash_);
    }
    if (acc != expected_pra)
      raise(ErrorCode::ProofMismatch, "absence path does not fold to the root authenticator");
    return std::nullopt;
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::ProofMismatch:
      case ErrorCode::CorruptData:
      case ErrorCode::CorruptBlock:
      case ErrorCode::BadRecordId:
        raise(ErrorCode::IntegrityViolation, e.what());
      default:
        throw;
    }
  }
}

// ---------------------------------------------------------------------------
// Block-level synchronization

std::optional<BlockImage> TreapPad::get_first_block_of_snapshot(std::uint64_t snapshot_id) const {
  if (snapshot_id == 0 || snapshot_id > views_.size())
    raise(ErrorCode::UnknownSnapshot, "snapshot " + std::to_string(snapshot_id));
  auto blocks = store_->blocks_of_epoch(snapshot_id);
  if (blocks.empty()) return std::nullopt;
  return store_->read_block(blocks.front());
}

std::optional<BlockImage> TreapPad::get_next_block_of_snapshot(std::uint64_t snapshot_id,
                                                               std::uint64_t block_no) const {
  if (snapshot_id == 0 || snapshot_id > views_.size())
    raise(ErrorCode::UnknownSnapshot, "snapshot " + std::to_string(snapshot_id));
  auto blocks = store_->blocks_of_epoch(snapshot_id);
  auto it = std::upper_bound(blocks.begin(), blocks.end(), block_no);
  if (it == blocks.end()) return std::nullopt;
  return store_->read_block(*it);
}

void TreapPad::binary_update_begin(std::uint64_t snapshot_id) {
  if (session_snapshot_) raise(ErrorCode::NotInUpdateSession, "session already open");
  // A session may jump several snapshots ahead (catch-up after an outage,
  // full rebuilds); commit verifies the whole chain reaches the target.
  if (snapshot_id <= views_.size())
    raise(ErrorCode::SnapshotGap, "target snapshot " + std::to_string(snapshot_id) +
                                      " not ahead of " + std::to_string(views_.size()));
  store_->begin_update_session();
  session_snapshot_ = snapshot_id;
}

void TreapPad::binary_update_block(std::uint64_t snapshot_id, const BlockImage& image) {
  if (!session_snapshot_ || *session_snapshot_ != snapshot_id)
    raise(ErrorCode::NotInUpdateSession, "no matching update session");
  if (image.epoch_stamp == 0 || image.epoch_stamp > snapshot_id)
    raise(ErrorCode::CorruptBlock, "block stamped beyond the target snapshot");
  store_->write_block(image);
}

void TreapPad::binary_update_abort() {
  if (!session_snapshot_) return;
  store_->abort_update_session();
  session_snapshot_.reset();
}

void TreapPad::binary_update_commit(std::uint64_t snapshot_id) {
  if (!session_snapshot_ || *session_snapshot_ != snapshot_id)
    raise(ErrorCode::NotInUpdateSession, "no matching update session");
  try {
    // Verify inside the session overlay before touching the file: the chain
    // must extend to exactly this snapshot and the PRA must be reproducible
    // from node contents alone.
    load_superblock();
    load_chain();
    if (views_.size() != snapshot_id)
      raise(ErrorCode::CorruptData, "replicated chain does not reach the target snapshot");
    const SnapshotView& v = views_.back();
    Digest actual = v.root.is_nil() ? nil_digest() : recompute_auth(v.root, snapshot_id);
    if (actual != v.pra)
      raise(ErrorCode::ProofMismatch, "replicated tree does not reproduce the recorded PRA");
  } catch (...) {
    store_->abort_update_session();
    session_snapshot_.reset();
    // Reload pre-session state; the pad stays at snapshot_id - 1.
    if (store_->block_count() > 0) {
      load_superblock();
      load_chain();
      open_root_ = views_.empty() ? RecordId::nil() : views_.back().root;
    } else {
      views_.clear();
      has_superblock_ = false;
    }
    change_index_complete_ = views_.empty();
    change_index_.clear();
    throw;
  }
  store_->commit_update_session();
  store_->set_current_epoch(snapshot_id + 1);
  store_->flush(true);
  session_snapshot_.reset();
  open_root_ = views_.back().root;
  dirty_.clear();
  change_index_.clear();
  change_index_complete_ = false;
}

} // namespace icat
