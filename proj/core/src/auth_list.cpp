#include "icat/auth_list.hpp"

#include <algorithm>

namespace icat {

Digest snapshot_record_digest(const SnapshotRecord& record, const HashFunction& hash) {
  auto h = hash.begin();
  const std::uint8_t tag = 'S';
  h->update(BytesView(&tag, 1));
  h->update_u64(record.snapshot_id);
  Bytes root;
  record.root.encode(root);
  h->update(root);
  h->update(record.pra);
  h->update_u64(record.timestamp);
  return h->finish();
}

std::size_t list_link_count(std::uint64_t index) {
  // levels l with 2^l | i and 2^l <= i; for i a power of two the top link
  // points at element 0, carried as a nil digest
  std::size_t n = 1;
  while (index > 0 && index % 2 == 0) {
    index /= 2;
    ++n;
  }
  return n;
}

Digest list_element_authenticator(std::uint64_t index, const Digest& record_digest,
                                  const std::vector<Digest>& links,
                                  const HashFunction& hash) {
  auto h = hash.begin();
  const std::uint8_t tag = 'E';
  h->update(BytesView(&tag, 1));
  h->update_u64(index);
  h->update(record_digest);
  for (const auto& l : links) h->update(l);
  return h->finish();
}

SnapshotRecord verify_list_proof(const ListProof& proof, const Digest& expected_la,
                                 const HashFunction& hash) {
  if (proof.chain.empty()) raise(ErrorCode::ProofMismatch, "empty list proof");
  const ListProofNode& first = proof.chain.front();
  if (first.index != proof.target.snapshot_id || first.index == 0)
    raise(ErrorCode::ProofMismatch, "proof chain does not start at the target");
  Digest rd = snapshot_record_digest(proof.target, hash);
  if (first.record_digest != rd)
    raise(ErrorCode::ProofMismatch, "target record does not match its digest");
  if (first.links.size() != list_link_count(first.index))
    raise(ErrorCode::ProofMismatch, "wrong link count in proof node");
  Digest acc = list_element_authenticator(first.index, rd, first.links, hash);

  std::uint64_t prev = first.index;
  for (std::size_t j = 1; j < proof.chain.size(); ++j) {
    const ListProofNode& node = proof.chain[j];
    if (node.index <= prev) raise(ErrorCode::ProofMismatch, "proof chain not ascending");
    std::size_t levels = list_link_count(node.index);
    if (node.links.size() != levels)
      raise(ErrorCode::ProofMismatch, "wrong link count in proof node");
    // The link that must carry the folded value: node.index - 2^l == prev.
    std::size_t hook = levels;
    for (std::size_t l = 0; l < levels; ++l) {
      if (node.index - (std::uint64_t{1} << l) == prev) {
        hook = l;
        break;
      }
    }
    if (hook == levels)
      raise(ErrorCode::ProofMismatch, "proof chain skips without a matching link");
    std::vector<Digest> links = node.links;
    links[hook] = acc;
    acc = list_element_authenticator(node.index, node.record_digest, links, hash);
    prev = node.index;
  }
  if (acc != expected_la)
    raise(ErrorCode::ProofMismatch, "list proof does not fold to the expected authenticator");
  return proof.target;
}

// ---------------------------------------------------------------------------
// Stored element layout: index u64 | root 8 | pra 32 | timestamp u64 |
// element authenticator 32 | prev RecordId 8  (96 octets)

namespace {
constexpr std::size_t kElementSize = 96;

Bytes serialize_element(const SnapshotRecord& rec, const Digest& auth, RecordId prev) {
  Bytes out;
  put_u64(out, rec.snapshot_id);
  rec.root.encode(out);
  out.insert(out.end(), rec.pra.value.begin(), rec.pra.value.end());
  put_u64(out, rec.timestamp);
  out.insert(out.end(), auth.value.begin(), auth.value.end());
  prev.encode(out);
  return out;
}
} // namespace

AuthList::AuthList(TreapPad& pad) : pad_(&pad) { reload(); }

void AuthList::reload() {
  ids_.clear();
  auths_.clear();
  records_.clear();
  RecordId id = pad_->aasl_head();
  while (!id.is_nil()) {
    Bytes rec = pad_->store().read_record(id);
    if (rec.size() != kElementSize) raise(ErrorCode::CorruptData, "bad list element record");
    SnapshotRecord sr;
    sr.snapshot_id = load_u64(rec.data());
    sr.root = RecordId::decode(rec.data() + 8);
    std::copy(rec.begin() + 16, rec.begin() + 48, sr.pra.value.begin());
    sr.timestamp = load_u64(rec.data() + 48);
    Digest auth;
    std::copy(rec.begin() + 56, rec.begin() + 88, auth.value.begin());
    ids_.push_back(id);
    auths_.push_back(auth);
    records_.push_back(sr);
    id = RecordId::decode(rec.data() + 88);
  }
  std::reverse(ids_.begin(), ids_.end());
  std::reverse(auths_.begin(), auths_.end());
  std::reverse(records_.begin(), records_.end());
  if (records_.size() != pad_->aasl_count())
    raise(ErrorCode::CorruptData, "list length disagrees with its recorded count");
  for (std::size_t i = 0; i < records_.size(); ++i)
    if (records_[i].snapshot_id != i + 1)
      raise(ErrorCode::CorruptData, "list elements not sequential");
}

Digest AuthList::la() const { return auths_.empty() ? nil_digest() : auths_.back(); }

const SnapshotRecord& AuthList::record(std::uint64_t snapshot_id) const {
  if (snapshot_id == 0 || snapshot_id > records_.size())
    raise(ErrorCode::UnknownSnapshot, "list element " + std::to_string(snapshot_id));
  return records_[snapshot_id - 1];
}

std::vector<Digest> AuthList::links_of(std::uint64_t index) const {
  std::size_t levels = list_link_count(index);
  std::vector<Digest> links;
  links.reserve(levels);
  for (std::size_t l = 0; l < levels; ++l) {
    std::uint64_t pred = index - (std::uint64_t{1} << l);
    links.push_back(pred == 0 ? nil_digest() : auths_[pred - 1]);
  }
  return links;
}

Digest AuthList::append(const SnapshotRecord& record) {
  if (record.snapshot_id != records_.size() + 1)
    raise(ErrorCode::NonSequentialAppend,
          "expected element " + std::to_string(records_.size() + 1) + ", got " +
              std::to_string(record.snapshot_id));
  std::uint64_t i = record.snapshot_id;
  Digest rd = snapshot_record_digest(record, pad_->hash());
  Digest auth = list_element_authenticator(i, rd, links_of(i), pad_->hash());
  RecordId prev = ids_.empty() ? RecordId::nil() : ids_.back();
  RecordId id = pad_->store().insert_record(serialize_element(record, auth, prev));
  pad_->set_aasl_state(id, i);
  ids_.push_back(id);
  auths_.push_back(auth);
  records_.push_back(record);
  return auth;
}

ListProof AuthList::prove(std::uint64_t snapshot_id) const {
  if (snapshot_id == 0 || snapshot_id > records_.size())
    raise(ErrorCode::UnknownSnapshot, "list element " + std::to_string(snapshot_id));
  // Walk the skip links from the head down to the target, greedily taking
  // the longest link that does not overshoot; record the visited indices.
  std::vector<std::uint64_t> indices;
  std::uint64_t cur = records_.size();
  indices.push_back(cur);
  while (cur > snapshot_id) {
    std::size_t levels = list_link_count(cur);
    std::uint64_t next = cur - 1;
    for (std::size_t l = levels; l-- > 0;) {
      std::uint64_t pred = cur - (std::uint64_t{1} << l);
      if (pred >= snapshot_id) {
        next = pred;
        break;
      }
    }
    cur = next;
    indices.push_back(cur);
  }
  std::reverse(indices.begin(), indices.end());

  ListProof proof;
  proof.target = records_[snapshot_id - 1];
  for (std::uint64_t idx : indices) {
    ListProofNode node;
    node.index = idx;
    node.record_digest = snapshot_record_digest(records_[idx - 1], pad_->hash());
    node.links = links_of(idx);
    proof.chain.push_back(std::move(node));
  }
  return proof;
}

} // namespace icat
