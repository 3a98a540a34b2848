#include "icat/catalog.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>

namespace icat {

namespace {
std::uint64_t wall_clock_seconds() {
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::seconds>(
                                        std::chrono::system_clock::now().time_since_epoch())
                                        .count());
}
} // namespace

Catalog::Catalog(Config config, Transport* transport, Clock clock)
    : config_(std::move(config)), transport_(transport),
      clock_(clock ? std::move(clock) : wall_clock_seconds) {}

std::unique_ptr<Catalog> Catalog::create(const Config& config, Transport* transport,
                                         Clock clock) {
  auto cat = std::unique_ptr<Catalog>(new Catalog(config, transport, std::move(clock)));
  cat->pad_ = TreapPad::create(config.catalog_path, config.page_size, config.skip_no,
                               hash_function(config.hash_id));
  cat->list_ = std::make_unique<AuthList>(*cat->pad_);
  return cat;
}

std::unique_ptr<Catalog> Catalog::open(const Config& config, Transport* transport,
                                       Clock clock) {
  auto cat = std::unique_ptr<Catalog>(new Catalog(config, transport, std::move(clock)));
  cat->pad_ = TreapPad::open(config.catalog_path, config.skip_no,
                             hash_function(config.hash_id));
  cat->list_ = std::make_unique<AuthList>(*cat->pad_);
  return cat;
}

void Catalog::put(BytesView key, BytesView value) {
  std::lock_guard lock(mu_);
  pad_->insert(key, value);
}

void Catalog::amend(BytesView key, BytesView suffix) {
  std::lock_guard lock(mu_);
  pad_->amend(key, suffix);
}

std::optional<std::pair<Bytes, std::uint64_t>> Catalog::get_unverified(BytesView key) const {
  std::lock_guard lock(mu_);
  return pad_->get_open(key);
}

CatalogToken Catalog::local_token() const {
  std::lock_guard lock(mu_);
  return CatalogToken{list_->size(), list_->la()};
}

std::uint64_t Catalog::latest_snapshot() const {
  std::lock_guard lock(mu_);
  return pad_->latest_snapshot();
}

PeerMessage Catalog::base_message(MsgType type) const {
  PeerMessage m;
  m.type = type;
  m.origin_id = origin_id_of(config_.node_id);
  return m;
}

CatalogToken Catalog::seal_local() {
  std::lock_guard lock(mu_);
  SnapshotView v = pad_->seal_tree();
  SnapshotRecord rec{v.snapshot_id, v.root, v.pra, clock_()};
  Digest la = list_->append(rec);
  pad_->finish_seal();
  return CatalogToken{v.snapshot_id, la};
}

CatalogToken Catalog::seal() {
  if (config_.verifiers.empty())
    raise(ErrorCode::ConfigError, "seal requires a configured verifier list");
  if (!transport_) raise(ErrorCode::ConfigError, "seal requires a transport");
  CatalogToken token = seal_local();

  PeerMessage store = base_message(MsgType::Store);
  store.token = token;
  std::uint32_t acks = 0;
  for (const auto& v : config_.verifiers) {
    try {
      PeerMessage reply = transport_->request(v.address, store);
      if (reply.type == MsgType::StoreReply && reply.status == MsgStatus::Ok) ++acks;
    } catch (const Error&) {
      // absent verifier; counted against the quorum
    }
  }
  if (!seal_quorum_met(acks, static_cast<std::uint32_t>(config_.verifiers.size()),
                       config_.policy))
    raise(ErrorCode::SealQuorumFailed,
          std::to_string(acks) + " of " + std::to_string(config_.verifiers.size()) +
              " verifiers acknowledged; snapshot remains local");
  return token;
}

VerifiedContext Catalog::context_for(std::uint64_t snapshot_id, const Digest& network_la) const {
  ListProof proof = list_->prove(snapshot_id);
  SnapshotRecord rec;
  try {
    rec = verify_list_proof(proof, network_la, pad_->hash());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ProofMismatch)
      raise(ErrorCode::ListProofFailed, e.what());
    throw;
  }
  return VerifiedContext{snapshot_id, network_la, rec.pra, rec.root};
}

VerifiedContext Catalog::verify() {
  if (config_.verifiers.empty())
    raise(ErrorCode::ConfigError, "verify requires a configured verifier list");
  if (!transport_) raise(ErrorCode::ConfigError, "verify requires a transport");
  std::lock_guard lock(mu_);

  PeerMessage req = base_message(MsgType::StoredVersionRequest);
  VoteTally tally;
  tally.verifier_count = static_cast<std::uint32_t>(config_.verifiers.size());
  for (const auto& v : config_.verifiers) {
    try {
      PeerMessage reply = transport_->request(v.address, req);
      if (reply.type == MsgType::StoredVersionReply && reply.status == MsgStatus::Ok)
        tally.add_vote(reply.token);
    } catch (const Error&) {
    }
  }

  CatalogToken local{list_->size(), list_->la()};
  switch (evaluate_verify(tally, local, config_.policy)) {
    case VerifyDecision::QuorumFailed:
      raise(ErrorCode::VerifyQuorumFailed,
            std::to_string(tally.participant_count()) + " of " +
                std::to_string(tally.verifier_count) + " verifiers replied");
    case VerifyDecision::Mismatch:
      raise(ErrorCode::VerifyMismatch,
            "the local token lost the vote; the catalog should be recovered");
    case VerifyDecision::Accepted:
      break;
  }
  // The winning token equals ours, so its authenticator is network-attested.
  return context_for(local.snapshot_id, local.authenticator);
}

std::optional<std::pair<Bytes, std::uint64_t>> Catalog::verified_get(const VerifiedContext& ctx,
                                                                     BytesView key) const {
  std::lock_guard lock(mu_);
  return pad_->verified_get(key, ctx.snapshot_id, ctx.pra);
}

std::vector<HistoryEntry> Catalog::history(const VerifiedContext& ctx, BytesView key) const {
  std::lock_guard lock(mu_);
  std::vector<HistoryEntry> out;
  auto val = pad_->verified_get(key, ctx.snapshot_id, ctx.pra);
  if (!val) raise(ErrorCode::KeyNotFound, "history of a key absent at the verified snapshot");
  while (val) {
    auto [value, vsid] = *val;
    // the snapshot that stored this version, with its authenticated timestamp
    SnapshotRecord rec = verify_list_proof(list_->prove(vsid), ctx.la, pad_->hash());
    out.push_back(HistoryEntry{vsid, value, rec.timestamp});
    if (vsid == 1) break;
    SnapshotRecord prev = verify_list_proof(list_->prove(vsid - 1), ctx.la, pad_->hash());
    val = pad_->verified_get(key, vsid - 1, prev.pra);
  }
  return out;
}

void Catalog::rebuild_from(const std::string& holder_addr, const CatalogToken& token) {
  std::string tmp = config_.catalog_path + ".recover";
  std::filesystem::remove(tmp);
  auto replica = TreapPad::create_replica(tmp, config_.page_size, config_.skip_no,
                                          hash_function(config_.hash_id));

  // One session covering all snapshots: each holder block is stamped with
  // the epoch that last wrote it, so streaming every epoch once transfers
  // the whole replica with no duplicates. Commit verifies the full chain.
  replica->binary_update_begin(token.snapshot_id);
  try {
    for (std::uint64_t s = 1; s <= token.snapshot_id; ++s) {
      PeerMessage req = base_message(MsgType::RecoverBegin);
      req.snapshot_id = s;
      PeerMessage reply = transport_->request(holder_addr, req);
      while (reply.type == MsgType::RecoverData) {
        if (reply.payload.size() < 8)
          raise(ErrorCode::ProtocolError, "short page payload");
        BlockImage image{reply.block_no, load_u64(reply.payload.data()), reply.payload};
        replica->binary_update_block(token.snapshot_id, image);
        PeerMessage next = base_message(MsgType::RecoverGetNext);
        next.snapshot_id = s;
        next.block_no = reply.block_no;
        reply = transport_->request(holder_addr, next);
      }
      if (reply.type != MsgType::RecoverEndOfData || reply.status != MsgStatus::Ok)
        raise(ErrorCode::RecoverTransferFailed, "holder did not complete the snapshot stream");
    }
    replica->binary_update_commit(token.snapshot_id);
  } catch (const Error& e) {
    replica->binary_update_abort();
    switch (e.code()) {
      case ErrorCode::ProofMismatch:
      case ErrorCode::CorruptData:
      case ErrorCode::CorruptBlock:
      case ErrorCode::BadRecordId:
        raise(ErrorCode::RecoverTransferFailed, e.what());
      default:
        throw;
    }
  }

  AuthList rebuilt(*replica);
  if (rebuilt.size() != token.snapshot_id || rebuilt.la() != token.authenticator)
    raise(ErrorCode::RecoverVerifyFailed,
          "rebuilt list authenticator does not match the quorum token");

  // Swap the rebuilt file in and reopen.
  replica.reset();
  list_.reset();
  pad_.reset();
  std::filesystem::rename(tmp, config_.catalog_path);
  pad_ = TreapPad::open(config_.catalog_path, config_.skip_no, hash_function(config_.hash_id));
  list_ = std::make_unique<AuthList>(*pad_);
}

VerifiedContext Catalog::recover(std::uint64_t holder_seed) {
  if (config_.preservers.empty())
    raise(ErrorCode::ConfigError, "recover requires a configured preserver list");
  if (!transport_) raise(ErrorCode::ConfigError, "recover requires a transport");
  std::lock_guard lock(mu_);

  // Phase 1: poll the preservers and quorum-select a token.
  PeerMessage req = base_message(MsgType::RecoverVersionRequest);
  VoteTally tally;
  tally.verifier_count = static_cast<std::uint32_t>(config_.preservers.size());
  std::vector<std::pair<CatalogToken, std::string>> holders;
  for (const auto& p : config_.preservers) {
    const std::string& addr = config_.verifier(p).address;
    try {
      PeerMessage reply = transport_->request(addr, req);
      if (reply.type == MsgType::RecoverVersionReply && reply.status == MsgStatus::Ok) {
        tally.add_vote(reply.token);
        holders.emplace_back(reply.token, addr);
      }
    } catch (const Error&) {
    }
  }
  auto winner = evaluate_recover(tally, config_.policy);
  if (!winner)
    raise(ErrorCode::RecoverQuorumFailed, "no token won the recovery vote");

  std::vector<std::string> candidates;
  for (const auto& [token, addr] : holders)
    if (token == *winner) candidates.push_back(addr);
  std::mt19937_64 rng(holder_seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);

  // Phase 2 + 3a: rebuild from one holder at random; on failure, try the next.
  std::exception_ptr last;
  bool rebuilt = false;
  for (const auto& addr : candidates) {
    try {
      rebuild_from(addr, *winner);
      rebuilt = true;
      break;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::RecoverTransferFailed ||
          e.code() == ErrorCode::RecoverVerifyFailed ||
          e.code() == ErrorCode::OriginUnreachable) {
        last = std::current_exception();
        continue;
      }
      throw;
    }
  }
  if (!rebuilt) {
    if (last) std::rethrow_exception(last);
    raise(ErrorCode::RecoverTransferFailed, "no holder available for the winning token");
  }

  // Phase 3b: force every verifier to the restored version.
  PeerMessage reset = base_message(MsgType::VersionReset);
  reset.token = *winner;
  reset.reset_counter = clock_();
  for (const auto& v : config_.verifiers) {
    try {
      transport_->request(v.address, reset);
    } catch (const Error&) {
      // a partitioned verifier converges on the next Store
    }
  }
  return context_for(winner->snapshot_id, winner->authenticator);
}

PeerMessage Catalog::handle(const PeerMessage& msg) {
  std::lock_guard lock(mu_);
  auto block_reply = [&](std::optional<BlockImage> image, std::uint64_t sid) {
    if (!image) {
      PeerMessage end = base_message(MsgType::UpdateEndOfData);
      end.snapshot_id = sid;
      end.status = MsgStatus::Ok;
      return end;
    }
    PeerMessage data = base_message(MsgType::UpdateData);
    data.snapshot_id = sid;
    data.block_no = image->block_no;
    data.payload = image->payload;
    return data;
  };

  switch (msg.type) {
    case MsgType::UpdateBegin:
    case MsgType::UpdateGetNext: {
      try {
        auto image = msg.type == MsgType::UpdateBegin
                         ? pad_->get_first_block_of_snapshot(msg.snapshot_id)
                         : pad_->get_next_block_of_snapshot(msg.snapshot_id, msg.block_no);
        return block_reply(std::move(image), msg.snapshot_id);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::UnknownSnapshot) throw;
        PeerMessage end = base_message(MsgType::UpdateEndOfData);
        end.snapshot_id = msg.snapshot_id;
        end.status = MsgStatus::UnknownSnapshot;
        return end;
      }
    }
    default: {
      PeerMessage reply = base_message(MsgType::StoreReply);
      reply.status = MsgStatus::Failed;
      return reply;
    }
  }
}

} // namespace icat
