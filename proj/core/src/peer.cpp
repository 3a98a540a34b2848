#include "icat/peer.hpp"

#include <filesystem>

namespace icat {

PeerNode::PeerNode(Options options, Transport& transport)
    : options_(std::move(options)), transport_(&transport) {
  if (options_.preserver && !options_.data_dir.empty())
    std::filesystem::create_directories(options_.data_dir);
}

PeerMessage PeerNode::base_message(MsgType type) const {
  PeerMessage m;
  m.type = type;
  m.origin_id = origin_id_of(options_.node_id);
  return m;
}

std::optional<CatalogToken> PeerNode::latest_token(const std::string& origin) const {
  std::lock_guard lock(mu_);
  auto it = registry_.find(origin);
  if (it == registry_.end() || it->second.empty()) return std::nullopt;
  return it->second.back();
}

std::uint64_t PeerNode::replica_latest(const std::string& origin) const {
  std::lock_guard lock(mu_);
  auto it = replicas_.find(origin);
  return it == replicas_.end() ? 0 : it->second.pad->latest_snapshot();
}

TreapPad* PeerNode::replica_pad(const std::string& origin) {
  std::lock_guard lock(mu_);
  auto it = replicas_.find(origin);
  return it == replicas_.end() ? nullptr : it->second.pad.get();
}

bool PeerNode::replica_divergent(const std::string& origin) const {
  std::lock_guard lock(mu_);
  auto it = replicas_.find(origin);
  return it != replicas_.end() && it->second.divergent;
}

bool PeerNode::has_pending() const {
  std::lock_guard lock(mu_);
  return !pending_.empty();
}

PeerNode::Replica& PeerNode::replica_of(const std::string& origin) {
  auto it = replicas_.find(origin);
  if (it != replicas_.end()) return it->second;
  std::string path = options_.data_dir + "/" + origin + ".icat";
  Replica r;
  if (std::filesystem::exists(path))
    r.pad = TreapPad::open(path, options_.skip_no, hash_function(options_.hash_id));
  else
    r.pad = TreapPad::create_replica(path, options_.page_size, options_.skip_no,
                                     hash_function(options_.hash_id));
  r.list = std::make_unique<AuthList>(*r.pad);
  return replicas_.emplace(origin, std::move(r)).first->second;
}

PeerMessage PeerNode::handle(const PeerMessage& msg) {
  std::lock_guard lock(mu_);
  std::string origin = origin_id_string(msg.origin_id);

  switch (msg.type) {
    case MsgType::Store: {
      PeerMessage reply = base_message(MsgType::StoreReply);
      auto& tokens = registry_[origin];
      if (!tokens.empty() && msg.token.snapshot_id <= tokens.back().snapshot_id) {
        reply.status = MsgStatus::StaleToken;
        return reply;
      }
      tokens.push_back(msg.token);
      reply.status = MsgStatus::Ok;
      if (options_.preserver && options_.origin_allowlist.contains(origin))
        pending_.insert(origin);
      return reply;
    }

    case MsgType::StoredVersionRequest: {
      PeerMessage reply = base_message(MsgType::StoredVersionReply);
      auto it = registry_.find(origin);
      if (it == registry_.end() || it->second.empty()) {
        reply.status = MsgStatus::NoToken;
      } else {
        reply.status = MsgStatus::Ok;
        reply.token = it->second.back();
      }
      return reply;
    }

    case MsgType::VersionReset: {
      PeerMessage reply = base_message(MsgType::StoreReply);
      bool authorized = options_.origin_allowlist.contains(origin) &&
                        msg.reset_counter > reset_counters_[origin];
      if (!authorized) {
        reply.status = MsgStatus::Unauthorized;
        return reply;
      }
      reset_counters_[origin] = msg.reset_counter;
      registry_[origin] = {msg.token}; // forced latest version
      reply.status = MsgStatus::Ok;
      return reply;
    }

    case MsgType::RecoverVersionRequest: {
      PeerMessage reply = base_message(MsgType::RecoverVersionReply);
      if (!options_.preserver) {
        reply.status = MsgStatus::NoReplica;
        return reply;
      }
      auto it = replicas_.find(origin);
      if (it == replicas_.end() || it->second.pad->latest_snapshot() == 0) {
        reply.status = MsgStatus::NoReplica;
        return reply;
      }
      reply.status = MsgStatus::Ok;
      reply.token = CatalogToken{it->second.list->size(), it->second.list->la()};
      return reply;
    }

    case MsgType::RecoverBegin:
    case MsgType::RecoverGetNext: {
      auto it = replicas_.find(origin);
      if (!options_.preserver || it == replicas_.end()) {
        PeerMessage end = base_message(MsgType::RecoverEndOfData);
        end.snapshot_id = msg.snapshot_id;
        end.status = MsgStatus::NoReplica;
        return end;
      }
      try {
        auto image =
            msg.type == MsgType::RecoverBegin
                ? it->second.pad->get_first_block_of_snapshot(msg.snapshot_id)
                : it->second.pad->get_next_block_of_snapshot(msg.snapshot_id, msg.block_no);
        if (!image) {
          PeerMessage end = base_message(MsgType::RecoverEndOfData);
          end.snapshot_id = msg.snapshot_id;
          end.status = MsgStatus::Ok;
          return end;
        }
        PeerMessage data = base_message(MsgType::RecoverData);
        data.snapshot_id = msg.snapshot_id;
        data.block_no = image->block_no;
        data.payload = image->payload;
        return data;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::UnknownSnapshot) throw;
        PeerMessage end = base_message(MsgType::RecoverEndOfData);
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

void PeerNode::preserver_sync(const std::string& origin) {
  auto token = latest_token(origin);
  if (!token) return;
  auto addr_it = options_.origin_allowlist.find(origin);
  if (addr_it == options_.origin_allowlist.end()) return;
  const std::string& addr = addr_it->second;
  Replica& replica = replica_of(origin);

  std::uint64_t target = token->snapshot_id;
  if (replica.pad->latest_snapshot() < target) {
    // One session covering every missed epoch: blocks restamped by a later
    // epoch show up in that later epoch's stream, so the union is complete
    // and each block arrives once, with its final content.
    replica.pad->binary_update_begin(target);
    try {
      for (std::uint64_t e = replica.pad->latest_snapshot() + 1; e <= target; ++e) {
        PeerMessage req = base_message(MsgType::UpdateBegin);
        req.snapshot_id = e;
        PeerMessage reply = transport_->request(addr, req);
        while (reply.type == MsgType::UpdateData) {
          if (reply.payload.size() < 8) raise(ErrorCode::ProtocolError, "short page payload");
          BlockImage image{reply.block_no, load_u64(reply.payload.data()), reply.payload};
          replica.pad->binary_update_block(target, image);
          PeerMessage next = base_message(MsgType::UpdateGetNext);
          next.snapshot_id = e;
          next.block_no = reply.block_no;
          reply = transport_->request(addr, next);
        }
        if (reply.type != MsgType::UpdateEndOfData || reply.status != MsgStatus::Ok)
          raise(ErrorCode::ProtocolError, "origin did not complete the snapshot stream");
      }
      replica.pad->binary_update_commit(target);
      replica.list->reload();
    } catch (const Error&) {
      // the replica stays at its last committed snapshot; the next Store
      // message triggers another attempt
      replica.pad->binary_update_abort();
      return;
    }
  }
  // Round complete: the replica's own authenticator must equal the token
  // published by the origin.
  replica.divergent = replica.list->size() != token->snapshot_id ||
                      replica.list->la() != token->authenticator;
}

void PeerNode::run_pending() {
  std::lock_guard lock(mu_);
  auto queue = std::move(pending_);
  pending_.clear();
  for (const auto& origin : queue) preserver_sync(origin);
}

} // namespace icat
