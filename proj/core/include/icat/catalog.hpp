#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <random>

#include "icat/auth_list.hpp"
#include "icat/config.hpp"
#include "icat/messages.hpp"
#include "icat/transport.hpp"

namespace icat {

/// Produced only by a successful verify (or recover); the authenticators in
/// here are network-attested, so reads checked against them never trust the
/// local disk.
struct VerifiedContext {
  std::uint64_t snapshot_id = 0;
  Digest la;
  Digest pra;
  RecordId root = RecordId::nil();
};

struct HistoryEntry {
  std::uint64_t snapshot_id = 0;
  Bytes value;
  std::uint64_t timestamp = 0;

  bool operator==(const HistoryEntry&) const = default;
};

/// Ties the dictionary, the snapshot list, the vote policy and the peer
/// protocol together behind the host-facing operations.
class Catalog {
public:
  using Clock = std::function<std::uint64_t()>; // seconds since epoch, UTC

  static std::unique_ptr<Catalog> create(const Config& config, Transport* transport = nullptr,
                                         Clock clock = {});
  static std::unique_ptr<Catalog> open(const Config& config, Transport* transport = nullptr,
                                       Clock clock = {});

  void put(BytesView key, BytesView value);
  void amend(BytesView key, BytesView suffix);

  /// Unverified read against the latest sealed snapshot or the open epoch
  /// (host reconciliation; integrity-critical reads go through
  /// verified_get).
  std::optional<std::pair<Bytes, std::uint64_t>> get_unverified(BytesView key) const;

  /// Seal without publication (no verifiers involved); used standalone and
  /// as the first half of seal().
  CatalogToken seal_local();
  /// Seal + publish to every verifier. SealQuorumFailed when too few ack;
  /// the snapshot stays committed locally either way.
  CatalogToken seal();

  /// Poll verifiers for the latest token, check ours won, then bind the
  /// local list head to the network-attested authenticator.
  VerifiedContext verify();

  /// Quorum-select a token from the preservers, rebuild the catalog from
  /// one of them, check the rebuilt list authenticator, then reset the
  /// verifiers to the restored version.
  VerifiedContext recover(std::uint64_t holder_seed = 0);

  std::optional<std::pair<Bytes, std::uint64_t>> verified_get(const VerifiedContext& ctx,
                                                              BytesView key) const;
  std::vector<HistoryEntry> history(const VerifiedContext& ctx, BytesView key) const;

  /// Origin side of the block transfer protocol (UpdateBegin / UpdateGetNext).
  PeerMessage handle(const PeerMessage& msg);

  CatalogToken local_token() const;
  std::uint64_t latest_snapshot() const;
  const Config& config() const { return config_; }
  TreapPad& pad() { return *pad_; }
  AuthList& list() { return *list_; }

private:
  Catalog(Config config, Transport* transport, Clock clock);

  VerifiedContext context_for(std::uint64_t snapshot_id, const Digest& network_la) const;
  void rebuild_from(const std::string& holder_addr, const CatalogToken& token);
  PeerMessage base_message(MsgType type) const;

  Config config_;
  Transport* transport_;
  Clock clock_;
  std::unique_ptr<TreapPad> pad_;
  std::unique_ptr<AuthList> list_;
  mutable std::recursive_mutex mu_;
};

} // namespace icat
