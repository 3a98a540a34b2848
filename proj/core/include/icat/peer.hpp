#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>

#include "icat/auth_list.hpp"
#include "icat/transport.hpp"

namespace icat {

/// A verifier (token registry per origin), optionally a preserver as well
/// (block-level replica of each allowed origin's catalog, served back during
/// recovery).
class PeerNode {
public:
  struct Options {
    std::string node_id;
    bool preserver = false;
    std::string data_dir; // replica files live here, one per origin
    std::uint32_t page_size = 16384;
    std::uint32_t skip_no = 0;
    std::string hash_id = "sha-256";
    // origin id -> address; doubles as the authorization list
    std::map<std::string, std::string> origin_allowlist;
  };

  PeerNode(Options options, Transport& transport);

  PeerMessage handle(const PeerMessage& msg);

  /// Preservation runs deferred so that token handling never blocks; the
  /// daemon loop (or a test) pumps this.
  void run_pending();
  bool has_pending() const;

  std::optional<CatalogToken> latest_token(const std::string& origin) const;
  std::uint64_t replica_latest(const std::string& origin) const;
  TreapPad* replica_pad(const std::string& origin);
  /// Set when a completed preservation round disagreed with the origin's
  /// published authenticator.
  bool replica_divergent(const std::string& origin) const;

private:
  struct Replica {
    std::unique_ptr<TreapPad> pad;
    std::unique_ptr<AuthList> list;
    bool divergent = false;
  };

  PeerMessage base_message(MsgType type) const;
  Replica& replica_of(const std::string& origin);
  void preserver_sync(const std::string& origin);

  Options options_;
  Transport* transport_;
  std::map<std::string, std::vector<CatalogToken>> registry_;
  std::map<std::string, std::uint64_t> reset_counters_;
  std::map<std::string, Replica> replicas_;
  std::set<std::string> pending_;
  mutable std::recursive_mutex mu_;
};

} // namespace icat
