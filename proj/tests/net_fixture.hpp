#pragma once

#include <memory>
#include <vector>

#include "icat/catalog.hpp"
#include "icat/peer.hpp"
#include "util.hpp"

namespace icat::test {

/// One origin catalog plus n verifier peers (the first `preservers` of them
/// also keeping replicas), wired over a simulated transport with a scripted
/// clock.
struct SimNetwork {
  TempDir dir;
  SimTransport transport;
  Config origin_cfg;
  std::unique_ptr<Catalog> origin;
  std::vector<std::unique_ptr<PeerNode>> peers;
  std::uint64_t now = 1700000000;

  SimNetwork(int verifiers, int preservers, std::uint32_t page_size = 4096,
             std::uint32_t skip_no = 0) {
    origin_cfg.node_id = "origin1";
    origin_cfg.catalog_path = dir.file("origin.icat");
    origin_cfg.page_size = page_size;
    origin_cfg.skip_no = skip_no;
    for (int i = 1; i <= verifiers; ++i) {
      std::string id = "v" + std::to_string(i);
      origin_cfg.verifiers.push_back({id, endpoint(id)});
      if (i <= preservers) origin_cfg.preservers.push_back(id);
    }

    origin = Catalog::create(origin_cfg, &transport, [this] { return now++; });
    transport.register_endpoint("ep:origin1",
                                [this](const PeerMessage& m) { return origin->handle(m); });

    for (int i = 1; i <= verifiers; ++i) {
      std::string id = "v" + std::to_string(i);
      PeerNode::Options opt;
      opt.node_id = id;
      opt.preserver = i <= preservers;
      opt.data_dir = dir.file(id);
      opt.page_size = page_size;
      opt.skip_no = skip_no;
      opt.origin_allowlist = {{"origin1", "ep:origin1"}};
      peers.push_back(std::make_unique<PeerNode>(opt, transport));
      PeerNode* p = peers.back().get();
      transport.register_endpoint(endpoint(id),
                                  [p](const PeerMessage& m) { return p->handle(m); });
    }
  }

  static std::string endpoint(const std::string& id) { return "ep:" + id; }

  /// Runs deferred preservation rounds on every peer.
  void pump() {
    for (auto& p : peers) p->run_pending();
  }
};

} // namespace icat::test
