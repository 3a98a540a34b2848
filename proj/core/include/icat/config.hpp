#pragma once

#include <array>
#include <string>
#include <vector>

#include "icat/policy.hpp"

namespace icat {

using OriginId = std::array<std::uint8_t, 16>;

/// node_id string packed into the 16-octet wire identity (truncated or
/// zero-padded).
OriginId origin_id_of(const std::string& node_id);
std::string origin_id_string(const OriginId& id);

struct PeerEntry {
  std::string id;
  std::string address;
};

/// Text key-value configuration. One `key = value` pair per line, `#` starts
/// a comment. Repeatable keys: `verifier = id,address` and `preserver = id`
/// (preservers must reference configured verifiers).
struct Config {
  std::string node_id;
  std::string listen;
  std::string catalog_path;
  std::uint32_t page_size = 16384;
  std::uint32_t skip_no = 0;
  std::string hash_id = "sha-256";
  PolicyConfig policy;
  std::vector<PeerEntry> verifiers;
  std::vector<std::string> preservers; // verifier ids

  const PeerEntry& verifier(const std::string& id) const;

  static Config parse(const std::string& text); // ConfigError on bad input
  static Config load(const std::string& path); // IoError / ConfigError
};

} // namespace icat
