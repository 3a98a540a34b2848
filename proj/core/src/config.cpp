#include "icat/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "icat/errors.hpp"

namespace icat {

OriginId origin_id_of(const std::string& node_id) {
  OriginId id{};
  std::size_t n = std::min(node_id.size(), id.size());
  std::copy_n(node_id.begin(), n, id.begin());
  return id;
}

std::string origin_id_string(const OriginId& id) {
  auto end = std::find(id.begin(), id.end(), std::uint8_t{0});
  return std::string(id.begin(), end);
}

const PeerEntry& Config::verifier(const std::string& id) const {
  for (const auto& v : verifiers)
    if (v.id == id) return v;
  raise(ErrorCode::ConfigError, "unknown verifier id: " + id);
}

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint32_t parse_uint(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    unsigned long v = std::stoul(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return static_cast<std::uint32_t>(v);
  } catch (const std::exception&) {
    raise(ErrorCode::ConfigError, "bad unsigned value for " + key + ": " + value);
  }
}

// fraction in (0, 1] given as a decimal, stored as basis points
std::uint32_t parse_percent(const std::string& key, const std::string& value) {
  char* end = nullptr;
  double d = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size() || !(d > 0.0) || d > 1.0)
    raise(ErrorCode::ConfigError, "bad fraction for " + key + ": " + value +
                                      " (expected a decimal in (0, 1])");
  return static_cast<std::uint32_t>(std::lround(d * 10000.0));
}

} // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      raise(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      raise(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": empty key or value");

    if (key == "node_id") {
      if (value.size() > 16)
        raise(ErrorCode::ConfigError, "node_id longer than 16 octets: " + value);
      cfg.node_id = value;
    } else if (key == "listen") {
      cfg.listen = value;
    } else if (key == "catalog") {
      cfg.catalog_path = value;
    } else if (key == "page_size") {
      cfg.page_size = parse_uint(key, value);
    } else if (key == "skip_no") {
      cfg.skip_no = parse_uint(key, value);
    } else if (key == "hash") {
      cfg.hash_id = value;
    } else if (key == "quorum_percent") {
      cfg.policy.quorum_bp = parse_percent(key, value);
    } else if (key == "winning_percent") {
      cfg.policy.winning_bp = parse_percent(key, value);
    } else if (key == "recover_quorum_percent") {
      cfg.policy.recover_quorum_bp = parse_percent(key, value);
    } else if (key == "recover_winning_percent") {
      cfg.policy.recover_winning_bp = parse_percent(key, value);
    } else if (key == "reply_timeout") {
      cfg.policy.reply_timeout_s = parse_uint(key, value);
    } else if (key == "verifier") {
      auto comma = value.find(',');
      if (comma == std::string::npos)
        raise(ErrorCode::ConfigError, "verifier entry needs id,address: " + value);
      PeerEntry e{trim(value.substr(0, comma)), trim(value.substr(comma + 1))};
      if (e.id.empty() || e.address.empty())
        raise(ErrorCode::ConfigError, "verifier entry needs id,address: " + value);
      for (const auto& v : cfg.verifiers)
        if (v.id == e.id) raise(ErrorCode::ConfigError, "duplicate verifier id: " + e.id);
      cfg.verifiers.push_back(std::move(e));
    } else if (key == "preserver") {
      cfg.preservers.push_back(value);
    } else {
      raise(ErrorCode::ConfigError, "unknown key on line " + std::to_string(lineno) + ": " + key);
    }
  }

  for (const auto& p : cfg.preservers) {
    bool known = std::any_of(cfg.verifiers.begin(), cfg.verifiers.end(),
                             [&](const PeerEntry& v) { return v.id == p; });
    if (!known)
      raise(ErrorCode::ConfigError, "preserver " + p + " is not in the verifier list");
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

} // namespace icat
