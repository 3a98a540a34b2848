#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>

#include "icat/bytes.hpp"

namespace icat {

/// Fixed-length hash value; the unit of all authenticators and proofs.
struct Digest {
  static constexpr std::size_t kSize = 32;
  std::array<std::uint8_t, kSize> value{};

  bool operator==(const Digest&) const = default;
  auto operator<=>(const Digest&) const = default;

  bool is_nil() const {
    for (auto b : value)
      if (b != 0) return false;
    return true;
  }

  std::string hex() const;
};

/// The designated nil constant (32 zero octets), used for absent children
/// and missing skip-list predecessors.
inline Digest nil_digest() { return Digest{}; }

/// Incremental hash with a fixed 32-octet output. The algorithm is selected
/// once per catalog via configuration.
class Hasher {
public:
  virtual ~Hasher() = default;
  virtual void update(BytesView data) = 0;
  virtual Digest finish() = 0;

  void update(const Digest& d) { update(BytesView(d.value.data(), d.value.size())); }
  void update_u64(std::uint64_t v) {
    std::uint8_t buf[8];
    store_u64(buf, v);
    update(BytesView(buf, 8));
  }
};

class HashFunction {
public:
  virtual ~HashFunction() = default;
  virtual std::string name() const = 0;
  virtual std::unique_ptr<Hasher> begin() const = 0;

  Digest hash(BytesView data) const {
    auto h = begin();
    h->update(data);
    return h->finish();
  }
};

/// Looks up a hash function by its configuration identifier ("sha-256").
/// Throws ConfigError for unknown identifiers.
const HashFunction& hash_function(const std::string& id);

const HashFunction& sha256();

Digest digest_from_hex(const std::string& hex);

} // namespace icat
