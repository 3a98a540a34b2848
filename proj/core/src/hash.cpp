#include "icat/hash.hpp"

#include <openssl/evp.h>

#include "icat/errors.hpp"

namespace icat {

std::string Digest::hex() const {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(2 * kSize);
  for (auto b : value) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0x0f]);
  }
  return out;
}

Digest digest_from_hex(const std::string& hex) {
  if (hex.size() != 2 * Digest::kSize)
    raise(ErrorCode::ConfigError, "bad digest hex length");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    raise(ErrorCode::ConfigError, "bad hex digit");
  };
  Digest d;
  for (std::size_t i = 0; i < Digest::kSize; ++i)
    d.value[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
  return d;
}

namespace {

class EvpHasher : public Hasher {
public:
  explicit EvpHasher(const EVP_MD* md) : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, md, nullptr) != 1)
      raise(ErrorCode::IoError, "hash init failed");
  }
  ~EvpHasher() override { EVP_MD_CTX_free(ctx_); }

  void update(BytesView data) override {
    if (EVP_DigestUpdate(ctx_, data.data(), data.size()) != 1)
      raise(ErrorCode::IoError, "hash update failed");
  }

  Digest finish() override {
    Digest d;
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, d.value.data(), &len) != 1 || len != Digest::kSize)
      raise(ErrorCode::IoError, "hash finish failed");
    return d;
  }

private:
  EVP_MD_CTX* ctx_;
};

class Sha256 : public HashFunction {
public:
  std::string name() const override { return "sha-256"; }
  std::unique_ptr<Hasher> begin() const override {
    return std::make_unique<EvpHasher>(EVP_sha256());
  }
};

} // namespace

const HashFunction& sha256() {
  static Sha256 instance;
  return instance;
}

const HashFunction& hash_function(const std::string& id) {
  if (id == "sha-256" || id == "sha256") return sha256();
  raise(ErrorCode::ConfigError, "unknown hash algorithm: " + id);
}

} // namespace icat
