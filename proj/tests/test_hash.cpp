#include <doctest.h>

#include "icat/errors.hpp"
#include "icat/hash.hpp"

using namespace icat;

TEST_CASE("sha-256 matches the standard test vector") {
  // FIPS 180-2 appendix B.1
  CHECK(sha256().hash(to_bytes("abc")).hex() ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256().hash(BytesView{}).hex() ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("incremental hashing equals one-shot hashing") {
  auto h = sha256().begin();
  h->update(to_bytes("ab"));
  h->update(to_bytes("c"));
  CHECK(h->finish() == sha256().hash(to_bytes("abc")));
}

TEST_CASE("hash registry resolves identifiers") {
  CHECK(hash_function("sha-256").name() == "sha-256");
  CHECK_THROWS_AS((void)hash_function("md5"), Error);
}

TEST_CASE("digest hex round-trip and nil digest") {
  Digest d = sha256().hash(to_bytes("x"));
  CHECK(digest_from_hex(d.hex()) == d);
  CHECK(nil_digest().is_nil());
  CHECK_FALSE(d.is_nil());
}
