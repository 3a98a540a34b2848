#include <doctest.h>

#include <fstream>

#include "icat/record_store.hpp"
#include "util.hpp"

using namespace icat;
using icat::test::TempDir;

TEST_CASE("page size must be a supported power of two") {
  TempDir dir;
  for (std::uint32_t bad : {0u, 1000u, 3000u, 5000u, 6144u, 65536u}) {
    CAPTURE(bad);
    CHECK(icat::test::code_of([&] { RecordStore::create(dir.file("bad.dat"), bad); }) ==
          ErrorCode::InvalidPageSize);
  }
  for (std::uint32_t good : {4096u, 8192u, 16384u, 32768u}) {
    CAPTURE(good);
    auto store = RecordStore::create(dir.file("good" + std::to_string(good) + ".dat"), good);
    CHECK(store->page_size() == good);
  }
}

TEST_CASE("insert and read round-trip") {
  TempDir dir;
  auto store = RecordStore::create(dir.file("s.dat"), 4096);

  Bytes small = to_bytes("hello");
  RecordId id = store->insert_record(small);
  CHECK(store->read_record(id) == small);

  Bytes empty;
  RecordId id2 = store->insert_record(empty);
  CHECK(store->read_record(id2).empty());

  Bytes max(store->max_record_size(), 0xAB);
  RecordId id3 = store->insert_record(max);
  CHECK(store->read_record(id3) == max);

  Bytes too_large(store->max_record_size() + 1, 0xAB);
  CHECK(icat::test::code_of([&] { store->insert_record(too_large); }) ==
        ErrorCode::RecordTooLarge);
}

TEST_CASE("records spill into additional blocks and survive reopen") {
  TempDir dir;
  std::vector<std::pair<RecordId, Bytes>> records;
  {
    auto store = RecordStore::create(dir.file("s.dat"), 4096);
    for (int i = 0; i < 200; ++i) {
      Bytes data(100 + static_cast<std::size_t>(i) % 50, static_cast<std::uint8_t>(i));
      records.emplace_back(store->insert_record(data), data);
    }
    CHECK(store->block_count() > 1);
    store->flush(true);
  }
  auto store = RecordStore::open(dir.file("s.dat"));
  for (const auto& [id, data] : records) CHECK(store->read_record(id) == data);
}

TEST_CASE("update in place and with relocation") {
  TempDir dir;
  auto store = RecordStore::create(dir.file("s.dat"), 4096);

  RecordId id = store->insert_record(to_bytes("short"));
  RecordId same = store->update_record(id, to_bytes("shrt"));
  CHECK(same == id);
  CHECK(store->read_record(id) == to_bytes("shrt"));

  // Fill the block so growth forces relocation to another block.
  while (store->block_count() == 1) store->insert_record(Bytes(512, 0x55));
  Bytes grown(1024, 0x77);
  // grow the original record until it cannot stay in block 0
  RecordId current = id;
  for (int i = 0; i < 8 && current.block_no == id.block_no; ++i) {
    grown.push_back(0x77);
    current = store->update_record(id, grown);
  }
  if (current != id) {
    // reads through the old id follow the forwarding pointer
    CHECK(store->read_record(id) == store->read_record(current));
    // further updates through the old id work too
    Bytes next = grown;
    next.push_back(0x01);
    RecordId latest = store->update_record(id, next);
    CHECK(store->read_record(latest) == next);
    CHECK(store->read_record(id) == next);
  }
}

TEST_CASE("bad record ids are rejected") {
  TempDir dir;
  auto store = RecordStore::create(dir.file("s.dat"), 4096);
  store->insert_record(to_bytes("x"));
  CHECK_THROWS_AS((void)store->read_record(RecordId{99, 0}), Error);
  CHECK_THROWS_AS((void)store->read_record(RecordId{0, 99}), Error);
  CHECK_THROWS_AS((void)store->read_record(RecordId::nil()), Error);
}

TEST_CASE("epoch stamping tracks which blocks each snapshot touched") {
  TempDir dir;
  auto store = RecordStore::create(dir.file("s.dat"), 4096);
  CHECK(store->current_epoch() == 1);

  RecordId a = store->insert_record(to_bytes("epoch1"));
  CHECK(store->blocks_of_epoch(1) == std::vector<std::uint64_t>{0});

  store->set_current_epoch(2);
  CHECK(store->blocks_of_epoch(1) == std::vector<std::uint64_t>{0});
  store->update_record(a, to_bytes("epoch2"));
  CHECK(store->blocks_of_epoch(1).empty()); // block restamped by the update
  CHECK(store->blocks_of_epoch(2) == std::vector<std::uint64_t>{0});

  CHECK(icat::test::code_of([&] { store->set_current_epoch(1); }) ==
        ErrorCode::EpochRegression);
}

TEST_CASE("epoch survives reopen") {
  TempDir dir;
  {
    auto store = RecordStore::create(dir.file("s.dat"), 8192);
    store->insert_record(to_bytes("x"));
    store->set_current_epoch(5);
    store->flush(true);
  }
  auto store = RecordStore::open(dir.file("s.dat"));
  CHECK(store->current_epoch() == 5);
  CHECK(store->page_size() == 8192);
}

TEST_CASE("update sessions buffer blocks until commit") {
  TempDir dir;
  auto origin = RecordStore::create(dir.file("origin.dat"), 4096);
  RecordId id = origin->insert_record(to_bytes("payload"));
  origin->flush(true);
  BlockImage image = origin->read_block(0);

  auto replica = RecordStore::create(dir.file("replica.dat"), 4096);

  SUBCASE("abort leaves the store unchanged") {
    replica->begin_update_session();
    replica->write_block(image);
    CHECK(replica->read_record(id) == to_bytes("payload")); // session overlay visible
    replica->abort_update_session();
    CHECK(replica->block_count() == 0);
  }

  SUBCASE("commit applies the blocks durably") {
    replica->begin_update_session();
    replica->write_block(image);
    replica->commit_update_session();
    CHECK(replica->read_record(id) == to_bytes("payload"));
    CHECK(replica->block_count() == 1);
  }

  SUBCASE("writes outside a session are rejected") {
    CHECK(icat::test::code_of([&] { replica->write_block(image); }) ==
          ErrorCode::NotInUpdateSession);
  }
}

TEST_CASE("a torn page is detected, not misread") {
  TempDir dir;
  RecordId id;
  {
    auto store = RecordStore::create(dir.file("s.dat"), 4096);
    id = store->insert_record(to_bytes("important"));
    store->flush(true);
  }
  // Scramble the page's slot directory on disk.
  {
    std::fstream f(dir.file("s.dat"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(RecordStore::kHeaderSize + 8); // block 0, slot_count field
    const char garbage[4] = {'\x7f', '\x7f', '\x7f', '\x7f'};
    f.write(garbage, 4);
  }
  auto store = RecordStore::open(dir.file("s.dat"));
  CHECK_THROWS_AS((void)store->read_record(id), Error);
}

TEST_CASE("drop_caches forces rereads from disk") {
  TempDir dir;
  auto store = RecordStore::create(dir.file("s.dat"), 4096);
  RecordId id = store->insert_record(to_bytes("cached"));
  store->flush(true);
  {
    std::fstream f(dir.file("s.dat"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(RecordStore::kHeaderSize + 4096 - 6));
    f.write("DAMAGE", 6);
  }
  CHECK(store->read_record(id) == to_bytes("cached")); // still served from cache
  store->drop_caches();
  CHECK(store->read_record(id) != to_bytes("cached"));
}
