#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "icat/bytes.hpp"
#include "icat/errors.hpp"

namespace icat {

/// Location of a record inside the catalog file. Encoded on disk as
/// block_no u48 | slot_no u16, little-endian, 8 octets total.
struct RecordId {
  std::uint64_t block_no = 0;
  std::uint16_t slot_no = 0;

  bool operator==(const RecordId&) const = default;
  auto operator<=>(const RecordId&) const = default;

  static constexpr std::uint64_t kNilBlock = (std::uint64_t(1) << 48) - 1;

  static RecordId nil() { return RecordId{kNilBlock, 0xFFFF}; }
  bool is_nil() const { return block_no == kNilBlock && slot_no == 0xFFFF; }

  std::uint64_t packed() const { return (block_no << 16) | slot_no; }

  void encode(Bytes& out) const {
    std::uint8_t buf[8];
    store_u64(buf, packed());
    out.insert(out.end(), buf, buf + 8);
  }
  static RecordId decode(const std::uint8_t* p) {
    std::uint64_t v = load_u64(p);
    return RecordId{v >> 16, static_cast<std::uint16_t>(v & 0xFFFF)};
  }
};

/// One raw page plus its replication metadata.
struct BlockImage {
  std::uint64_t block_no = 0;
  std::uint64_t epoch_stamp = 0;
  Bytes payload; // page_size octets, starting with the on-disk page header
};

/// Variable-length record manager over fixed-size blocks in a single file.
///
/// File format: 4096-octet header (magic "ICAT", format_version u32,
/// page_size u32, block_count u64, current_epoch u64), then block_count
/// pages. Page layout: epoch_stamp u64, slot_count u16, free_offset u16,
/// slot directory of (offset u16, length u16), data heap growing down from
/// the end of the page. The store is grow-only; records are never freed.
///
/// Pages are cached in memory and written back on flush(). A full file sync
/// happens only when the owner asks for it (at snapshot time).
class RecordStore {
public:
  static constexpr std::uint32_t kHeaderSize = 4096;
  static constexpr std::uint32_t kFormatVersion = 1;
  static constexpr std::uint32_t kPageHeaderSize = 12; // stamp u64 + slot_count u16 + free_offset u16
  static constexpr std::uint32_t kSlotEntrySize = 4;
  static constexpr std::uint16_t kMovedLength = 0xFFFF;
  static constexpr std::uint32_t kMinAlloc = 8; // room for a forwarding RecordId

  static std::unique_ptr<RecordStore> create(const std::string& path, std::uint32_t page_size);
  static std::unique_ptr<RecordStore> open(const std::string& path);

  ~RecordStore();
  RecordStore(const RecordStore&) = delete;
  RecordStore& operator=(const RecordStore&) = delete;

  std::uint32_t page_size() const { return page_size_; }
  std::uint64_t block_count() const;
  std::uint64_t current_epoch() const { return current_epoch_; }
  std::size_t max_record_size() const {
    return page_size_ - kPageHeaderSize - kSlotEntrySize;
  }
  /// Logical file length: header plus all allocated pages.
  std::uint64_t file_size() const {
    return kHeaderSize + block_count() * std::uint64_t(page_size_);
  }
  const std::string& path() const { return path_; }

  RecordId insert_record(BytesView data);
  Bytes read_record(RecordId id) const;
  /// Rewrites a record. May relocate it when its block lacks free space; the
  /// old slot then forwards to the new location and reads through either id
  /// keep working. Returns the record's current location.
  RecordId update_record(RecordId id, BytesView data);

  void set_current_epoch(std::uint64_t snapshot_id);
  std::vector<std::uint64_t> blocks_of_epoch(std::uint64_t snapshot_id) const;

  BlockImage read_block(std::uint64_t block_no) const;
  /// Only legal inside a binary-update session. Replaces the raw page
  /// verbatim, extending the store when block_no is beyond the current end.
  void write_block(const BlockImage& image);

  void begin_update_session();
  void commit_update_session(); // applies buffered blocks, flushes, syncs
  void abort_update_session();
  bool in_update_session() const { return in_session_; }

  void flush(bool sync);

  /// Discards all cached pages; subsequent reads hit the file. Test hook for
  /// fault-injection after out-of-band file edits.
  void drop_caches();

private:
  struct Page {
    Bytes data;
    bool dirty = false;
  };

  RecordStore() = default;

  Page& page(std::uint64_t block_no) const;
  const Bytes* session_page(std::uint64_t block_no) const;
  void load_header();
  void write_header();
  void stamp(std::uint64_t block_no);
  std::uint64_t allocate_block();
  std::uint32_t free_space(const Bytes& pg) const;
  RecordId resolve(RecordId id) const;
  RecordId insert_into(std::uint64_t block_no, BytesView data);
  void flush_locked(bool sync);
  void check_slot_bounds(const Bytes& pg, std::uint16_t offset, std::uint32_t length,
                         std::uint64_t block_no) const;

  std::string path_;
  int fd_ = -1;
  std::uint32_t page_size_ = 0;
  std::uint64_t file_block_count_ = 0; // blocks present in the file itself
  std::uint64_t current_epoch_ = 1;
  bool header_dirty_ = false;

  mutable std::mutex mutex_;
  mutable std::unordered_map<std::uint64_t, Page> cache_;
  std::vector<std::uint64_t> stamps_; // per-block epoch stamp mirror

  bool in_session_ = false;
  std::map<std::uint64_t, BlockImage> session_blocks_;
};

} // namespace icat
