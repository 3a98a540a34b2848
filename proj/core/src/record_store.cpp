#include "icat/record_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

namespace icat {

namespace {

constexpr char kMagic[4] = {'I', 'C', 'A', 'T'};
constexpr std::uint32_t kMaxPageSize = 32768; // slot offsets are u16
constexpr int kMaxForwardHops = 1000;

bool is_power_of_two(std::uint32_t v) { return v != 0 && (v & (v - 1)) == 0; }

void pread_exact(int fd, void* buf, std::size_t n, std::uint64_t off) {
  auto* p = static_cast<std::uint8_t*>(buf);
  while (n > 0) {
    ssize_t r = ::pread(fd, p, n, static_cast<off_t>(off));
    if (r < 0) {
      if (errno == EINTR) continue;
      raise(ErrorCode::IoError, std::string("pread: ") + std::strerror(errno));
    }
    if (r == 0) raise(ErrorCode::IoError, "unexpected end of file");
    p += r;
    n -= static_cast<std::size_t>(r);
    off += static_cast<std::uint64_t>(r);
  }
}

void pwrite_exact(int fd, const void* buf, std::size_t n, std::uint64_t off) {
  const auto* p = static_cast<const std::uint8_t*>(buf);
  while (n > 0) {
    ssize_t r = ::pwrite(fd, p, n, static_cast<off_t>(off));
    if (r < 0) {
      if (errno == EINTR) continue;
      raise(ErrorCode::IoError, std::string("pwrite: ") + std::strerror(errno));
    }
    p += r;
    n -= static_cast<std::size_t>(r);
    off += static_cast<std::uint64_t>(r);
  }
}

} // namespace

std::unique_ptr<RecordStore> RecordStore::create(const std::string& path,
                                                 std::uint32_t page_size) {
  if (!is_power_of_two(page_size) || page_size < 4096 || page_size > kMaxPageSize)
    raise(ErrorCode::InvalidPageSize,
          "page_size must be a power of two in [4096, 32768], got " +
              std::to_string(page_size));
  int fd = ::open(path.c_str(), O_CREAT | O_RDWR | O_TRUNC, 0644);
  if (fd < 0) raise(ErrorCode::IoError, "cannot create " + path + ": " + std::strerror(errno));

  auto store = std::unique_ptr<RecordStore>(new RecordStore());
  store->path_ = path;
  store->fd_ = fd;
  store->page_size_ = page_size;
  store->file_block_count_ = 0;
  store->current_epoch_ = 1;
  store->write_header();
  if (::fsync(fd) != 0) raise(ErrorCode::IoError, "fsync failed");
  return store;
}

std::unique_ptr<RecordStore> RecordStore::open(const std::string& path) {
  int fd = ::open(path.c_str(), O_RDWR);
  if (fd < 0) raise(ErrorCode::IoError, "cannot open " + path + ": " + std::strerror(errno));
  auto store = std::unique_ptr<RecordStore>(new RecordStore());
  store->path_ = path;
  store->fd_ = fd;
  store->load_header();
  return store;
}

RecordStore::~RecordStore() {
  try {
    // Open-epoch work must survive a clean shutdown; crash durability is
    // still the owner's job via flush(sync) at snapshot time.
    if (!in_session_) flush(false);
  } catch (...) {
  }
  if (fd_ >= 0) ::close(fd_);
}

void RecordStore::load_header() {
  std::uint8_t hdr[32];
  pread_exact(fd_, hdr, sizeof(hdr), 0);
  if (std::memcmp(hdr, kMagic, 4) != 0)
    raise(ErrorCode::IoError, "bad magic in " + path_);
  std::uint32_t version = load_u32(hdr + 4);
  if (version != kFormatVersion)
    raise(ErrorCode::IoError, "unsupported format version " + std::to_string(version));
  page_size_ = load_u32(hdr + 8);
  if (!is_power_of_two(page_size_) || page_size_ < 4096 || page_size_ > kMaxPageSize)
    raise(ErrorCode::IoError, "corrupt header: bad page size");
  file_block_count_ = load_u64(hdr + 12);
  current_epoch_ = load_u64(hdr + 20);

  off_t len = ::lseek(fd_, 0, SEEK_END);
  if (len < 0) raise(ErrorCode::IoError, "lseek failed");
  std::uint64_t expected = kHeaderSize + file_block_count_ * std::uint64_t(page_size_);
  if (static_cast<std::uint64_t>(len) < expected)
    raise(ErrorCode::IoError, "file shorter than header claims");

  stamps_.resize(file_block_count_);
  for (std::uint64_t b = 0; b < file_block_count_; ++b) {
    std::uint8_t buf[8];
    pread_exact(fd_, buf, 8, kHeaderSize + b * std::uint64_t(page_size_));
    stamps_[b] = load_u64(buf);
  }
}

void RecordStore::write_header() {
  std::uint8_t hdr[kHeaderSize] = {0};
  std::memcpy(hdr, kMagic, 4);
  store_u32(hdr + 4, kFormatVersion);
  store_u32(hdr + 8, page_size_);
  store_u64(hdr + 12, file_block_count_);
  store_u64(hdr + 20, current_epoch_);
  pwrite_exact(fd_, hdr, kHeaderSize, 0);
  header_dirty_ = false;
}

std::uint64_t RecordStore::block_count() const {
  std::uint64_t count = stamps_.size();
  if (in_session_ && !session_blocks_.empty())
    count = std::max(count, session_blocks_.rbegin()->first + 1);
  return count;
}

RecordStore::Page& RecordStore::page(std::uint64_t block_no) const {
  auto it = cache_.find(block_no);
  if (it != cache_.end()) return it->second;
  Page pg;
  pg.data.resize(page_size_);
  pread_exact(fd_, pg.data.data(), page_size_, kHeaderSize + block_no * std::uint64_t(page_size_));
  return cache_.emplace(block_no, std::move(pg)).first->second;
}

const Bytes* RecordStore::session_page(std::uint64_t block_no) const {
  if (!in_session_) return nullptr;
  auto it = session_blocks_.find(block_no);
  return it == session_blocks_.end() ? nullptr : &it->second.payload;
}

std::uint32_t RecordStore::free_space(const Bytes& pg) const {
  std::uint16_t slot_count = load_u16(pg.data() + 8);
  std::uint16_t free_offset = load_u16(pg.data() + 10);
  std::uint32_t dir_end = kPageHeaderSize + kSlotEntrySize * std::uint32_t(slot_count);
  if (free_offset < dir_end || free_offset > page_size_)
    raise(ErrorCode::CorruptBlock, "inconsistent page header");
  return free_offset - dir_end;
}

std::uint64_t RecordStore::allocate_block() {
  std::uint64_t block_no = stamps_.size();
  Page pg;
  pg.data.assign(page_size_, 0);
  store_u64(pg.data.data(), current_epoch_);
  store_u16(pg.data.data() + 8, 0);
  store_u16(pg.data.data() + 10, static_cast<std::uint16_t>(page_size_));
  pg.dirty = true;
  cache_[block_no] = std::move(pg);
  stamps_.push_back(current_epoch_);
  file_block_count_ = stamps_.size();
  header_dirty_ = true;
  return block_no;
}

void RecordStore::stamp(std::uint64_t block_no) {
  Page& pg = page(block_no);
  if (load_u64(pg.data.data()) != current_epoch_) {
    store_u64(pg.data.data(), current_epoch_);
    stamps_[block_no] = current_epoch_;
  }
  pg.dirty = true;
}

RecordId RecordStore::insert_into(std::uint64_t block_no, BytesView data) {
  Page& pg = page(block_no);
  std::uint16_t slot_count = load_u16(pg.data.data() + 8);
  std::uint16_t free_offset = load_u16(pg.data.data() + 10);
  std::uint32_t alloc = std::max<std::uint32_t>(static_cast<std::uint32_t>(data.size()), kMinAlloc);

  std::uint16_t new_offset = static_cast<std::uint16_t>(free_offset - alloc);
  if (!data.empty()) std::memcpy(pg.data.data() + new_offset, data.data(), data.size());
  std::uint8_t* entry = pg.data.data() + kPageHeaderSize + kSlotEntrySize * std::uint32_t(slot_count);
  store_u16(entry, new_offset);
  store_u16(entry + 2, static_cast<std::uint16_t>(data.size()));
  store_u16(pg.data.data() + 8, static_cast<std::uint16_t>(slot_count + 1));
  store_u16(pg.data.data() + 10, new_offset);
  stamp(block_no);
  return RecordId{block_no, slot_count};
}

RecordId RecordStore::insert_record(BytesView data) {
  std::lock_guard lock(mutex_);
  if (in_session_) raise(ErrorCode::NotInUpdateSession, "mutation during binary-update session");
  if (data.size() > max_record_size())
    raise(ErrorCode::RecordTooLarge, "record of " + std::to_string(data.size()) + " octets");

  std::uint32_t need = kSlotEntrySize + std::max<std::uint32_t>(static_cast<std::uint32_t>(data.size()), kMinAlloc);
  std::uint64_t target;
  if (stamps_.empty()) {
    target = allocate_block();
  } else {
    target = stamps_.size() - 1;
    const Page& pg = page(target);
    std::uint16_t slot_count = load_u16(pg.data.data() + 8);
    if (slot_count >= 0xFFFE || free_space(pg.data) < need) target = allocate_block();
  }
  return insert_into(target, data);
}

void RecordStore::check_slot_bounds(const Bytes& pg, std::uint16_t offset, std::uint32_t length,
                                    std::uint64_t block_no) const {
  std::uint16_t free_offset = load_u16(pg.data() + 10);
  if (offset < free_offset || std::uint32_t(offset) + length > page_size_)
    raise(ErrorCode::CorruptBlock,
          "slot data out of bounds in block " + std::to_string(block_no));
}

RecordId RecordStore::resolve(RecordId id) const {
  for (int hop = 0; hop < kMaxForwardHops; ++hop) {
    if (id.block_no >= block_count())
      raise(ErrorCode::BadRecordId, "block " + std::to_string(id.block_no) + " out of range");
    const Bytes* sp = session_page(id.block_no);
    const Bytes& pg = sp ? *sp : page(id.block_no).data;
    std::uint16_t slot_count = load_u16(pg.data() + 8);
    free_space(pg); // validates the page header
    if (id.slot_no >= slot_count)
      raise(ErrorCode::BadRecordId, "slot " + std::to_string(id.slot_no) + " unallocated");
    const std::uint8_t* entry = pg.data() + kPageHeaderSize + kSlotEntrySize * std::uint32_t(id.slot_no);
    std::uint16_t offset = load_u16(entry);
    std::uint16_t length = load_u16(entry + 2);
    if (length != kMovedLength) return id;
    check_slot_bounds(pg, offset, kMinAlloc, id.block_no);
    id = RecordId::decode(pg.data() + offset);
  }
  raise(ErrorCode::CorruptBlock, "forwarding chain too long");
}

Bytes RecordStore::read_record(RecordId id) const {
  std::lock_guard lock(mutex_);
  RecordId loc = resolve(id);
  const Bytes* sp = session_page(loc.block_no);
  const Bytes& pg = sp ? *sp : page(loc.block_no).data;
  const std::uint8_t* entry = pg.data() + kPageHeaderSize + kSlotEntrySize * std::uint32_t(loc.slot_no);
  std::uint16_t offset = load_u16(entry);
  std::uint16_t length = load_u16(entry + 2);
  check_slot_bounds(pg, offset, length, loc.block_no);
  return Bytes(pg.begin() + offset, pg.begin() + offset + length);
}

RecordId RecordStore::update_record(RecordId id, BytesView data) {
  std::lock_guard lock(mutex_);
  if (in_session_) raise(ErrorCode::NotInUpdateSession, "mutation during binary-update session");
  if (data.size() > max_record_size())
    raise(ErrorCode::RecordTooLarge, "record of " + std::to_string(data.size()) + " octets");

  RecordId loc = resolve(id);
  Page& pg = page(loc.block_no);
  std::uint8_t* entry = pg.data.data() + kPageHeaderSize + kSlotEntrySize * std::uint32_t(loc.slot_no);
  std::uint16_t offset = load_u16(entry);
  std::uint16_t length = load_u16(entry + 2);
  check_slot_bounds(pg.data, offset, length, loc.block_no);
  std::uint32_t alloc = std::max<std::uint32_t>(length, kMinAlloc);

  if (data.size() <= alloc) {
    if (!data.empty()) std::memcpy(pg.data.data() + offset, data.data(), data.size());
    store_u16(entry + 2, static_cast<std::uint16_t>(data.size()));
    stamp(loc.block_no);
    return loc;
  }

  std::uint32_t new_alloc = std::max<std::uint32_t>(static_cast<std::uint32_t>(data.size()), kMinAlloc);
  std::uint16_t free_offset = load_u16(pg.data.data() + 10);
  std::uint16_t slot_count = load_u16(pg.data.data() + 8);
  std::uint32_t dir_end = kPageHeaderSize + kSlotEntrySize * std::uint32_t(slot_count);
  if (free_offset - dir_end >= new_alloc) {
    std::uint16_t new_offset = static_cast<std::uint16_t>(free_offset - new_alloc);
    std::memcpy(pg.data.data() + new_offset, data.data(), data.size());
    store_u16(entry, new_offset);
    store_u16(entry + 2, static_cast<std::uint16_t>(data.size()));
    store_u16(pg.data.data() + 10, new_offset);
    stamp(loc.block_no);
    return loc;
  }

  // Relocate: the record moves wholly to a block with space; the old slot
  // keeps a forwarding pointer so ids held by older snapshots stay resolvable.
  std::uint32_t need = kSlotEntrySize + new_alloc;
  std::uint64_t target = stamps_.size() - 1;
  if (target == loc.block_no || free_space(page(target).data) < need ||
      load_u16(page(target).data.data() + 8) >= 0xFFFE)
    target = allocate_block();
  RecordId new_id = insert_into(target, data);

  Bytes fwd;
  new_id.encode(fwd);
  std::memcpy(pg.data.data() + offset, fwd.data(), kMinAlloc);
  store_u16(entry + 2, kMovedLength);
  stamp(loc.block_no);
  return new_id;
}

void RecordStore::set_current_epoch(std::uint64_t snapshot_id) {
  std::lock_guard lock(mutex_);
  if (snapshot_id < current_epoch_)
    raise(ErrorCode::EpochRegression,
          "epoch " + std::to_string(snapshot_id) + " < " + std::to_string(current_epoch_));
  if (snapshot_id != current_epoch_) {
    current_epoch_ = snapshot_id;
    header_dirty_ = true;
  }
}

std::vector<std::uint64_t> RecordStore::blocks_of_epoch(std::uint64_t snapshot_id) const {
  std::lock_guard lock(mutex_);
  std::vector<std::uint64_t> out;
  for (std::uint64_t b = 0; b < stamps_.size(); ++b)
    if (stamps_[b] == snapshot_id) out.push_back(b);
  return out;
}

BlockImage RecordStore::read_block(std::uint64_t block_no) const {
  std::lock_guard lock(mutex_);
  if (block_no >= block_count())
    raise(ErrorCode::BadBlockNo, "block " + std::to_string(block_no) + " out of range");
  BlockImage image;
  image.block_no = block_no;
  const Bytes* sp = session_page(block_no);
  image.payload = sp ? *sp : page(block_no).data;
  image.epoch_stamp = load_u64(image.payload.data());
  return image;
}

void RecordStore::write_block(const BlockImage& image) {
  std::lock_guard lock(mutex_);
  if (!in_session_) raise(ErrorCode::NotInUpdateSession, "write_block outside update session");
  if (image.payload.size() != page_size_)
    raise(ErrorCode::CorruptBlock, "page payload size mismatch");
  if (load_u64(image.payload.data()) != image.epoch_stamp)
    raise(ErrorCode::CorruptBlock, "epoch stamp disagrees with page contents");
  session_blocks_[image.block_no] = image;
}

void RecordStore::begin_update_session() {
  std::lock_guard lock(mutex_);
  if (in_session_) raise(ErrorCode::NotInUpdateSession, "session already open");
  in_session_ = true;
  session_blocks_.clear();
}

void RecordStore::abort_update_session() {
  std::lock_guard lock(mutex_);
  in_session_ = false;
  session_blocks_.clear();
}

void RecordStore::commit_update_session() {
  std::lock_guard lock(mutex_);
  if (!in_session_) raise(ErrorCode::NotInUpdateSession, "no session to commit");
  for (auto& [block_no, image] : session_blocks_) {
    while (block_no > stamps_.size()) {
      // Hole left by out-of-order extension: a valid empty page, stamp 0.
      Page filler;
      filler.data.assign(page_size_, 0);
      store_u16(filler.data.data() + 10, static_cast<std::uint16_t>(page_size_));
      filler.dirty = true;
      cache_[stamps_.size()] = std::move(filler);
      stamps_.push_back(0);
    }
    Page pg;
    pg.data = image.payload;
    pg.dirty = true;
    cache_[block_no] = std::move(pg);
    if (block_no == stamps_.size())
      stamps_.push_back(image.epoch_stamp);
    else
      stamps_[block_no] = image.epoch_stamp;
  }
  file_block_count_ = stamps_.size();
  header_dirty_ = true;
  in_session_ = false;
  session_blocks_.clear();
  flush_locked(true);
}

void RecordStore::flush(bool sync) {
  std::lock_guard lock(mutex_);
  flush_locked(sync);
}

void RecordStore::flush_locked(bool sync) {
  std::vector<std::uint64_t> dirty;
  for (auto& [block_no, pg] : cache_)
    if (pg.dirty) dirty.push_back(block_no);
  std::sort(dirty.begin(), dirty.end());
  // Block 0 holds the structure heads; writing it last keeps a crash from
  // exposing a head that points at unwritten pages.
  auto write_one = [&](std::uint64_t block_no) {
    Page& pg = cache_[block_no];
    pwrite_exact(fd_, pg.data.data(), page_size_, kHeaderSize + block_no * std::uint64_t(page_size_));
    pg.dirty = false;
  };
  bool block0 = false;
  for (std::uint64_t b : dirty) {
    if (b == 0) {
      block0 = true;
      continue;
    }
    write_one(b);
  }
  if (block0) write_one(0);
  if (header_dirty_) write_header();
  if (sync && ::fsync(fd_) != 0) raise(ErrorCode::IoError, "fsync failed");
}

void RecordStore::drop_caches() {
  std::lock_guard lock(mutex_);
  cache_.clear();
  stamps_.clear();
  load_header();
}

} // namespace icat
