/*
 * Copyright 2026 The xmjoin Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "xmjoin/table_store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <utility>

#include "xmjoin/errors.hpp"

namespace xmjoin
{
namespace
{
[[noreturn]] void
ThrowErrno(const std::string &what, const std::filesystem::path &path)
{
  throw IoError(what + " '" + path.string() + "': " + std::strerror(errno));
}

void
EncodeHeader(const TableHeader &header, std::byte *out)
{
  std::memcpy(out, &header.tuple_count, 8);
  std::memcpy(out + 8, &header.tuple_size, 8);
}

}  // namespace

IoStats &
IoStats::operator+=(const IoStats &other)
{
  blocks_read += other.blocks_read;
  io_calls += other.io_calls;
  blocks_written += other.blocks_written;
  bytes_written += other.bytes_written;
  return *this;
}

/*######################################################################################
 * AlignedBuffer
 *####################################################################################*/

AlignedBuffer::AlignedBuffer(std::size_t bytes)
{
  const auto rounded = std::max<std::size_t>(kBlockSize, (bytes + kBlockSize - 1) / kBlockSize * kBlockSize);
  auto *raw = static_cast<std::byte *>(std::aligned_alloc(kBlockSize, rounded));
  if (raw == nullptr) throw std::bad_alloc{};
  std::memset(raw, 0, rounded);
  data_.reset(raw);
  size_ = rounded;
}

void
AlignedBuffer::Free::operator()(std::byte *p) const
{
  std::free(p);
}

/*######################################################################################
 * BlockFile
 *####################################################################################*/

BlockFile::BlockFile(int fd, std::filesystem::path path, bool direct)
    : fd_{fd}, path_{std::move(path)}, direct_{direct}
{
}

BlockFile::BlockFile(BlockFile &&other) noexcept
    : fd_{std::exchange(other.fd_, -1)},
      path_{std::move(other.path_)},
      direct_{other.direct_},
      stats_{other.stats_}
{
}

BlockFile &
BlockFile::operator=(BlockFile &&other) noexcept
{
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
    path_ = std::move(other.path_);
    direct_ = other.direct_;
    stats_ = other.stats_;
  }
  return *this;
}

BlockFile::~BlockFile()
{
  if (fd_ >= 0) ::close(fd_);
}

BlockFile
BlockFile::OpenRead(const std::filesystem::path &path, bool direct)
{
#ifdef O_DIRECT
  if (direct) {
    const int fd = ::open(path.c_str(), O_RDONLY | O_DIRECT);
    if (fd >= 0) return BlockFile{fd, path, true};
    // EINVAL: the filesystem refuses O_DIRECT; fall through to a buffered open.
    if (errno != EINVAL) ThrowErrno("cannot open", path);
  }
#endif
  const int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) ThrowErrno("cannot open", path);
  return BlockFile{fd, path, false};
}

BlockFile
BlockFile::Create(const std::filesystem::path &path)
{
  const int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) ThrowErrno("cannot create", path);
  return BlockFile{fd, path, false};
}

BlockFile
BlockFile::OpenReadWrite(const std::filesystem::path &path)
{
  const int fd = ::open(path.c_str(), O_RDWR);
  if (fd < 0) ThrowErrno("cannot open", path);
  return BlockFile{fd, path, false};
}

void
BlockFile::ReopenBuffered()
{
  const int fd = ::open(path_.c_str(), O_RDONLY);
  if (fd < 0) ThrowErrno("cannot reopen", path_);
  ::close(fd_);
  fd_ = fd;
  direct_ = false;
}

void
BlockFile::ReadBlocks(std::uint64_t first_block, std::uint64_t count, std::byte *dst)
{
  if (count == 0) return;
  const std::uint64_t offset = kDataOffset + first_block * kBlockSize;
  const std::uint64_t length = count * kBlockSize;
  std::uint64_t done = 0;
  while (done < length) {
    const auto n = ::pread(fd_, dst + done, length - done, static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EINVAL && direct_) {
        ReopenBuffered();
        continue;
      }
      ThrowErrno("read failed on", path_);
    }
    if (n == 0) throw IoError("unexpected end of file in '" + path_.string() + "'");
    done += static_cast<std::uint64_t>(n);
  }
  stats_.io_calls += 1;
  stats_.blocks_read += count;
}

void
BlockFile::WriteAt(std::uint64_t offset, std::span<const std::byte> bytes)
{
  if (bytes.empty()) return;
  WriteRaw(offset, bytes);
  const auto first = offset / kBlockSize;
  const auto last = (offset + bytes.size() - 1) / kBlockSize;
  stats_.blocks_written += last - first + 1;
  stats_.bytes_written += bytes.size();
}

void
BlockFile::ReadRaw(std::uint64_t offset, std::span<std::byte> dst) const
{
  if (direct_ && !dst.empty()) {
    // Cache-bypassing descriptors only accept aligned transfers.
    const auto first = offset / kBlockSize * kBlockSize;
    const auto end = (offset + dst.size() + kBlockSize - 1) / kBlockSize * kBlockSize;
    AlignedBuffer staging{end - first};
    const auto n = ::pread(fd_, staging.data(), staging.size(), static_cast<off_t>(first));
    if (n < 0) ThrowErrno("read failed on", path_);
    if (static_cast<std::uint64_t>(n) < offset - first + dst.size()) {
      throw FormatError("unexpected end of file in '" + path_.string() + "'");
    }
    std::memcpy(dst.data(), staging.data() + (offset - first), dst.size());
    return;
  }
  std::uint64_t done = 0;
  while (done < dst.size()) {
    const auto n =
        ::pread(fd_, dst.data() + done, dst.size() - done, static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      ThrowErrno("read failed on", path_);
    }
    if (n == 0) throw FormatError("unexpected end of file in '" + path_.string() + "'");
    done += static_cast<std::uint64_t>(n);
  }
}

void
BlockFile::WriteRaw(std::uint64_t offset, std::span<const std::byte> bytes)
{
  std::uint64_t done = 0;
  while (done < bytes.size()) {
    const auto n = ::pwrite(fd_, bytes.data() + done, bytes.size() - done,
                            static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      ThrowErrno("write failed on", path_);
    }
    done += static_cast<std::uint64_t>(n);
  }
}

void
BlockFile::Truncate(std::uint64_t length)
{
  if (::ftruncate(fd_, static_cast<off_t>(length)) != 0) ThrowErrno("truncate failed on", path_);
}

std::uint64_t
BlockFile::FileSize() const
{
  struct stat st {
  };
  if (::fstat(fd_, &st) != 0) ThrowErrno("stat failed on", path_);
  return static_cast<std::uint64_t>(st.st_size);
}

/*######################################################################################
 * Whole-table helpers
 *####################################################################################*/

namespace
{
TableHeader
ValidateHeader(const BlockFile &file)
{
  const auto length = file.FileSize();
  if (length < kDataOffset) {
    throw FormatError("truncated table '" + file.path().string() + "': " +
                      std::to_string(length) + " bytes");
  }
  std::byte raw[16];
  file.ReadRaw(0, raw);
  TableHeader header{};
  std::memcpy(&header.tuple_count, raw, 8);
  std::memcpy(&header.tuple_size, raw + 8, 8);
  if (header.tuple_size != kTupleSize) {
    throw FormatError("unsupported tuple size " + std::to_string(header.tuple_size) + " in '" +
                      file.path().string() + "'");
  }
  if (header.tuple_count > (length / kTupleSize) || header.PhysicalBytes() != length) {
    throw FormatError("table '" + file.path().string() + "' has " + std::to_string(length) +
                      " bytes but its header declares " + std::to_string(header.tuple_count) +
                      " tuples");
  }
  return header;
}

}  // namespace

TableHeader
WriteTable(std::span<const Tuple> tuples, const std::filesystem::path &path, Order order)
{
  auto writer = TableWriter::Create(path, order);
  writer.Append(tuples);
  return writer.Close();
}

TableHeader
ReadHeader(const std::filesystem::path &path)
{
  return ValidateHeader(BlockFile::OpenRead(path, false));
}

std::vector<Tuple>
ReadAll(const std::filesystem::path &path)
{
  auto reader = TableReader::Open(path, 64);
  std::vector<Tuple> out;
  out.reserve(reader.size());
  auto stream = reader.Stream();
  Tuple t{};
  while (stream.Next(t)) out.push_back(t);
  return out;
}

std::vector<std::uint64_t>
ReadKeys(const std::filesystem::path &path)
{
  auto reader = TableReader::Open(path, 64);
  std::vector<std::uint64_t> out;
  out.reserve(reader.size());
  auto stream = reader.Stream();
  Tuple t{};
  while (stream.Next(t)) out.push_back(t.key);
  return out;
}

/*######################################################################################
 * TableReader
 *####################################################################################*/

TableReader::TableReader(BlockFile file, TableHeader header, std::size_t buffer_blocks)
    : file_{std::move(file)},
      header_{header},
      capacity_blocks_{std::max<std::size_t>(1, buffer_blocks)},
      buffer_{capacity_blocks_ * kBlockSize},
      limit_end_{header.tuple_count}
{
}

TableReader
TableReader::Open(const std::filesystem::path &path, std::size_t buffer_blocks, bool direct)
{
  auto file = BlockFile::OpenRead(path, direct);
  const auto header = ValidateHeader(file);
  return TableReader{std::move(file), header, buffer_blocks};
}

std::uint64_t
TableReader::buffer_begin() const
{
  return std::min(buf_first_block_ * kTuplesPerBlock, size());
}

std::uint64_t
TableReader::buffer_end() const
{
  return std::min((buf_first_block_ + buf_blocks_) * kTuplesPerBlock, size());
}

bool
TableReader::Buffered(std::uint64_t lo, std::uint64_t hi) const
{
  if (lo >= hi) return true;
  return buf_blocks_ > 0 && lo >= buffer_begin() && hi <= buffer_end();
}

void
TableReader::Restrict(std::uint64_t begin, std::uint64_t end)
{
  if (begin > end || end > size()) {
    throw BoundsError("restriction [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") outside table of " + std::to_string(size()) + " tuples");
  }
  limit_begin_ = begin;
  limit_end_ = end;
}

const Tuple *
TableReader::TupleAt(std::uint64_t rank) const
{
  const auto offset = (rank - buf_first_block_ * kTuplesPerBlock) * kTupleSize;
  return reinterpret_cast<const Tuple *>(buffer_.data() + offset);
}

std::span<const Tuple>
TableReader::ReadWindow(std::uint64_t lo, std::uint64_t hi)
{
  if (lo > hi || hi > size()) {
    throw BoundsError("window [" + std::to_string(lo) + ", " + std::to_string(hi) +
                      ") outside table of " + std::to_string(size()) + " tuples");
  }
  if (lo == hi) return {};
  if (!Buffered(lo, hi)) Load(lo, hi, limit_end_);
  return {TupleAt(lo), static_cast<std::size_t>(hi - lo)};
}

void
TableReader::Load(std::uint64_t lo, std::uint64_t hi, std::uint64_t limit)
{
  auto first = BlockOf(lo);
  const auto last = BlockOf(hi - 1);
  const auto buffered_end = buf_first_block_ + buf_blocks_;
  if (fill_gaps_ && buf_blocks_ > 0 && first >= buffered_end &&
      first <= buffered_end + capacity_blocks_) {
    // A forward skip of at most one buffer continues the run instead of leaving a hole,
    // so filler never exceeds the blocks the miss needs.
    first = buffered_end;
  }
  const auto limit_blocks = BlocksFor(std::max(std::min(limit, limit_end_), hi));
  const auto run_end = std::max(last + 1, std::min(first + capacity_blocks_, limit_blocks));
  const auto run_blocks = run_end - first;

  const auto buf_end_block = buf_first_block_ + buf_blocks_;
  const bool overlaps = buf_blocks_ > 0 && first >= buf_first_block_ && first < buf_end_block;
  const std::uint64_t retained = overlaps ? std::min(buf_end_block, run_end) - first : 0;

  if (run_blocks * kBlockSize > buffer_.size()) {
    AlignedBuffer grown{run_blocks * kBlockSize};
    if (retained > 0) {
      std::memcpy(grown.data(), buffer_.data() + (first - buf_first_block_) * kBlockSize,
                  retained * kBlockSize);
    }
    buffer_ = std::move(grown);
  } else if (retained > 0 && first != buf_first_block_) {
    std::memmove(buffer_.data(), buffer_.data() + (first - buf_first_block_) * kBlockSize,
                 retained * kBlockSize);
  }
  file_.ReadBlocks(first + retained, run_blocks - retained,
                   buffer_.data() + retained * kBlockSize);
  buf_first_block_ = first;
  buf_blocks_ = run_blocks;
}

TableStream
TableReader::Stream(std::uint64_t begin, std::uint64_t end)
{
  if (begin > end || end > size()) {
    throw BoundsError("stream [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") outside table of " + std::to_string(size()) + " tuples");
  }
  return TableStream{*this, begin, end};
}

TableStream
TableReader::Stream()
{
  return TableStream{*this, 0, size()};
}

/*######################################################################################
 * TableStream
 *####################################################################################*/

TableStream::TableStream(TableReader &reader, std::uint64_t begin, std::uint64_t end)
    : reader_{&reader}, pos_{begin}, end_{end}
{
}

const Tuple &
TableStream::Peek()
{
  if (!reader_->Buffered(pos_, pos_ + 1)) reader_->Load(pos_, pos_ + 1, end_);
  return *reader_->TupleAt(pos_);
}

bool
TableStream::Next(Tuple &out)
{
  if (done()) return false;
  out = Peek();
  ++pos_;
  return true;
}

/*######################################################################################
 * TableWriter
 *####################################################################################*/

TableWriter::TableWriter(BlockFile file, Order order, std::size_t buffer_blocks)
    : file_{std::move(file)},
      order_{order},
      capacity_{std::max<std::size_t>(1, buffer_blocks) * kTuplesPerBlock}
{
  buffer_.reserve(capacity_);
}

TableWriter
TableWriter::Create(const std::filesystem::path &path, Order order, std::size_t buffer_blocks)
{
  auto file = BlockFile::Create(path);
  std::vector<std::byte> header_block(kBlockSize);
  EncodeHeader(TableHeader{}, header_block.data());
  file.WriteRaw(0, header_block);
  return TableWriter{std::move(file), order, buffer_blocks};
}

TableWriter::TableWriter(TableWriter &&other) noexcept
    : file_{std::move(other.file_)},
      order_{other.order_},
      buffer_{std::move(other.buffer_)},
      capacity_{other.capacity_},
      buf_first_rank_{other.buf_first_rank_},
      count_{other.count_},
      last_key_{other.last_key_},
      closed_{std::exchange(other.closed_, true)}
{
}

TableWriter::~TableWriter()
{
  if (!closed_) {
    try {
      Close();
    } catch (...) {
      // destructors must not throw; callers wanting errors call Close()
    }
  }
}

void
TableWriter::Append(const Tuple &tuple)
{
  if (closed_) throw ContractError("append to a closed table writer");
  if (order_ == Order::kSorted && count_ > 0 && tuple.key <= last_key_) {
    throw ContractError("keys must be strictly increasing in a sorted table: " +
                        std::to_string(tuple.key) + " follows " + std::to_string(last_key_));
  }
  buffer_.push_back(tuple);
  last_key_ = tuple.key;
  ++count_;
  if (buffer_.size() == capacity_) Flush();
}

void
TableWriter::Append(std::span<const Tuple> tuples)
{
  for (const auto &t : tuples) Append(t);
}

void
TableWriter::Flush()
{
  if (closed_) return;
  const auto pending = buffer_.size();
  if (pending > 0) {
    const auto padded = BlocksFor(pending) * kTuplesPerBlock;
    buffer_.resize(padded, Tuple{0, 0});
    const auto bytes = std::as_bytes(std::span{buffer_});
    file_.WriteAt(kDataOffset + buf_first_rank_ * kTupleSize, bytes);
    buffer_.resize(pending);

    const auto tail = pending % kTuplesPerBlock;
    const auto kept_from = pending - tail;
    std::move(buffer_.begin() + static_cast<std::ptrdiff_t>(kept_from), buffer_.end(),
              buffer_.begin());
    buffer_.resize(tail);
    buf_first_rank_ += kept_from;
  }
  std::byte raw[16];
  EncodeHeader(TableHeader{count_, kTupleSize}, raw);
  file_.WriteRaw(0, raw);
}

TableHeader
TableWriter::Close()
{
  if (!closed_) {
    Flush();
    closed_ = true;
  }
  return TableHeader{count_, kTupleSize};
}

/*######################################################################################
 * Comparison
 *####################################################################################*/

std::int64_t
FirstDivergence(const std::filesystem::path &a, const std::filesystem::path &b)
{
  std::ifstream fa{a, std::ios::binary};
  std::ifstream fb{b, std::ios::binary};
  if (!fa) throw IoError("cannot open '" + a.string() + "'");
  if (!fb) throw IoError("cannot open '" + b.string() + "'");
  std::vector<char> ba(1 << 16);
  std::vector<char> bb(1 << 16);
  std::int64_t offset = 0;
  while (true) {
    fa.read(ba.data(), static_cast<std::streamsize>(ba.size()));
    fb.read(bb.data(), static_cast<std::streamsize>(bb.size()));
    const auto na = fa.gcount();
    const auto nb = fb.gcount();
    const auto common = std::min(na, nb);
    for (std::streamsize i = 0; i < common; ++i) {
      if (ba[static_cast<std::size_t>(i)] != bb[static_cast<std::size_t>(i)]) return offset + i;
    }
    if (na != nb) return offset + common;
    if (na == 0) return -1;
    offset += na;
  }
}

}  // namespace xmjoin
