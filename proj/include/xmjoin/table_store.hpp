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

#ifndef XMJOIN_TABLE_STORE_HPP
#define XMJOIN_TABLE_STORE_HPP

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace xmjoin
{
static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and decoded in place");

/*######################################################################################
 * Layout constants
 *####################################################################################*/

inline constexpr std::size_t kBlockSize = 4096;
inline constexpr std::size_t kTupleSize = 16;
inline constexpr std::size_t kTuplesPerBlock = kBlockSize / kTupleSize;
/// Tuples start after a header block so that data blocks are aligned for direct I/O.
inline constexpr std::size_t kDataOffset = kBlockSize;

struct Tuple {
  std::uint64_t key;
  std::uint64_t value;

  friend bool operator==(const Tuple &, const Tuple &) = default;
};
static_assert(sizeof(Tuple) == kTupleSize);

enum class Order { kUnsorted, kSorted };

constexpr std::uint64_t
BlocksFor(std::uint64_t tuples)
{
  return (tuples + kTuplesPerBlock - 1) / kTuplesPerBlock;
}

constexpr std::uint64_t
BlockOf(std::uint64_t rank)
{
  return rank / kTuplesPerBlock;
}

struct TableHeader {
  std::uint64_t tuple_count{0};
  std::uint64_t tuple_size{kTupleSize};

  /// Length of the header plus packed tuples, ignoring block padding.
  [[nodiscard]] std::uint64_t LogicalBytes() const { return 16 + tuple_count * tuple_size; }
  [[nodiscard]] std::uint64_t PhysicalBytes() const
  {
    return kDataOffset + BlocksFor(tuple_count) * kBlockSize;
  }
  [[nodiscard]] std::uint64_t DataBlocks() const { return BlocksFor(tuple_count); }

  friend bool operator==(const TableHeader &, const TableHeader &) = default;
};

/**
 * @brief Counters for data-region I/O. Header reads and rewrites are metadata and are
 * not counted.
 */
struct IoStats {
  std::uint64_t blocks_read{0};
  std::uint64_t io_calls{0};
  std::uint64_t blocks_written{0};
  std::uint64_t bytes_written{0};

  IoStats &operator+=(const IoStats &other);
  friend IoStats operator+(IoStats a, const IoStats &b) { return a += b; }
  friend bool operator==(const IoStats &, const IoStats &) = default;
};

/*######################################################################################
 * Raw block files
 *####################################################################################*/

/// Heap memory aligned to the block size, as required by cache-bypassing reads.
class AlignedBuffer
{
 public:
  AlignedBuffer() = default;
  explicit AlignedBuffer(std::size_t bytes);

  [[nodiscard]] std::byte *data() { return data_.get(); }
  [[nodiscard]] const std::byte *data() const { return data_.get(); }
  [[nodiscard]] std::size_t size() const { return size_; }

 private:
  struct Free {
    void operator()(std::byte *p) const;
  };
  std::unique_ptr<std::byte[], Free> data_{};
  std::size_t size_{0};
};

/**
 * @brief An owned file descriptor with block-granular reads and counted writes.
 *
 * Data block `b` lives at file offset kDataOffset + b * kBlockSize.
 */
class BlockFile
{
 public:
  BlockFile() = default;
  BlockFile(BlockFile &&other) noexcept;
  BlockFile &operator=(BlockFile &&other) noexcept;
  BlockFile(const BlockFile &) = delete;
  BlockFile &operator=(const BlockFile &) = delete;
  ~BlockFile();

  /// Open read-only. With `direct`, the OS cache is bypassed where supported.
  static BlockFile OpenRead(const std::filesystem::path &path, bool direct);
  /// Create (or truncate) a file for writing. Writes never bypass the OS cache.
  static BlockFile Create(const std::filesystem::path &path);
  /// Open an existing file for reads and in-place writes.
  static BlockFile OpenReadWrite(const std::filesystem::path &path);

  /// One I/O call reading `count` data blocks into `dst` (block-aligned if direct).
  void ReadBlocks(std::uint64_t first_block, std::uint64_t count, std::byte *dst);
  /// Counted write at an absolute file offset; touched blocks are tallied.
  void WriteAt(std::uint64_t offset, std::span<const std::byte> bytes);
  /// Uncounted positional I/O for headers and other metadata.
  void ReadRaw(std::uint64_t offset, std::span<std::byte> dst) const;
  void WriteRaw(std::uint64_t offset, std::span<const std::byte> bytes);
  void Truncate(std::uint64_t length);

  [[nodiscard]] std::uint64_t FileSize() const;
  [[nodiscard]] const IoStats &stats() const { return stats_; }
  [[nodiscard]] bool direct_effective() const { return direct_; }
  [[nodiscard]] const std::filesystem::path &path() const { return path_; }

 private:
  BlockFile(int fd, std::filesystem::path path, bool direct);
  void ReopenBuffered();

  int fd_{-1};
  std::filesystem::path path_{};
  bool direct_{false};
  IoStats stats_{};
};

/*######################################################################################
 * Tables
 *####################################################################################*/

/// Write a whole table. With Order::kSorted, keys must be strictly increasing.
TableHeader WriteTable(std::span<const Tuple> tuples,
                       const std::filesystem::path &path,
                       Order order = Order::kSorted);

/// Validate and return the header of a table file.
TableHeader ReadHeader(const std::filesystem::path &path);

/// Load every tuple of a table into memory (no stats; test and tooling helper).
std::vector<Tuple> ReadAll(const std::filesystem::path &path);
std::vector<std::uint64_t> ReadKeys(const std::filesystem::path &path);

class TableStream;

/**
 * @brief Buffered reader over one table file.
 *
 * The buffer holds one contiguous run of blocks. A window outside the buffer is served
 * by exactly one I/O call that loads the run starting at the block holding the window's
 * first rank, extended to the buffer capacity; blocks already buffered at the front of
 * that run are retained instead of re-read.
 */
class TableReader
{
 public:
  static TableReader Open(const std::filesystem::path &path,
                          std::size_t buffer_blocks = 1,
                          bool direct = false);

  [[nodiscard]] std::uint64_t size() const { return header_.tuple_count; }
  [[nodiscard]] const TableHeader &header() const { return header_; }

  /// Tuples [lo, hi). The span stays valid until the next read through this reader.
  std::span<const Tuple> ReadWindow(std::uint64_t lo, std::uint64_t hi);

  /// True when [lo, hi) is served from the buffer without I/O.
  [[nodiscard]] bool Buffered(std::uint64_t lo, std::uint64_t hi) const;
  [[nodiscard]] std::uint64_t buffer_begin() const;
  [[nodiscard]] std::uint64_t buffer_end() const;
  [[nodiscard]] std::size_t capacity_blocks() const { return capacity_blocks_; }

  /// Confine loads (including read-ahead) to the blocks covering ranks [begin, end).
  void Restrict(std::uint64_t begin, std::uint64_t end);

  /// When on, a miss that starts at most one buffer past the buffered run loads from the
  /// end of that run, so forward scans with small skips stay sequential. On by default.
  void set_fill_gaps(bool on) { fill_gaps_ = on; }

  /// Sequential stream over ranks [begin, end).
  TableStream Stream(std::uint64_t begin, std::uint64_t end);
  TableStream Stream();

  [[nodiscard]] const IoStats &stats() const { return file_.stats(); }
  [[nodiscard]] bool direct_effective() const { return file_.direct_effective(); }

 private:
  friend class TableStream;
  TableReader(BlockFile file, TableHeader header, std::size_t buffer_blocks);
  void Load(std::uint64_t lo, std::uint64_t hi, std::uint64_t limit);
  [[nodiscard]] const Tuple *TupleAt(std::uint64_t rank) const;

  BlockFile file_;
  TableHeader header_;
  std::size_t capacity_blocks_;
  AlignedBuffer buffer_;
  std::uint64_t buf_first_block_{0};
  std::uint64_t buf_blocks_{0};
  std::uint64_t limit_begin_{0};
  std::uint64_t limit_end_{0};
  bool fill_gaps_{true};
};

/// Forward-only cursor produced by TableReader::Stream.
class TableStream
{
 public:
  TableStream(TableReader &reader, std::uint64_t begin, std::uint64_t end);

  [[nodiscard]] bool done() const { return pos_ >= end_; }
  [[nodiscard]] std::uint64_t position() const { return pos_; }
  /// Current tuple; requires !done().
  const Tuple &Peek();
  void Advance() { ++pos_; }
  bool Next(Tuple &out);

 private:
  TableReader *reader_;
  std::uint64_t pos_;
  std::uint64_t end_;
};

/**
 * @brief Appending table writer with an internal block buffer.
 *
 * The header count is finalized at every flush, so the file is a valid table after
 * Flush() or Close(). A partially filled last block is rewritten by the next flush.
 */
class TableWriter
{
 public:
  static TableWriter Create(const std::filesystem::path &path,
                            Order order = Order::kUnsorted,
                            std::size_t buffer_blocks = 64);
  TableWriter(TableWriter &&other) noexcept;
  TableWriter &operator=(TableWriter &&other) = delete;
  TableWriter(const TableWriter &) = delete;
  TableWriter &operator=(const TableWriter &) = delete;
  ~TableWriter();

  void Append(const Tuple &tuple);
  void Append(std::span<const Tuple> tuples);
  void Flush();
  TableHeader Close();

  [[nodiscard]] std::uint64_t count() const { return count_; }
  [[nodiscard]] const IoStats &stats() const { return file_.stats(); }

 private:
  TableWriter(BlockFile file, Order order, std::size_t buffer_blocks);

  BlockFile file_;
  Order order_;
  std::vector<Tuple> buffer_;
  std::size_t capacity_;
  std::uint64_t buf_first_rank_{0};
  std::uint64_t count_{0};
  std::uint64_t last_key_{0};
  bool closed_{false};
};

/// Byte offset of the first difference between two files, or -1 when identical.
std::int64_t FirstDivergence(const std::filesystem::path &a, const std::filesystem::path &b);

}  // namespace xmjoin

#endif  // XMJOIN_TABLE_STORE_HPP
