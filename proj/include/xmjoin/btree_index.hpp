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

#ifndef XMJOIN_BTREE_INDEX_HPP
#define XMJOIN_BTREE_INDEX_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "xmjoin/search_index.hpp"
#include "xmjoin/table_store.hpp"

namespace xmjoin
{
inline constexpr std::size_t kNodeBytes = 4096;
/// Entries of (u64 key, u64 reference) per 4 KB node.
inline constexpr std::size_t kNodeFanout = kNodeBytes / 16;

/**
 * @brief Bulk-loaded B-tree over every 256th key of a sorted table.
 *
 * Leaf entries map a pivot (the first key of a data block) to its block number, so a
 * lookup returns the 256-tuple window of that block. Nodes are packed full from left to
 * right; only the last node of each level may be partially filled.
 */
class PivotBtree final : public SearchIndex
{
 public:
  struct Entry {
    std::uint64_t key;
    std::uint64_t ref;

    friend bool operator==(const Entry &, const Entry &) = default;
  };

  PivotBtree() = default;

  static PivotBtree BulkLoad(std::span<const std::uint64_t> keys);

  [[nodiscard]] SearchWindow Lookup(std::uint64_t query) const override;
  [[nodiscard]] std::unique_ptr<IndexCursor> MakeCursor() const override;
  [[nodiscard]] std::uint64_t key_count() const override { return key_count_; }
  [[nodiscard]] std::uint64_t max_window() const override { return kTuplesPerBlock; }
  [[nodiscard]] std::size_t SizeBytes() const override { return node_count() * kNodeBytes; }
  [[nodiscard]] std::string kind() const override { return "btree_pivot"; }

  /// Lookup that also reports the number of key comparisons made.
  SearchWindow Lookup(std::uint64_t query, std::uint64_t &comparisons) const;

  [[nodiscard]] std::uint64_t pivot_count() const;
  [[nodiscard]] std::size_t height() const { return levels_.size(); }
  [[nodiscard]] std::size_t node_count() const;
  /// Levels from the leaves (0) up to the root; node i of a level is entries [256i, 256i+256).
  [[nodiscard]] const std::vector<std::vector<Entry>> &levels() const { return levels_; }

  void Serialize(const std::filesystem::path &path) const;
  static PivotBtree Deserialize(const std::filesystem::path &path);

  friend bool operator==(const PivotBtree &a, const PivotBtree &b)
  {
    return a.levels_ == b.levels_ && a.key_count_ == b.key_count_;
  }

 private:
  std::vector<std::vector<Entry>> levels_{};
  std::uint64_t key_count_{0};
};

/**
 * @brief Insert-built B+-tree whose leaves live in a page file behind a small buffer pool.
 *
 * Inner nodes stay in memory. Leaf pages are read and written through BlockFile, so the
 * pool's evictions show up in IoStats. Eviction is CLOCK over a fixed number of frames
 * derived from the byte cap.
 */
class DynamicBtree
{
 public:
  /// Entries per leaf page after the 16-byte page header.
  static constexpr std::size_t kLeafCapacity = (kNodeBytes - 16) / 16;
  static constexpr std::size_t kMinFrames = 3;

  static DynamicBtree Create(const std::filesystem::path &leaf_file, std::size_t pool_bytes);

  DynamicBtree(DynamicBtree &&) noexcept;
  DynamicBtree &operator=(DynamicBtree &&) noexcept;
  ~DynamicBtree();

  /// Throws ContractError on a duplicate key.
  void Insert(std::uint64_t key, std::uint64_t row);
  std::optional<std::uint64_t> Find(std::uint64_t key);
  /// In-order visit of every (key, row).
  void Scan(const std::function<void(std::uint64_t key, std::uint64_t row)> &visit);
  /// Write back every dirty leaf.
  void Flush();

  [[nodiscard]] std::uint64_t size() const;
  [[nodiscard]] std::uint64_t leaf_count() const;
  [[nodiscard]] std::size_t inner_node_count() const;
  [[nodiscard]] std::size_t height() const;
  [[nodiscard]] std::size_t frame_count() const;
  /// Bytes of in-memory inner nodes at 4 KB per node.
  [[nodiscard]] std::size_t SizeBytes() const { return inner_node_count() * kNodeBytes; }
  [[nodiscard]] const IoStats &stats() const;

 private:
  struct Impl;
  explicit DynamicBtree(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

}  // namespace xmjoin

#endif  // XMJOIN_BTREE_INDEX_HPP
