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

#include <algorithm>
#include <string>

#include "binary_io.hpp"
#include "xmjoin/btree_index.hpp"
#include "xmjoin/errors.hpp"

namespace xmjoin
{
namespace
{
constexpr std::uint32_t kBtreeVersion = 1;

std::uint64_t
NodesFor(std::uint64_t entries)
{
  return (entries + kNodeFanout - 1) / kNodeFanout;
}

/// Rightmost entry with key <= query within node [begin, end), or begin if none.
std::size_t
SearchNode(const std::vector<PivotBtree::Entry> &level,
           std::size_t begin,
           std::size_t end,
           std::uint64_t query,
           std::uint64_t &comparisons)
{
  std::size_t lo = begin;
  std::size_t len = end - begin;
  while (len > 1) {
    const std::size_t half = len / 2;
    ++comparisons;
    lo = level[lo + half].key <= query ? lo + half : lo;
    len -= half;
  }
  return lo;
}

class PivotCursor final : public IndexCursor
{
 public:
  explicit PivotCursor(const PivotBtree &tree) : tree_{&tree} {}
  SearchWindow Lookup(std::uint64_t query) override { return tree_->Lookup(query, comparisons_); }
  [[nodiscard]] std::uint64_t comparisons() const override { return comparisons_; }

 private:
  const PivotBtree *tree_;
  std::uint64_t comparisons_{0};
};

}  // namespace

PivotBtree
PivotBtree::BulkLoad(std::span<const std::uint64_t> keys)
{
  PivotBtree tree;
  tree.key_count_ = keys.size();
  if (keys.empty()) return tree;
  for (std::size_t i = 1; i < keys.size(); ++i) {
    if (keys[i] <= keys[i - 1]) {
      throw ContractError("btree keys must be strictly increasing (rank " + std::to_string(i) +
                          ")");
    }
  }

  std::vector<Entry> leaves;
  leaves.reserve(BlocksFor(keys.size()));
  for (std::uint64_t b = 0; b * kTuplesPerBlock < keys.size(); ++b) {
    leaves.push_back(Entry{keys[b * kTuplesPerBlock], b});
  }
  tree.levels_.push_back(std::move(leaves));

  while (tree.levels_.back().size() > kNodeFanout) {
    const auto &below = tree.levels_.back();
    std::vector<Entry> level;
    level.reserve(NodesFor(below.size()));
    for (std::uint64_t node = 0; node * kNodeFanout < below.size(); ++node) {
      level.push_back(Entry{below[node * kNodeFanout].key, node});
    }
    tree.levels_.push_back(std::move(level));
  }
  return tree;
}

SearchWindow
PivotBtree::Lookup(std::uint64_t query) const
{
  std::uint64_t ignored = 0;
  return Lookup(query, ignored);
}

SearchWindow
PivotBtree::Lookup(std::uint64_t query, std::uint64_t &comparisons) const
{
  if (levels_.empty()) return {};
  std::size_t node = 0;
  std::size_t slot = 0;
  for (std::size_t l = levels_.size(); l-- > 0;) {
    const auto &level = levels_[l];
    const std::size_t begin = node * kNodeFanout;
    const std::size_t end = std::min(level.size(), begin + kNodeFanout);
    slot = SearchNode(level, begin, end, query, comparisons);
    node = level[slot].ref;
  }
  const std::uint64_t lo = node * kTuplesPerBlock;
  return SearchWindow{lo, std::min<std::uint64_t>(key_count_, lo + kTuplesPerBlock)};
}

std::unique_ptr<IndexCursor>
PivotBtree::MakeCursor() const
{
  return std::make_unique<PivotCursor>(*this);
}

std::uint64_t
PivotBtree::pivot_count() const
{
  return levels_.empty() ? 0 : levels_.front().size();
}

std::size_t
PivotBtree::node_count() const
{
  std::size_t nodes = 0;
  for (const auto &level : levels_) nodes += NodesFor(level.size());
  return nodes;
}

void
PivotBtree::Serialize(const std::filesystem::path &path) const
{
  detail::ByteWriter out;
  out.Magic("BTPI");
  out.Put<std::uint32_t>(kBtreeVersion);
  out.Put<std::uint64_t>(key_count_);
  out.Put<std::uint64_t>(pivot_count());
  for (std::size_t l = levels_.size(); l-- > 0;) {
    const auto &level = levels_[l];
    for (std::size_t begin = 0; begin < level.size(); begin += kNodeFanout) {
      const std::size_t end = std::min(level.size(), begin + kNodeFanout);
      for (std::size_t i = begin; i < end; ++i) {
        out.Put<std::uint64_t>(level[i].key);
        out.Put<std::uint64_t>(level[i].ref);
      }
      out.Pad((kNodeFanout - (end - begin)) * 16);
    }
  }
  out.Save(path);
}

PivotBtree
PivotBtree::Deserialize(const std::filesystem::path &path)
{
  detail::ByteReader in{path};
  in.ExpectMagic("BTPI");
  const auto version = in.Get<std::uint32_t>();
  if (version != kBtreeVersion) {
    throw FormatError("unsupported index version " + std::to_string(version) + " in '" +
                      path.string() + "'");
  }
  PivotBtree tree;
  tree.key_count_ = in.Get<std::uint64_t>();
  const auto pivots = in.Get<std::uint64_t>();
  if (pivots != BlocksFor(tree.key_count_)) {
    throw FormatError("pivot count does not match key count in '" + path.string() + "'");
  }
  if (pivots == 0) return tree;

  // Level sizes follow from the pivot count because every node but the last is full.
  std::vector<std::uint64_t> sizes{pivots};
  while (sizes.back() > kNodeFanout) sizes.push_back(NodesFor(sizes.back()));
  std::uint64_t nodes = 0;
  for (auto s : sizes) nodes += NodesFor(s);
  if (in.remaining() != nodes * kNodeBytes) {
    throw FormatError("node array has wrong length in '" + path.string() + "'");
  }

  tree.levels_.resize(sizes.size());
  for (std::size_t l = sizes.size(); l-- > 0;) {
    auto &level = tree.levels_[l];
    level.reserve(sizes[l]);
    for (std::uint64_t begin = 0; begin < sizes[l]; begin += kNodeFanout) {
      const std::uint64_t end = std::min<std::uint64_t>(sizes[l], begin + kNodeFanout);
      for (std::uint64_t i = begin; i < end; ++i) {
        const auto key = in.Get<std::uint64_t>();
        const auto ref = in.Get<std::uint64_t>();
        if (ref != i) throw FormatError("corrupt node reference in '" + path.string() + "'");
        level.push_back(Entry{key, ref});
      }
      in.Skip((kNodeFanout - (end - begin)) * 16);
    }
  }
  return tree;
}

}  // namespace xmjoin
