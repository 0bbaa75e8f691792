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
#include <cstring>
#include <string>

#include "xmjoin/btree_index.hpp"
#include "xmjoin/errors.hpp"

namespace xmjoin
{
namespace
{
constexpr std::size_t kMaxChildren = kNodeFanout;
constexpr std::uint64_t kNoPage = ~std::uint64_t{0};

struct LeafEntry {
  std::uint64_t key;
  std::uint64_t row;
};

/// On-disk leaf page: [u32 count][u32 reserved][u64 next page][entries...].
struct LeafPage {
  std::uint32_t count;
  std::uint32_t reserved;
  std::uint64_t next;
  LeafEntry entries[DynamicBtree::kLeafCapacity];
};
static_assert(sizeof(LeafPage) == kNodeBytes);

/// In-memory inner node; children are inner node ids, or leaf pages at the lowest level.
struct Inner {
  bool leaf_children{true};
  std::vector<std::uint64_t> keys{};
  std::vector<std::uint64_t> children{};
};

}  // namespace

/*######################################################################################
 * Buffer pool
 *####################################################################################*/

struct DynamicBtree::Impl {
  struct Frame {
    std::uint64_t page{kNoPage};
    bool dirty{false};
    bool referenced{false};
    int pins{0};
  };

  BlockFile file;
  std::vector<Frame> frames;
  AlignedBuffer memory;
  std::unordered_map<std::uint64_t, std::size_t> resident{};
  std::size_t hand{0};

  std::vector<Inner> inner{};
  std::size_t root{0};
  std::size_t levels{1};
  std::uint64_t pages{0};
  std::uint64_t size{0};

  Impl(BlockFile f, std::size_t frame_count)
      : file{std::move(f)}, frames(frame_count), memory{frame_count * kNodeBytes}
  {
  }

  LeafPage &PageAt(std::size_t frame)
  {
    return *reinterpret_cast<LeafPage *>(memory.data() + frame * kNodeBytes);
  }

  void WriteBack(std::size_t f)
  {
    auto &frame = frames[f];
    file.WriteAt(kDataOffset + frame.page * kNodeBytes,
                 {memory.data() + f * kNodeBytes, kNodeBytes});
    frame.dirty = false;
  }

  std::size_t Victim()
  {
    for (std::size_t sweep = 0; sweep < 2 * frames.size() + 1; ++sweep) {
      auto &frame = frames[hand];
      const std::size_t f = hand;
      hand = (hand + 1) % frames.size();
      if (frame.pins > 0) continue;
      if (frame.page == kNoPage) return f;
      if (frame.referenced) {
        frame.referenced = false;
        continue;
      }
      return f;
    }
    throw ResourceError("buffer pool exhausted: every frame is pinned");
  }

  /// Pin `page` into a frame; `fresh` pages are zero-initialized instead of read.
  std::size_t Pin(std::uint64_t page, bool fresh)
  {
    if (const auto it = resident.find(page); it != resident.end()) {
      auto &frame = frames[it->second];
      frame.referenced = true;
      ++frame.pins;
      return it->second;
    }
    const std::size_t f = Victim();
    auto &frame = frames[f];
    if (frame.page != kNoPage) {
      if (frame.dirty) WriteBack(f);
      resident.erase(frame.page);
    }
    if (fresh) {
      std::memset(memory.data() + f * kNodeBytes, 0, kNodeBytes);
      PageAt(f).next = kNoPage;
    } else {
      file.ReadBlocks(page, 1, memory.data() + f * kNodeBytes);
    }
    frame = Frame{page, fresh, true, 1};
    resident.emplace(page, f);
    return f;
  }

  void Unpin(std::size_t f, bool dirty)
  {
    frames[f].dirty = frames[f].dirty || dirty;
    --frames[f].pins;
  }

  void FlushAll()
  {
    for (std::size_t f = 0; f < frames.size(); ++f) {
      if (frames[f].page != kNoPage && frames[f].dirty) WriteBack(f);
    }
  }

  /*####################################################################################
   * Tree structure
   *##################################################################################*/

  struct PathStep {
    std::size_t node;
    std::size_t slot;
  };

  std::uint64_t Descend(std::uint64_t key, std::vector<PathStep> *path)
  {
    std::size_t node = root;
    while (true) {
      const auto &n = inner[node];
      const auto it = std::upper_bound(n.keys.begin(), n.keys.end(), key);
      const auto slot = static_cast<std::size_t>(it - n.keys.begin());
      if (path != nullptr) path->push_back(PathStep{node, slot});
      if (n.leaf_children) return n.children[slot];
      node = n.children[slot];
    }
  }

  /// Insert (separator, right child) after `slot` of the nodes on `path`, splitting upward.
  void InsertSeparator(std::vector<PathStep> &path, std::uint64_t sep, std::uint64_t right)
  {
    while (true) {
      const auto step = path.back();
      path.pop_back();
      {
        auto &n = inner[step.node];
        n.keys.insert(n.keys.begin() + static_cast<std::ptrdiff_t>(step.slot), sep);
        n.children.insert(n.children.begin() + static_cast<std::ptrdiff_t>(step.slot) + 1, right);
        if (n.children.size() <= kMaxChildren) return;
      }
      // Left keeps half the children; the key between the halves moves up.
      const std::size_t keep = kMaxChildren / 2;
      Inner sibling;
      sibling.leaf_children = inner[step.node].leaf_children;
      {
        auto &n = inner[step.node];
        sep = n.keys[keep - 1];
        sibling.keys.assign(n.keys.begin() + static_cast<std::ptrdiff_t>(keep), n.keys.end());
        sibling.children.assign(n.children.begin() + static_cast<std::ptrdiff_t>(keep),
                                n.children.end());
        n.keys.resize(keep - 1);
        n.children.resize(keep);
      }
      inner.push_back(std::move(sibling));
      right = inner.size() - 1;
      if (path.empty()) {
        Inner top;
        top.leaf_children = false;
        top.keys = {sep};
        top.children = {step.node, right};
        inner.push_back(std::move(top));
        root = inner.size() - 1;
        ++levels;
        return;
      }
    }
  }
};

DynamicBtree::DynamicBtree(std::unique_ptr<Impl> impl) : impl_{std::move(impl)} {}
DynamicBtree::DynamicBtree(DynamicBtree &&) noexcept = default;
DynamicBtree &DynamicBtree::operator=(DynamicBtree &&) noexcept = default;

DynamicBtree::~DynamicBtree()
{
  if (!impl_) return;
  try {
    impl_->FlushAll();
  } catch (...) {
  }
}

DynamicBtree
DynamicBtree::Create(const std::filesystem::path &leaf_file, std::size_t pool_bytes)
{
  const std::size_t frames = std::max(kMinFrames, pool_bytes / kNodeBytes);
  auto file = BlockFile::Create(leaf_file);
  std::byte header[kBlockSize]{};
  std::memcpy(header, "BTLF", 4);
  file.WriteRaw(0, header);

  auto impl = std::make_unique<Impl>(std::move(file), frames);
  impl->inner.push_back(Inner{true, {}, {0}});
  impl->pages = 1;
  const auto f = impl->Pin(0, true);
  impl->Unpin(f, true);
  return DynamicBtree{std::move(impl)};
}

void
DynamicBtree::Insert(std::uint64_t key, std::uint64_t row)
{
  auto &t = *impl_;
  std::vector<Impl::PathStep> path;
  const auto page = t.Descend(key, &path);
  const auto f = t.Pin(page, false);
  auto &leaf = t.PageAt(f);

  const auto *begin = leaf.entries;
  const auto *end = leaf.entries + leaf.count;
  const auto *pos =
      std::lower_bound(begin, end, key, [](const LeafEntry &e, std::uint64_t k) { return e.key < k; });
  if (pos != end && pos->key == key) {
    t.Unpin(f, false);
    throw ContractError("duplicate key " + std::to_string(key));
  }
  const auto at = static_cast<std::size_t>(pos - begin);

  if (leaf.count < kLeafCapacity) {
    std::memmove(leaf.entries + at + 1, leaf.entries + at, (leaf.count - at) * sizeof(LeafEntry));
    leaf.entries[at] = LeafEntry{key, row};
    ++leaf.count;
    t.Unpin(f, true);
    ++t.size;
    return;
  }

  // Split a full leaf: the incoming entry joins whichever half it sorts into.
  std::vector<LeafEntry> all(leaf.entries, leaf.entries + leaf.count);
  all.insert(all.begin() + static_cast<std::ptrdiff_t>(at), LeafEntry{key, row});
  const std::size_t left_count = all.size() / 2;

  const std::uint64_t new_page = t.pages++;
  const auto g = t.Pin(new_page, true);
  auto &right = t.PageAt(g);
  auto &left = t.PageAt(f);
  right.count = static_cast<std::uint32_t>(all.size() - left_count);
  std::memcpy(right.entries, all.data() + left_count, right.count * sizeof(LeafEntry));
  right.next = left.next;
  left.count = static_cast<std::uint32_t>(left_count);
  std::memcpy(left.entries, all.data(), left_count * sizeof(LeafEntry));
  left.next = new_page;
  const auto separator = right.entries[0].key;
  t.Unpin(g, true);
  t.Unpin(f, true);
  ++t.size;

  t.InsertSeparator(path, separator, new_page);
}

std::optional<std::uint64_t>
DynamicBtree::Find(std::uint64_t key)
{
  auto &t = *impl_;
  const auto f = t.Pin(t.Descend(key, nullptr), false);
  const auto &leaf = t.PageAt(f);
  const auto *end = leaf.entries + leaf.count;
  const auto *pos = std::lower_bound(leaf.entries, end, key,
                                     [](const LeafEntry &e, std::uint64_t k) { return e.key < k; });
  std::optional<std::uint64_t> row;
  if (pos != end && pos->key == key) row = pos->row;
  t.Unpin(f, false);
  return row;
}

void
DynamicBtree::Scan(const std::function<void(std::uint64_t, std::uint64_t)> &visit)
{
  auto &t = *impl_;
  std::size_t node = t.root;
  while (!t.inner[node].leaf_children) node = t.inner[node].children.front();
  std::uint64_t page = t.inner[node].children.front();
  while (page != kNoPage) {
    const auto f = t.Pin(page, false);
    const auto &leaf = t.PageAt(f);
    for (std::uint32_t i = 0; i < leaf.count; ++i) visit(leaf.entries[i].key, leaf.entries[i].row);
    page = leaf.next;
    t.Unpin(f, false);
  }
}

void
DynamicBtree::Flush()
{
  impl_->FlushAll();
}

std::uint64_t
DynamicBtree::size() const
{
  return impl_->size;
}

std::uint64_t
DynamicBtree::leaf_count() const
{
  return impl_->pages;
}

std::size_t
DynamicBtree::inner_node_count() const
{
  return impl_->inner.size();
}

std::size_t
DynamicBtree::height() const
{
  return impl_->levels + 1;
}

std::size_t
DynamicBtree::frame_count() const
{
  return impl_->frames.size();
}

const IoStats &
DynamicBtree::stats() const
{
  return impl_->file.stats();
}

}  // namespace xmjoin
