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

#ifndef XMJOIN_SEARCH_INDEX_HPP
#define XMJOIN_SEARCH_INDEX_HPP

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>

namespace xmjoin
{
/**
 * @brief Half-open rank range [lo, hi) returned by an index.
 *
 * The lower bound of the query (smallest rank whose key is >= the query, or the table
 * size when no such key exists) satisfies lo <= lower_bound <= hi. A key present in the
 * table always has its rank strictly inside the window; lower_bound == hi only happens
 * when every key in the window is smaller than the query.
 */
struct SearchWindow {
  std::uint64_t lo{0};
  std::uint64_t hi{0};

  [[nodiscard]] std::uint64_t width() const { return hi - lo; }
  friend bool operator==(const SearchWindow &, const SearchWindow &) = default;
};

/// Per-join lookup state; queries must be non-decreasing.
class IndexCursor
{
 public:
  virtual ~IndexCursor() = default;
  virtual SearchWindow Lookup(std::uint64_t query) = 0;
  /// Key comparisons spent routing queries to leaves/segments.
  [[nodiscard]] virtual std::uint64_t comparisons() const = 0;
};

/// Common read contract of the in-memory indexes over a sorted table.
class SearchIndex
{
 public:
  virtual ~SearchIndex() = default;

  [[nodiscard]] virtual SearchWindow Lookup(std::uint64_t query) const = 0;
  [[nodiscard]] virtual std::unique_ptr<IndexCursor> MakeCursor() const = 0;
  /// Number of tuples in the indexed table.
  [[nodiscard]] virtual std::uint64_t key_count() const = 0;
  /// Upper bound on hi - lo of any returned window.
  [[nodiscard]] virtual std::uint64_t max_window() const = 0;
  [[nodiscard]] virtual std::size_t SizeBytes() const = 0;
  [[nodiscard]] virtual std::string kind() const = 0;
};

/// Blocks an unaligned run of `window` tuples can span.
std::uint64_t WindowSpanBlocks(std::uint64_t window);

/// Load an index file of either kind, dispatching on its magic.
std::unique_ptr<SearchIndex> LoadIndex(const std::string &path);

}  // namespace xmjoin

#endif  // XMJOIN_SEARCH_INDEX_HPP
