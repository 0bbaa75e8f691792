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

#ifndef XMJOIN_JOIN_ENGINE_HPP
#define XMJOIN_JOIN_ENGINE_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xmjoin/search_index.hpp"
#include "xmjoin/table_store.hpp"

namespace xmjoin
{
enum class JoinMethod { kInljLearned, kInljBtree, kSortJoin, kHashJoin };

std::string_view MethodName(JoinMethod method);
/// Throws ContractError on an unknown name.
JoinMethod ParseMethod(std::string_view name);
[[nodiscard]] constexpr bool
UsesIndex(JoinMethod method)
{
  return method == JoinMethod::kInljLearned || method == JoinMethod::kInljBtree;
}

/**
 * @brief Branchless lower bound inside a loaded window.
 *
 * Returns the offset of the first tuple with key >= query (window.size() if none) and
 * adds the comparisons made, at most ceil(log2(size)) + 1, to `comparisons`.
 */
std::size_t LastMileSearch(std::span<const Tuple> window,
                           std::uint64_t query,
                           std::uint64_t &comparisons);

struct JoinOptions {
  JoinMethod method{JoinMethod::kInljLearned};
  std::size_t threads{1};
  /// Blocks per inner-table I/O; 0 picks WindowSpanBlocks of the index window, or a
  /// streaming buffer for scan-based methods.
  std::size_t fetch_blocks{0};
  std::size_t outer_buffer_blocks{64};
  bool direct{false};
  /// Start each search at the previous lower bound when it is past the window start.
  bool clamp_to_last{true};
  /// Route queries through a forward segment iterator instead of fresh lookups.
  bool use_iterator{true};
  /// Cap for the hash table of the outer keys; 0 means unlimited.
  std::size_t hash_memory_bytes{0};
};

struct JoinReport {
  IoStats outer{};
  IoStats inner{};
  IoStats output{};
  /// Reads spent choosing per-thread split points in the inner table.
  IoStats planning{};
  std::vector<IoStats> inner_per_thread{};
  std::uint64_t comparisons{0};
  std::uint64_t output_tuples{0};
  std::size_t fetch_blocks{0};
  double join_seconds{0};
  /// Set only for hash joins.
  double hash_build_seconds{-1};
  bool cache_bypass_effective{false};
};

/// Estimated bytes per entry of the in-memory hash table.
inline constexpr std::size_t kHashEntryBytes = 40;

/**
 * @brief Join two sorted tables on key, writing (key, inner value) in key order.
 *
 * The outer table is split into `threads` contiguous rank ranges. Each worker searches
 * only the inner rank range between the lower bounds of its first key and the next
 * worker's first key, then the per-worker outputs are concatenated.
 */
JoinReport RunJoin(const std::filesystem::path &outer,
                   const std::filesystem::path &inner,
                   const SearchIndex *inner_index,
                   const std::filesystem::path &output,
                   const JoinOptions &options);

}  // namespace xmjoin

#endif  // XMJOIN_JOIN_ENGINE_HPP
