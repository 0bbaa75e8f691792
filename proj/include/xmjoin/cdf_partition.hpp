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

#ifndef XMJOIN_CDF_PARTITION_HPP
#define XMJOIN_CDF_PARTITION_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include "xmjoin/pla_index.hpp"
#include "xmjoin/table_store.hpp"

namespace xmjoin
{
inline constexpr double kDefaultSampleFraction = 0.01;
/// Error bound of the PLA trained on the sample.
inline constexpr std::uint64_t kModelEpsilon = 8;
/// Tuples buffered per partition before a write.
inline constexpr std::size_t kFlushGroup = 8;

/**
 * @brief CDF model learned from a uniform sample of an unsorted table.
 *
 * The index is trained on the sorted sample. Ranks are estimated by interpolating
 * linearly between the segment knots (first key, start rank), with a final knot at the
 * largest sampled key. The estimate is continuous and monotone in the key and exact at
 * the knots. Unlike the clamped segment lines it has no flat steps at segment ends, so
 * no partition collects a whole error window of keys. Scaling by
 * table_count / sample_size estimates full-table ranks.
 */
struct SampledModel {
  PlaIndex index{};
  std::uint64_t table_count{0};
  std::uint64_t sample_size{0};
  std::uint64_t last_key{0};

  /// Estimated sample rank in [0, sample_size].
  [[nodiscard]] double SampleRank(std::uint64_t key) const;
  [[nodiscard]] double EstimateRank(std::uint64_t key) const;
  /// floor(SampleRank * partitions / sample_size), clamped to [0, partitions - 1].
  [[nodiscard]] std::uint64_t PartitionOf(std::uint64_t key, std::uint64_t partitions) const;

  /// [magic "SMDL"][u64 table_count][u64 sample_size][u64 last_key]; the index goes to
  /// its own file.
  void Serialize(const std::filesystem::path &summary, const std::filesystem::path &index_file) const;
  static SampledModel Deserialize(const std::filesystem::path &summary,
                                  const std::filesystem::path &index_file);

  friend bool operator==(const SampledModel &, const SampledModel &) = default;
};

/// One sequential pass drawing round(fraction * N) tuples without replacement (at least 2).
SampledModel TrainSampledModel(const std::filesystem::path &table,
                               double fraction,
                               std::uint64_t seed,
                               IoStats *io = nullptr,
                               std::uint64_t epsilon = kModelEpsilon);

struct PartitionEntry {
  std::uint64_t offset_block;
  std::uint64_t count;
  /// First block of this partition's overflow chain; 0 when it has none.
  std::uint64_t spill_block;

  friend bool operator==(const PartitionEntry &, const PartitionEntry &) = default;
};

/**
 * @brief Where each partition of an unclustered table lives.
 *
 * Partition p starts at data block p * extent_blocks() and holds up to extent_capacity()
 * tuples there; the rest follows a chain of spill chunks of the same size, each starting
 * with a 16-byte [next chunk block][tuple count] header.
 */
struct PartitionMap {
  std::uint64_t partitions{0};
  std::uint64_t table_count{0};
  std::vector<PartitionEntry> entries{};

  [[nodiscard]] std::uint64_t extent_blocks() const;
  [[nodiscard]] std::uint64_t extent_capacity() const { return extent_blocks() * kTuplesPerBlock; }
  [[nodiscard]] std::uint64_t spill_capacity() const { return extent_capacity() - 1; }

  void Serialize(const std::filesystem::path &path) const;
  static PartitionMap Deserialize(const std::filesystem::path &path);

  friend bool operator==(const PartitionMap &, const PartitionMap &) = default;
};

/// Blocks per partition extent: room for 1.5x the mean partition size.
std::uint64_t ExtentBlocks(std::uint64_t table_count, std::uint64_t partitions);
/// Partitions whose mean size is one block.
std::uint64_t DefaultPartitions(std::uint64_t table_count);

struct PartitionResult {
  PartitionMap map{};
  IoStats sample_pass{};
  IoStats assign_pass{};
  IoStats written{};
  std::uint64_t spilled_partitions{0};
};

/// Second pass: route every tuple to its model partition in `out`.
PartitionResult Partition(const std::filesystem::path &table,
                          const SampledModel &model,
                          std::uint64_t partitions,
                          const std::filesystem::path &out);

/**
 * @brief Both passes; writes <prefix>.part, <prefix>.pmap and the model as <prefix>.smdl
 * plus <prefix>.plai.
 *
 * `partitions` 0 selects DefaultPartitions.
 */
PartitionResult PartitionTable(const std::filesystem::path &table,
                               double fraction,
                               std::uint64_t seed,
                               std::uint64_t partitions,
                               const std::filesystem::path &prefix);

/// Load model and map written by PartitionTable.
SampledModel LoadModel(const std::filesystem::path &prefix);

/// Tuples of one partition in stored (unsorted) order.
std::vector<Tuple> ReadPartition(BlockFile &file, const PartitionMap &map, std::uint64_t p);

struct UnclusteredReport {
  IoStats outer{};
  IoStats inner{};
  IoStats output{};
  std::uint64_t output_tuples{0};
  std::uint64_t inner_partitions_loaded{0};
  std::uint64_t comparisons{0};
  double join_seconds{0};
};

/**
 * @brief Join two partitioned tables, writing (key, inner value) in key order.
 *
 * Outer partitions are loaded and sorted one at a time; each key is routed through the
 * inner model to one inner partition, which is cached (sorted) until a later key needs
 * another.
 */
UnclusteredReport UnclusteredJoin(const std::filesystem::path &outer_prefix,
                                  const std::filesystem::path &inner_prefix,
                                  const std::filesystem::path &output);

}  // namespace xmjoin

#endif  // XMJOIN_CDF_PARTITION_HPP
