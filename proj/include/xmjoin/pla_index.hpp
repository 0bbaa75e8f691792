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

#ifndef XMJOIN_PLA_INDEX_HPP
#define XMJOIN_PLA_INDEX_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "xmjoin/search_index.hpp"

namespace xmjoin
{
/**
 * @brief One error-bounded linear piece of the key-to-rank mapping.
 *
 * The predicted (training) rank of key x >= first_key is
 * intercept + slope * (x - first_key), rounded and clamped to the segment's rank span.
 */
struct Segment {
  std::uint64_t first_key;
  double slope;
  double intercept;
  std::uint64_t start_rank;

  friend bool operator==(const Segment &, const Segment &) = default;
};
static_assert(sizeof(Segment) == 32);

class SegmentIterator;

/**
 * @brief Single-level piecewise-linear learned index with optional sampling.
 *
 * With sample rate k, the model is trained on the keys at ranks 0, k, 2k, ... with error
 * bound epsilon; a training-space window [a, b] maps back to full-table ranks
 * [k(a - 1) + 1, k*b + 1), so every window is at most k * (epsilon + 1) * 2 wide.
 */
class PlaIndex final : public SearchIndex
{
 public:
  /// Fixed in-memory overhead next to the segment array.
  static constexpr std::size_t kFixedBytes = 48;

  PlaIndex() = default;

  static PlaIndex Build(std::span<const std::uint64_t> keys, std::uint64_t epsilon);
  static PlaIndex BuildSampled(std::span<const std::uint64_t> keys,
                               std::uint64_t sample_rate,
                               std::uint64_t epsilon);

  [[nodiscard]] SearchWindow Lookup(std::uint64_t query) const override;
  [[nodiscard]] std::unique_ptr<IndexCursor> MakeCursor() const override;
  [[nodiscard]] std::uint64_t key_count() const override { return key_count_; }
  [[nodiscard]] std::uint64_t max_window() const override
  {
    return sample_rate_ * (epsilon_ + 1) * 2;
  }
  [[nodiscard]] std::size_t SizeBytes() const override
  {
    return segments_.size() * sizeof(Segment) + kFixedBytes;
  }
  [[nodiscard]] std::string kind() const override
  {
    return sample_rate_ == 1 ? "pla" : "pla_sampled";
  }

  /// Index of the segment owning `query` (segment 0 for keys below the first key).
  [[nodiscard]] std::size_t SegmentFor(std::uint64_t query) const;
  /// Rounded, clamped training-space rank predicted by segment `segment` for `query`.
  [[nodiscard]] std::uint64_t Predict(std::size_t segment, std::uint64_t query) const;
  [[nodiscard]] std::uint64_t Predict(std::uint64_t query) const
  {
    return Predict(SegmentFor(query), query);
  }
  /// Full-table window around a training-space prediction.
  [[nodiscard]] SearchWindow WindowAround(std::uint64_t predicted) const;

  [[nodiscard]] SegmentIterator Iterator() const;

  void Serialize(const std::filesystem::path &path) const;
  static PlaIndex Deserialize(const std::filesystem::path &path);

  [[nodiscard]] const std::vector<Segment> &segments() const { return segments_; }
  [[nodiscard]] std::uint64_t n_train() const { return n_train_; }
  [[nodiscard]] std::uint64_t sample_rate() const { return sample_rate_; }
  [[nodiscard]] std::uint64_t epsilon() const { return epsilon_; }

  friend bool operator==(const PlaIndex &a, const PlaIndex &b)
  {
    return a.segments_ == b.segments_ && a.n_train_ == b.n_train_ &&
           a.sample_rate_ == b.sample_rate_ && a.epsilon_ == b.epsilon_ &&
           a.key_count_ == b.key_count_;
  }

 private:
  std::vector<Segment> segments_{};
  std::uint64_t n_train_{0};
  std::uint64_t sample_rate_{1};
  std::uint64_t epsilon_{0};
  std::uint64_t key_count_{0};
};

/**
 * @brief Forward-only walk over the segments for non-decreasing queries.
 *
 * The first query routes by binary search; later queries step to the next segment
 * while its first key is <= the query.
 */
class SegmentIterator
{
 public:
  explicit SegmentIterator(const PlaIndex &index) : index_{&index} {}

  /// Segment owning `query`; throws ContractError if `query` decreased.
  std::size_t AdvanceTo(std::uint64_t query);
  SearchWindow Lookup(std::uint64_t query);

  [[nodiscard]] std::uint64_t advances() const { return advances_; }
  [[nodiscard]] std::uint64_t comparisons() const { return comparisons_; }

 private:
  const PlaIndex *index_;
  std::size_t current_{0};
  std::uint64_t last_query_{0};
  bool started_{false};
  std::uint64_t advances_{0};
  std::uint64_t comparisons_{0};
};

}  // namespace xmjoin

#endif  // XMJOIN_PLA_INDEX_HPP
