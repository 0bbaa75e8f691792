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

#include "xmjoin/pla_index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "binary_io.hpp"
#include "xmjoin/errors.hpp"

namespace xmjoin
{
namespace
{
constexpr std::uint32_t kPlaVersion = 1;

/// Shrinking-cone segmentation: every segment is anchored at its first point and keeps
/// the interval of slopes that hold all of its points within `epsilon` ranks.
std::vector<Segment>
Segmentize(std::span<const std::uint64_t> keys, std::uint64_t epsilon)
{
  std::vector<Segment> segments;
  if (keys.empty()) return segments;

  const auto eps = static_cast<double>(epsilon);
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::uint64_t origin_key = keys[0];
  std::uint64_t origin_rank = 0;
  double slope_lo = -kInf;
  double slope_hi = kInf;

  const auto close = [&]() {
    double slope = 0.0;
    if (slope_hi != kInf) slope = std::max(0.0, slope_lo + (slope_hi - slope_lo) / 2);
    segments.push_back(Segment{origin_key, slope, static_cast<double>(origin_rank), origin_rank});
  };

  for (std::size_t i = 1; i < keys.size(); ++i) {
    if (keys[i] <= keys[i - 1]) {
      throw ContractError("index keys must be strictly increasing (rank " + std::to_string(i) +
                          ")");
    }
    const auto dx = static_cast<double>(keys[i] - origin_key);
    const auto dy = static_cast<double>(i - origin_rank);
    const double lo = std::max(slope_lo, (dy - eps) / dx);
    const double hi = std::min(slope_hi, (dy + eps) / dx);
    if (lo > hi) {
      close();
      origin_key = keys[i];
      origin_rank = i;
      slope_lo = -kInf;
      slope_hi = kInf;
    } else {
      slope_lo = lo;
      slope_hi = hi;
    }
  }
  close();
  return segments;
}

std::uint64_t
CeilLog2(std::uint64_t n)
{
  return n <= 1 ? 0 : static_cast<std::uint64_t>(std::bit_width(n - 1));
}

class PlaCursor final : public IndexCursor
{
 public:
  explicit PlaCursor(const PlaIndex &index) : iter_{index} {}
  SearchWindow Lookup(std::uint64_t query) override { return iter_.Lookup(query); }
  [[nodiscard]] std::uint64_t comparisons() const override { return iter_.comparisons(); }

 private:
  SegmentIterator iter_;
};

}  // namespace

PlaIndex
PlaIndex::Build(std::span<const std::uint64_t> keys, std::uint64_t epsilon)
{
  PlaIndex index;
  index.segments_ = Segmentize(keys, epsilon);
  index.n_train_ = keys.size();
  index.sample_rate_ = 1;
  index.epsilon_ = epsilon;
  index.key_count_ = keys.size();
  return index;
}

PlaIndex
PlaIndex::BuildSampled(std::span<const std::uint64_t> keys,
                       std::uint64_t sample_rate,
                       std::uint64_t epsilon)
{
  if (sample_rate == 0) throw ContractError("sample rate must be >= 1");
  if (sample_rate == 1) return Build(keys, epsilon);
  if (keys.size() < 2) {
    throw ContractError("sampled index needs at least 2 keys, got " + std::to_string(keys.size()));
  }
  // A rate beyond the table still keeps the first and last key as samples.
  const std::uint64_t rate = std::min<std::uint64_t>(sample_rate, keys.size() - 1);

  std::vector<std::uint64_t> sample;
  sample.reserve((keys.size() + rate - 1) / rate);
  for (std::uint64_t r = 0; r < keys.size(); r += rate) sample.push_back(keys[r]);

  PlaIndex index;
  index.segments_ = Segmentize(sample, epsilon);
  index.n_train_ = sample.size();
  index.sample_rate_ = rate;
  index.epsilon_ = epsilon;
  index.key_count_ = keys.size();
  return index;
}

std::size_t
PlaIndex::SegmentFor(std::uint64_t query) const
{
  const auto it = std::upper_bound(segments_.begin(), segments_.end(), query,
                                   [](std::uint64_t q, const Segment &s) { return q < s.first_key; });
  return it == segments_.begin() ? 0 : static_cast<std::size_t>(it - segments_.begin()) - 1;
}

std::uint64_t
PlaIndex::Predict(std::size_t segment, std::uint64_t query) const
{
  const auto &seg = segments_[segment];
  if (query <= seg.first_key) return seg.start_rank;
  const auto span_end =
      segment + 1 < segments_.size() ? segments_[segment + 1].start_rank : n_train_;
  const double pred = seg.intercept + seg.slope * static_cast<double>(query - seg.first_key);
  const double clamped = std::clamp(std::round(pred), static_cast<double>(seg.start_rank),
                                    static_cast<double>(span_end));
  return static_cast<std::uint64_t>(clamped);
}

SearchWindow
PlaIndex::WindowAround(std::uint64_t predicted) const
{
  const auto k = sample_rate_;
  const auto lo_train = predicted > epsilon_ ? predicted - epsilon_ : 0;
  const auto hi_train = predicted + epsilon_ + 1;
  const auto lo = lo_train == 0 ? 0 : k * (lo_train - 1) + 1;
  const auto hi = std::min(key_count_, k * hi_train + 1);
  return SearchWindow{std::min(lo, hi), hi};
}

SearchWindow
PlaIndex::Lookup(std::uint64_t query) const
{
  if (segments_.empty()) return {};
  return WindowAround(Predict(query));
}

std::unique_ptr<IndexCursor>
PlaIndex::MakeCursor() const
{
  return std::make_unique<PlaCursor>(*this);
}

SegmentIterator
PlaIndex::Iterator() const
{
  return SegmentIterator{*this};
}

void
PlaIndex::Serialize(const std::filesystem::path &path) const
{
  detail::ByteWriter out;
  out.Magic("PLAI");
  out.Put<std::uint32_t>(kPlaVersion);
  out.Put<std::uint64_t>(n_train_);
  out.Put<std::uint64_t>(sample_rate_);
  out.Put<std::uint64_t>(epsilon_);
  out.Put<std::uint64_t>(segments_.size());
  for (const auto &s : segments_) {
    out.Put<std::uint64_t>(s.first_key);
    out.Put<double>(s.slope);
    out.Put<double>(s.intercept);
    out.Put<std::uint64_t>(s.start_rank);
  }
  // Trailer: the indexed table's size, needed to clamp sampled windows.
  out.Put<std::uint64_t>(key_count_);
  out.Save(path);
}

PlaIndex
PlaIndex::Deserialize(const std::filesystem::path &path)
{
  detail::ByteReader in{path};
  in.ExpectMagic("PLAI");
  const auto version = in.Get<std::uint32_t>();
  if (version != kPlaVersion) {
    throw FormatError("unsupported index version " + std::to_string(version) + " in '" +
                      path.string() + "'");
  }
  PlaIndex index;
  index.n_train_ = in.Get<std::uint64_t>();
  index.sample_rate_ = in.Get<std::uint64_t>();
  index.epsilon_ = in.Get<std::uint64_t>();
  const auto count = in.Get<std::uint64_t>();
  if (index.sample_rate_ == 0 || count > in.remaining() / sizeof(Segment)) {
    throw FormatError("corrupt index header in '" + path.string() + "'");
  }
  index.segments_.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Segment s{};
    s.first_key = in.Get<std::uint64_t>();
    s.slope = in.Get<double>();
    s.intercept = in.Get<double>();
    s.start_rank = in.Get<std::uint64_t>();
    index.segments_.push_back(s);
  }
  index.key_count_ = in.Get<std::uint64_t>();
  return index;
}

/*######################################################################################
 * SegmentIterator
 *####################################################################################*/

std::size_t
SegmentIterator::AdvanceTo(std::uint64_t query)
{
  const auto &segments = index_->segments();
  if (!started_) {
    current_ = index_->SegmentFor(query);
    comparisons_ += CeilLog2(segments.size() + 1);
    started_ = true;
  } else {
    if (query < last_query_) {
      throw ContractError("segment iterator queries must be non-decreasing: " +
                          std::to_string(query) + " after " + std::to_string(last_query_));
    }
    while (current_ + 1 < segments.size() && segments[current_ + 1].first_key <= query) {
      ++current_;
      ++advances_;
      ++comparisons_;
    }
    ++comparisons_;
  }
  last_query_ = query;
  return current_;
}

SearchWindow
SegmentIterator::Lookup(std::uint64_t query)
{
  if (index_->segments().empty()) return {};
  const auto segment = AdvanceTo(query);
  return index_->WindowAround(index_->Predict(segment, query));
}

}  // namespace xmjoin
