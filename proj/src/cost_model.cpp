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

#include "xmjoin/cost_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <random>

#include "xmjoin/errors.hpp"
#include "xmjoin/table_store.hpp"

namespace xmjoin
{
namespace
{
double
ProbedWindows(const CostParams &p)
{
  return std::min(static_cast<double>(p.r_count), static_cast<double>(p.s_count) / p.epsilon);
}

}  // namespace

std::string_view
RegimeName(Regime regime)
{
  return regime == Regime::kSequentialScan ? "sequential_scan" : "random_probe";
}

void
ValidateCostParams(const CostParams &p)
{
  if (!(p.alpha >= 0.0 && p.alpha < 1.0)) throw ContractError("alpha must lie in [0, 1)");
  if (!(p.block_words > 0.0)) throw ContractError("block size must be positive");
  if (!(p.epsilon >= 1.0)) throw ContractError("epsilon must be at least 1");
  if (p.r_count > p.s_count) throw ContractError("|R| must not exceed |S|");
}

CostBreakdown
PredictCost(const CostParams &p)
{
  ValidateCostParams(p);
  CostBreakdown c;
  c.outer_scan = static_cast<double>(p.r_count) / p.block_words;
  c.inner_probe = ProbedWindows(p) * (1.0 + p.alpha * p.epsilon / p.block_words);
  c.total = c.outer_scan + c.inner_probe;
  return c;
}

double
PredictIoCalls(const CostParams &p)
{
  ValidateCostParams(p);
  return static_cast<double>(p.r_count) / p.block_words + ProbedWindows(p);
}

Regime
ClassifyRegime(const CostParams &p)
{
  ValidateCostParams(p);
  // |R| >= |S| / eps, multiplied out to keep the tie exact.
  return static_cast<double>(p.r_count) * p.epsilon >= static_cast<double>(p.s_count)
             ? Regime::kSequentialScan
             : Regime::kRandomProbe;
}

AlphaFit
CalibrateAlpha(std::span<const LatencySample> samples)
{
  std::map<std::uint64_t, std::pair<double, int>> by_size;
  for (const auto &s : samples) {
    auto &[sum, count] = by_size[s.bytes];
    sum += s.seconds;
    ++count;
  }
  if (by_size.size() < 2) throw ContractError("calibration needs at least two I/O sizes");

  // Latency noise scales with latency, so residuals are weighted by 1 / latency^2.
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto &s : samples) {
    if (!(s.seconds > 0)) throw ContractError("latency samples must be positive");
    const double w = 1.0 / (s.seconds * s.seconds);
    const double x = static_cast<double>(s.bytes) / kWordBytes;
    sw += w;
    sx += w * x;
    sy += w * s.seconds;
    sxx += w * x * x;
    sxy += w * x * s.seconds;
  }
  AlphaFit fit;
  fit.slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / sw;

  double prev = -1;
  for (const auto &[bytes, acc] : by_size) {
    const double mean = acc.first / acc.second;
    if (mean <= prev) fit.monotone = false;
    prev = mean;
  }
  if (!fit.monotone) {
    fit.warning = "latency is not increasing with I/O size; alpha taken from the two largest sizes";
    auto hi = std::prev(by_size.end());
    auto lo = std::prev(hi);
    const double x1 = static_cast<double>(lo->first) / kWordBytes;
    const double x2 = static_cast<double>(hi->first) / kWordBytes;
    const double y1 = lo->second.first / lo->second.second;
    const double y2 = hi->second.first / hi->second.second;
    fit.slope = (y2 - y1) / (x2 - x1);
    fit.intercept = y1 - fit.slope * x1;
  }
  fit.alpha = fit.intercept > 0 ? std::max(0.0, fit.slope / fit.intercept) : 0.0;
  return fit;
}

std::vector<LatencySample>
ProbeDevice(const std::filesystem::path &file, int reads_per_size, bool direct, std::uint64_t seed)
{
  const auto size = std::filesystem::file_size(file);
  if (size < kMinProbeBytes) {
    throw ContractError("probe file '" + file.string() + "' is smaller than 256 MB");
  }
  auto f = BlockFile::OpenRead(file, direct);
  const auto blocks = (size - kDataOffset) / kBlockSize;
  AlignedBuffer buffer{kProbeSizes[std::size(kProbeSizes) - 1]};
  std::mt19937_64 rng{seed};
  std::vector<LatencySample> out;
  for (const auto bytes : kProbeSizes) {
    const auto count = bytes / kBlockSize;
    std::uniform_int_distribution<std::uint64_t> pick{0, blocks - count};
    for (int i = 0; i < reads_per_size; ++i) {
      const auto first = pick(rng);
      const auto start = std::chrono::steady_clock::now();
      f.ReadBlocks(first, count, buffer.data());
      out.push_back({bytes, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()});
    }
  }
  return out;
}

}  // namespace xmjoin
