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

#ifndef XMJOIN_COST_MODEL_HPP
#define XMJOIN_COST_MODEL_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace xmjoin
{
/// One word is 8 bytes, so a 4 KB block holds 512 words.
inline constexpr double kWordBytes = 8.0;
inline constexpr double kBlockWords = 512.0;

/**
 * @brief Inputs of the affine I/O cost of an indexed join.
 *
 * An I/O of k words costs 1 + alpha * k. The outer table is scanned in blocks and each
 * outer key, or each window of the inner table if there are fewer of those, costs one
 * window-sized read.
 */
struct CostParams {
  double alpha{0.0};
  double block_words{kBlockWords};
  double epsilon{1.0};
  std::uint64_t r_count{0};
  std::uint64_t s_count{0};
};

struct CostBreakdown {
  /// |R| / B
  double outer_scan{0};
  /// min(|R|, |S| / eps) * (1 + alpha * eps / B)
  double inner_probe{0};
  double total{0};
};

enum class Regime { kSequentialScan, kRandomProbe };

std::string_view RegimeName(Regime regime);

/// Throws ContractError unless 0 <= alpha < 1, B > 0, eps >= 1 and |R| <= |S|.
void ValidateCostParams(const CostParams &params);

CostBreakdown PredictCost(const CostParams &params);
/// The alpha-free skeleton |R| / B + min(|R|, |S| / eps).
double PredictIoCalls(const CostParams &params);
/// Sequential when |R| >= |S| / eps; the tie counts as sequential.
Regime ClassifyRegime(const CostParams &params);

/*######################################################################################
 * Calibration
 *####################################################################################*/

struct LatencySample {
  std::uint64_t bytes;
  double seconds;
};

struct AlphaFit {
  double alpha{0};
  /// Fitted latency of a 0-word I/O and the per-word increment.
  double intercept{0};
  double slope{0};
  bool monotone{true};
  std::string warning{};
};

/**
 * @brief Least-squares fit of latency = c * (1 + alpha * words); alpha = slope / intercept.
 *
 * Residuals are relative (weight 1 / latency^2), matching noise proportional to latency.
 *
 * If the mean latency per size is not increasing in size, a warning is set and alpha
 * comes from the two largest sizes.
 */
AlphaFit CalibrateAlpha(std::span<const LatencySample> samples);

inline constexpr std::uint64_t kMinProbeBytes = 256ULL << 20;
inline constexpr std::uint64_t kProbeSizes[] = {4096, 65536, 1 << 20};

/// Time random aligned reads of each probe size from `file` (at least kMinProbeBytes).
std::vector<LatencySample> ProbeDevice(const std::filesystem::path &file,
                                       int reads_per_size,
                                       bool direct,
                                       std::uint64_t seed);

}  // namespace xmjoin

#endif  // XMJOIN_COST_MODEL_HPP
