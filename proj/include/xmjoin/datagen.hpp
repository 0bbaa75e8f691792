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

#ifndef XMJOIN_DATAGEN_HPP
#define XMJOIN_DATAGEN_HPP

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "xmjoin/table_store.hpp"

namespace xmjoin
{
enum class Distribution { kUdense, kUsparse, kNormal, kLognormal };

std::string_view DistributionName(Distribution dist);
/// Throws ContractError on an unknown name.
Distribution ParseDistribution(std::string_view name);

/// Normal keys: mean and standard deviation in key space.
inline constexpr double kNormalMean = 9223372036854775808.0;  // 2^63
inline constexpr double kNormalStddev = 1152921504606846976.0;  // 2^60
/// Lognormal keys: exp(N(mu, sigma)) scaled by this factor.
inline constexpr double kLognormalMu = 0.0;
inline constexpr double kLognormalSigma = 2.0;
inline constexpr double kLognormalScale = 1099511627776.0;  // 2^40

/// `n` distinct sorted keys, deterministic per (dist, n, seed). Duplicates are resampled.
std::vector<std::uint64_t> GenerateKeys(Distribution dist, std::uint64_t n, std::uint64_t seed);

/// Sorted table whose values equal their keys.
TableHeader Generate(Distribution dist,
                     std::uint64_t n,
                     std::uint64_t seed,
                     const std::filesystem::path &out);

/**
 * @brief Uniform sample of floor(n / ratio) tuples, kept in order.
 *
 * Ratio 1 copies the table byte for byte.
 */
TableHeader SampleRatio(const std::filesystem::path &table,
                        std::uint64_t ratio,
                        std::uint64_t seed,
                        const std::filesystem::path &out);

struct ShuffleStats {
  IoStats read{};
  IoStats written{};
};

/// Write a uniformly random permutation of the table's tuples.
ShuffleStats Shuffle(const std::filesystem::path &table,
                     std::uint64_t seed,
                     const std::filesystem::path &out);

/**
 * @brief Wrap a file of packed little-endian u64 keys as a table (values = keys).
 *
 * `byte_offset` skips a foreign header. Keys declared sorted must be strictly
 * increasing; otherwise they must be distinct.
 */
TableHeader IngestRaw(const std::filesystem::path &raw,
                      Order order,
                      const std::filesystem::path &out,
                      std::uint64_t byte_offset = 0);

}  // namespace xmjoin

#endif  // XMJOIN_DATAGEN_HPP
