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

#include "xmjoin/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "xmjoin/errors.hpp"

namespace xmjoin
{
namespace
{
/// Rounds in a row that may add no new key before the universe counts as exhausted.
constexpr int kStallRounds = 32;

/// Uniform double in [0, 1) from the top 53 bits; unlike std::uniform_real_distribution
/// the mapping is fixed, so files are identical across standard libraries.
double
Unit(std::mt19937_64 &rng)
{
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller, one variate per call.
double
Gaussian(std::mt19937_64 &rng)
{
  const double u1 = 1.0 - Unit(rng);  // (0, 1]
  const double u2 = Unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

constexpr double kKeySpace = 18446744073709551616.0;  // 2^64

bool
ToKey(double x, std::uint64_t &key)
{
  if (!(x >= 0.0) || x >= kKeySpace) return false;
  key = static_cast<std::uint64_t>(x);
  return true;
}

std::uint64_t
Draw(Distribution dist, std::mt19937_64 &rng)
{
  std::uint64_t key = 0;
  switch (dist) {
    case Distribution::kUsparse:
      return rng();
    case Distribution::kNormal:
      while (!ToKey(kNormalMean + kNormalStddev * Gaussian(rng), key)) {
      }
      return key;
    case Distribution::kLognormal:
      while (!ToKey(kLognormalScale * std::exp(kLognormalMu + kLognormalSigma * Gaussian(rng)),
                    key)) {
      }
      return key;
    case Distribution::kUdense:
      break;
  }
  return rng();
}

}  // namespace

std::string_view
DistributionName(Distribution dist)
{
  switch (dist) {
    case Distribution::kUdense:
      return "udense";
    case Distribution::kUsparse:
      return "usparse";
    case Distribution::kNormal:
      return "normal";
    case Distribution::kLognormal:
      return "lognormal";
  }
  return "unknown";
}

Distribution
ParseDistribution(std::string_view name)
{
  for (auto d : {Distribution::kUdense, Distribution::kUsparse, Distribution::kNormal,
                 Distribution::kLognormal}) {
    if (DistributionName(d) == name) return d;
  }
  throw ContractError("unknown distribution '" + std::string{name} + "'");
}

std::vector<std::uint64_t>
GenerateKeys(Distribution dist, std::uint64_t n, std::uint64_t seed)
{
  if (n == 0) throw ContractError("dataset size must be >= 1");
  std::vector<std::uint64_t> keys;
  if (dist == Distribution::kUdense) {
    keys.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) keys[i] = i;
    return keys;
  }

  std::mt19937_64 rng{seed};
  keys.reserve(n);
  int stalled = 0;
  while (keys.size() < n) {
    const auto before = keys.size();
    const auto missing = n - keys.size();
    for (std::uint64_t i = 0; i < missing; ++i) keys.push_back(Draw(dist, rng));
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    stalled = keys.size() == before ? stalled + 1 : 0;
    if (stalled >= kStallRounds) {
      throw ContractError("cannot draw " + std::to_string(n) + " distinct " +
                          std::string{DistributionName(dist)} + " keys; got " +
                          std::to_string(keys.size()));
    }
  }
  return keys;
}

TableHeader
Generate(Distribution dist, std::uint64_t n, std::uint64_t seed, const std::filesystem::path &out)
{
  const auto keys = GenerateKeys(dist, n, seed);
  auto writer = TableWriter::Create(out, Order::kSorted);
  for (auto k : keys) writer.Append(Tuple{k, k});
  return writer.Close();
}

TableHeader
SampleRatio(const std::filesystem::path &table,
            std::uint64_t ratio,
            std::uint64_t seed,
            const std::filesystem::path &out)
{
  const auto header = ReadHeader(table);
  if (ratio == 0) throw ContractError("ratio must be >= 1");
  if (ratio > header.tuple_count) {
    throw ContractError("ratio " + std::to_string(ratio) + " exceeds table size " +
                        std::to_string(header.tuple_count));
  }
  if (ratio == 1) {
    std::filesystem::copy_file(table, out, std::filesystem::copy_options::overwrite_existing);
    return header;
  }

  // Selection sampling: one ordered pass, exactly m picks, each m-subset equally likely.
  const std::uint64_t n = header.tuple_count;
  const std::uint64_t m = n / ratio;
  std::mt19937_64 rng{seed};
  auto reader = TableReader::Open(table, 64);
  auto writer = TableWriter::Create(out, Order::kSorted);
  auto stream = reader.Stream();
  std::uint64_t picked = 0;
  Tuple t{};
  for (std::uint64_t i = 0; picked < m && stream.Next(t); ++i) {
    if (static_cast<double>(n - i) * Unit(rng) < static_cast<double>(m - picked)) {
      writer.Append(t);
      ++picked;
    }
  }
  return writer.Close();
}

ShuffleStats
Shuffle(const std::filesystem::path &table, std::uint64_t seed, const std::filesystem::path &out)
{
  auto reader = TableReader::Open(table, 64);
  std::vector<Tuple> tuples;
  tuples.reserve(reader.size());
  {
    auto stream = reader.Stream();
    Tuple t{};
    while (stream.Next(t)) tuples.push_back(t);
  }
  std::mt19937_64 rng{seed};
  for (std::size_t i = tuples.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(Unit(rng) * static_cast<double>(i));
    std::swap(tuples[i - 1], tuples[std::min(j, i - 1)]);
  }
  auto writer = TableWriter::Create(out, Order::kUnsorted);
  writer.Append(tuples);
  writer.Close();
  return ShuffleStats{reader.stats(), writer.stats()};
}

TableHeader
IngestRaw(const std::filesystem::path &raw,
          Order order,
          const std::filesystem::path &out,
          std::uint64_t byte_offset)
{
  std::ifstream in{raw, std::ios::binary};
  if (!in) throw IoError("cannot open '" + raw.string() + "'");
  const auto length = std::filesystem::file_size(raw);
  if (byte_offset > length || (length - byte_offset) % 8 != 0) {
    throw FormatError("'" + raw.string() + "' is not a packed u64 key file after offset " +
                      std::to_string(byte_offset));
  }
  in.seekg(static_cast<std::streamoff>(byte_offset));

  std::vector<std::uint64_t> seen;
  auto writer = TableWriter::Create(out, order);
  std::vector<std::uint64_t> chunk(1 << 16);
  std::uint64_t remaining = (length - byte_offset) / 8;
  while (remaining > 0) {
    const auto take = std::min<std::uint64_t>(remaining, chunk.size());
    in.read(reinterpret_cast<char *>(chunk.data()), static_cast<std::streamsize>(take * 8));
    if (!in) throw IoError("read failed on '" + raw.string() + "'");
    for (std::uint64_t i = 0; i < take; ++i) writer.Append(Tuple{chunk[i], chunk[i]});
    if (order == Order::kUnsorted) seen.insert(seen.end(), chunk.begin(), chunk.begin() + take);
    remaining -= take;
  }
  if (order == Order::kUnsorted) {
    std::sort(seen.begin(), seen.end());
    const auto dup = std::adjacent_find(seen.begin(), seen.end());
    if (dup != seen.end()) {
      throw ContractError("duplicate key " + std::to_string(*dup) + " in '" + raw.string() + "'");
    }
  }
  return writer.Close();
}

}  // namespace xmjoin
