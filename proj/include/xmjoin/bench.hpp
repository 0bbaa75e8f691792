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

#ifndef XMJOIN_BENCH_HPP
#define XMJOIN_BENCH_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xmjoin/datagen.hpp"
#include "xmjoin/join_engine.hpp"
#include "xmjoin/search_index.hpp"

namespace xmjoin
{
/*######################################################################################
 * Result rows
 *####################################################################################*/

/// One measured run. Counters come from IoStats; nothing is estimated.
struct BenchResult {
  std::string method{};
  std::string dataset{};
  std::uint64_t n_outer{0};
  std::uint64_t n_inner{0};
  std::uint64_t ratio{0};
  std::uint64_t threads{0};
  std::uint64_t epsilon{0};
  std::string index_kind{};
  std::uint64_t index_bytes{0};
  double build_seconds{0};
  double join_seconds{0};
  /// Negative means null (written as an empty cell).
  double hash_build_seconds{-1};
  std::uint64_t blocks_read_outer{0};
  std::uint64_t blocks_read_inner{0};
  std::uint64_t io_calls_inner{0};
  std::uint64_t blocks_written{0};
  std::uint64_t comparisons{0};
  std::uint64_t output_tuples{0};
  bool cache_bypass_effective{false};
  std::uint64_t seed{0};

  friend bool operator==(const BenchResult &, const BenchResult &) = default;
};

inline constexpr std::string_view kCsvVersionLine = "# xmjoin-csv v1";

std::string CsvHeader();
std::string FormatRow(const BenchResult &row);
/// Throws FormatError on a malformed row.
BenchResult ParseRow(std::string_view line);
/// Rows of a CSV written by AppendRows; the version line and header are checked.
std::vector<BenchResult> ReadCsv(const std::filesystem::path &path);
/// Append rows, writing the version line and header first if the file is new or empty.
void AppendRows(const std::filesystem::path &path, std::span<const BenchResult> rows);
/// Identity of a run within a sweep: dataset, method, ratio, threads, epsilon, seed.
std::string RunKey(const BenchResult &row);
/// Copy with timing fields zeroed, for comparing runs.
BenchResult CountersOnly(BenchResult row);

/*######################################################################################
 * Index builds
 *####################################################################################*/

enum class IndexKind { kPla, kPlaSampled, kBtreePivot, kBtreeDynamic };

std::string_view IndexKindName(IndexKind kind);
/// Throws UsageError on an unknown name.
IndexKind ParseIndexKind(std::string_view name);

struct IndexParams {
  std::uint64_t epsilon{256};
  std::uint64_t sample_rate{128};
  std::uint64_t sampled_epsilon{2};
  /// Buffer pool of the dynamic tree; 0 means half the table's data bytes.
  std::size_t pool_bytes{0};
};

struct BuiltIndex {
  std::unique_ptr<SearchIndex> index{};
  double build_seconds{0};
};

/// In-memory build of a static index over sorted keys; the timer covers only the build.
BuiltIndex BuildIndex(IndexKind kind, std::span<const std::uint64_t> keys, const IndexParams &params);

/**
 * @brief Build an index over a table and write it to `out`; returns a timing row.
 *
 * Static kinds load all keys first and time only the build. btree_dynamic inserts the
 * tuples in table order into a page file at `out`, so it also works on unsorted tables;
 * its row reports the leaf blocks written.
 */
BenchResult CmdBuildIndex(const std::filesystem::path &table,
                          IndexKind kind,
                          const IndexParams &params,
                          const std::filesystem::path &out,
                          const std::string &dataset,
                          std::uint64_t seed);

/*######################################################################################
 * Joins and sweeps
 *####################################################################################*/

/// Sync and drop the OS page cache; false when not permitted.
bool DropOsCaches();

struct JoinSpec {
  std::filesystem::path outer{};
  std::filesystem::path inner{};
  /// Index file over the inner table; required by INLJ methods.
  std::filesystem::path index{};
  std::filesystem::path output{};
  JoinMethod method{JoinMethod::kSortJoin};
  std::size_t threads{1};
  std::size_t fetch_blocks{0};
  bool direct{false};
  bool drop_caches{false};
  std::string dataset{};
  std::uint64_t ratio{0};
  std::uint64_t epsilon{0};
  std::uint64_t seed{0};
};

/// Throws UsageError when an INLJ method has no index.
BenchResult CmdJoin(const JoinSpec &spec);

struct SweepGrid {
  Distribution dist{Distribution::kUsparse};
  std::uint64_t n{1'000'000};
  std::vector<JoinMethod> methods{};
  std::vector<std::uint64_t> ratios{};
  std::vector<std::uint64_t> threads{1};
  /// Learned windows; each selects pla_sampled with k = 128 and eps' = eps / 128.
  std::vector<std::uint64_t> epsilons{256};
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path workdir{};
  std::filesystem::path csv{};
  bool direct{false};
  bool drop_caches{false};
  /// Stop after this many executed runs (simulates an interruption).
  std::size_t max_runs{std::numeric_limits<std::size_t>::max()};
};

struct SweepSummary {
  std::size_t executed{0};
  std::size_t skipped{0};
};

inline constexpr std::uint64_t kSweepSampleRate = 128;

/// Sampled-index parameters for a learned window of `epsilon` tuples.
IndexParams SweepIndexParams(std::uint64_t epsilon);

/**
 * @brief Run the cross product of the grid, appending one row per run to grid.csv.
 *
 * Runs whose RunKey is already in the CSV are skipped. Both INLJ methods fetch the
 * block span of the learned window, so their inner reads are comparable.
 */
SweepSummary CmdSweep(const SweepGrid &grid);

/*######################################################################################
 * Oracle verification
 *####################################################################################*/

using JoinRunner = std::function<void(JoinMethod method,
                                      const std::filesystem::path &outer,
                                      const std::filesystem::path &inner,
                                      const SearchIndex *index,
                                      const std::filesystem::path &output)>;

/// Runner backed by RunJoin with default options.
JoinRunner DefaultRunner(std::size_t threads = 1);

struct VerifyCase {
  std::string method{};
  bool pass{false};
  /// First differing byte offset against the oracle file, -1 when identical.
  std::int64_t divergence{-1};
  std::uint64_t output_tuples{0};
};

struct VerifyReport {
  bool pass{false};
  std::uint64_t oracle_tuples{0};
  std::vector<VerifyCase> cases{};
};

/// Run all four methods on two sorted tables and byte-compare against the oracle.
VerifyReport VerifyTables(const std::filesystem::path &outer,
                          const std::filesystem::path &inner,
                          const std::filesystem::path &workdir,
                          const JoinRunner &runner);

/// Generate an inner table of `n` keys and a ratio sample of it, then verify.
VerifyReport VerifyDataset(Distribution dist,
                           std::uint64_t n,
                           std::uint64_t ratio,
                           std::uint64_t seed,
                           const std::filesystem::path &workdir,
                           const JoinRunner &runner);

std::string FormatVerify(const VerifyReport &report);

/// In-memory intersection: (key, inner value) for each outer key present in the inner table.
std::vector<Tuple> OracleIntersection(std::span<const Tuple> outer, std::span<const Tuple> inner);

}  // namespace xmjoin

#endif  // XMJOIN_BENCH_HPP
