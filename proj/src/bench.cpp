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

#include "xmjoin/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "xmjoin/btree_index.hpp"
#include "xmjoin/errors.hpp"
#include "xmjoin/pla_index.hpp"

namespace xmjoin
{
namespace
{
using Clock = std::chrono::steady_clock;

double
SecondsSince(Clock::time_point start)
{
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr std::string_view kColumns[] = {
    "method",          "dataset",           "n_outer",           "n_inner",
    "ratio",           "threads",           "epsilon",           "index_kind",
    "index_bytes",     "build_seconds",     "join_seconds",      "hash_build_seconds",
    "blocks_read_outer", "blocks_read_inner", "io_calls_inner",  "blocks_written",
    "comparisons",     "output_tuples",     "cache_bypass_effective", "seed"};
constexpr std::size_t kColumnCount = std::size(kColumns);

std::string
FormatDouble(double v)
{
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void
CheckField(std::string_view field)
{
  if (field.find_first_of(",\n\r\"") != std::string_view::npos) {
    throw ContractError("CSV text field contains a separator: '" + std::string{field} + "'");
  }
}

std::vector<std::string_view>
SplitCommas(std::string_view line)
{
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T
ParseNumber(std::string_view text, std::string_view column)
{
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw FormatError("bad value '" + std::string{text} + "' in column " + std::string{column});
  }
  return value;
}

std::filesystem::path
Join(const std::filesystem::path &dir, const std::string &name)
{
  return dir / name;
}

}  // namespace

/*######################################################################################
 * CSV
 *####################################################################################*/

std::string
CsvHeader()
{
  std::string out;
  for (std::size_t i = 0; i < kColumnCount; ++i) {
    if (i) out += ',';
    out += kColumns[i];
  }
  return out;
}

std::string
FormatRow(const BenchResult &r)
{
  CheckField(r.method);
  CheckField(r.dataset);
  CheckField(r.index_kind);
  std::ostringstream os;
  os << r.method << ',' << r.dataset << ',' << r.n_outer << ',' << r.n_inner << ',' << r.ratio
     << ',' << r.threads << ',' << r.epsilon << ',' << r.index_kind << ',' << r.index_bytes << ','
     << FormatDouble(r.build_seconds) << ',' << FormatDouble(r.join_seconds) << ','
     << (r.hash_build_seconds < 0 ? std::string{} : FormatDouble(r.hash_build_seconds)) << ','
     << r.blocks_read_outer << ',' << r.blocks_read_inner << ',' << r.io_calls_inner << ','
     << r.blocks_written << ',' << r.comparisons << ',' << r.output_tuples << ','
     << (r.cache_bypass_effective ? 1 : 0) << ',' << r.seed;
  return os.str();
}

BenchResult
ParseRow(std::string_view line)
{
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto f = SplitCommas(line);
  if (f.size() != kColumnCount) {
    throw FormatError("CSV row has " + std::to_string(f.size()) + " fields, expected " +
                      std::to_string(kColumnCount));
  }
  auto u64 = [&](std::size_t i) { return ParseNumber<std::uint64_t>(f[i], kColumns[i]); };
  auto f64 = [&](std::size_t i) { return ParseNumber<double>(f[i], kColumns[i]); };
  BenchResult r;
  r.method = f[0];
  r.dataset = f[1];
  r.n_outer = u64(2);
  r.n_inner = u64(3);
  r.ratio = u64(4);
  r.threads = u64(5);
  r.epsilon = u64(6);
  r.index_kind = f[7];
  r.index_bytes = u64(8);
  r.build_seconds = f64(9);
  r.join_seconds = f64(10);
  r.hash_build_seconds = f[11].empty() ? -1.0 : f64(11);
  r.blocks_read_outer = u64(12);
  r.blocks_read_inner = u64(13);
  r.io_calls_inner = u64(14);
  r.blocks_written = u64(15);
  r.comparisons = u64(16);
  r.output_tuples = u64(17);
  const auto flag = u64(18);
  if (flag > 1) throw FormatError("cache_bypass_effective must be 0 or 1");
  r.cache_bypass_effective = flag == 1;
  r.seed = u64(19);
  return r;
}

std::vector<BenchResult>
ReadCsv(const std::filesystem::path &path)
{
  std::ifstream in{path};
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kCsvVersionLine) {
    throw FormatError("'" + path.string() + "' does not start with " + std::string{kCsvVersionLine});
  }
  if (!std::getline(in, line) || line != CsvHeader()) {
    throw FormatError("unexpected CSV header in '" + path.string() + "'");
  }
  std::vector<BenchResult> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(ParseRow(line));
  }
  return rows;
}

void
AppendRows(const std::filesystem::path &path, std::span<const BenchResult> rows)
{
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out{path, std::ios::app};
  if (!out) throw IoError("cannot open '" + path.string() + "' for append");
  if (fresh) out << kCsvVersionLine << '\n' << CsvHeader() << '\n';
  for (const auto &r : rows) out << FormatRow(r) << '\n';
  out.flush();
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

std::string
RunKey(const BenchResult &r)
{
  return r.dataset + '|' + r.method + '|' + std::to_string(r.ratio) + '|' +
         std::to_string(r.threads) + '|' + std::to_string(r.epsilon) + '|' +
         std::to_string(r.seed);
}

BenchResult
CountersOnly(BenchResult row)
{
  row.build_seconds = 0;
  row.join_seconds = 0;
  if (row.hash_build_seconds >= 0) row.hash_build_seconds = 0;
  return row;
}

/*######################################################################################
 * Index builds
 *####################################################################################*/

std::string_view
IndexKindName(IndexKind kind)
{
  switch (kind) {
    case IndexKind::kPla:
      return "pla";
    case IndexKind::kPlaSampled:
      return "pla_sampled";
    case IndexKind::kBtreePivot:
      return "btree_pivot";
    case IndexKind::kBtreeDynamic:
      return "btree_dynamic";
  }
  return "unknown";
}

IndexKind
ParseIndexKind(std::string_view name)
{
  for (auto k : {IndexKind::kPla, IndexKind::kPlaSampled, IndexKind::kBtreePivot,
                 IndexKind::kBtreeDynamic}) {
    if (IndexKindName(k) == name) return k;
  }
  throw UsageError("unknown index kind '" + std::string{name} +
                   "' (expected pla, pla_sampled, btree_pivot or btree_dynamic)");
}

BuiltIndex
BuildIndex(IndexKind kind, std::span<const std::uint64_t> keys, const IndexParams &params)
{
  BuiltIndex built;
  const auto start = Clock::now();
  switch (kind) {
    case IndexKind::kPla:
      built.index = std::make_unique<PlaIndex>(PlaIndex::Build(keys, params.epsilon));
      break;
    case IndexKind::kPlaSampled:
      built.index = std::make_unique<PlaIndex>(
          PlaIndex::BuildSampled(keys, params.sample_rate, params.sampled_epsilon));
      break;
    case IndexKind::kBtreePivot:
      built.index = std::make_unique<PivotBtree>(PivotBtree::BulkLoad(keys));
      break;
    case IndexKind::kBtreeDynamic:
      throw UsageError("btree_dynamic is built by inserting into a page file, not in memory");
  }
  built.build_seconds = SecondsSince(start);
  return built;
}

BenchResult
CmdBuildIndex(const std::filesystem::path &table,
              IndexKind kind,
              const IndexParams &params,
              const std::filesystem::path &out,
              const std::string &dataset,
              std::uint64_t seed)
{
  BenchResult row;
  row.method = "build";
  row.dataset = dataset;
  row.index_kind = IndexKindName(kind);
  row.seed = seed;
  row.threads = 1;

  if (kind == IndexKind::kBtreeDynamic) {
    auto reader = TableReader::Open(table, 64);
    const auto pool = params.pool_bytes != 0
                          ? params.pool_bytes
                          : static_cast<std::size_t>(reader.header().DataBlocks() * kBlockSize / 2);
    const auto start = Clock::now();
    auto tree = DynamicBtree::Create(out, pool);
    auto stream = reader.Stream();
    Tuple t{};
    for (std::uint64_t rank = 0; stream.Next(t); ++rank) tree.Insert(t.key, rank);
    tree.Flush();
    row.build_seconds = SecondsSince(start);
    row.n_inner = reader.size();
    row.index_bytes = tree.SizeBytes();
    row.blocks_written = tree.stats().blocks_written;
    return row;
  }

  const auto keys = ReadKeys(table);
  const auto built = BuildIndex(kind, keys, params);
  row.build_seconds = built.build_seconds;
  row.n_inner = keys.size();
  row.index_bytes = built.index->SizeBytes();
  row.epsilon = built.index->max_window();
  if (kind == IndexKind::kBtreePivot) {
    static_cast<const PivotBtree &>(*built.index).Serialize(out);
  } else {
    static_cast<const PlaIndex &>(*built.index).Serialize(out);
  }
  return row;
}

/*######################################################################################
 * Joins
 *####################################################################################*/

bool
DropOsCaches()
{
  ::sync();
  std::ofstream f{"/proc/sys/vm/drop_caches"};
  if (!f) return false;
  f << "3\n";
  f.flush();
  return static_cast<bool>(f);
}

BenchResult
CmdJoin(const JoinSpec &spec)
{
  std::unique_ptr<SearchIndex> index;
  if (UsesIndex(spec.method)) {
    if (spec.index.empty()) {
      throw UsageError(std::string{MethodName(spec.method)} + " needs --index");
    }
    index = LoadIndex(spec.index.string());
  }
  const bool dropped = spec.drop_caches && DropOsCaches();

  JoinOptions options;
  options.method = spec.method;
  options.threads = spec.threads;
  options.fetch_blocks = spec.fetch_blocks;
  options.direct = spec.direct;
  const auto report = RunJoin(spec.outer, spec.inner, index.get(), spec.output, options);

  BenchResult row;
  row.method = MethodName(spec.method);
  row.dataset = spec.dataset;
  row.n_outer = ReadHeader(spec.outer).tuple_count;
  row.n_inner = ReadHeader(spec.inner).tuple_count;
  row.ratio = spec.ratio;
  row.threads = spec.threads;
  row.epsilon = spec.epsilon;
  if (index) {
    row.index_kind = index->kind();
    row.index_bytes = index->SizeBytes();
  }
  row.join_seconds = report.join_seconds;
  row.hash_build_seconds = report.hash_build_seconds;
  row.blocks_read_outer = report.outer.blocks_read;
  row.blocks_read_inner = report.inner.blocks_read;
  row.io_calls_inner = report.inner.io_calls;
  row.blocks_written = report.output.blocks_written;
  row.comparisons = report.comparisons;
  row.output_tuples = report.output_tuples;
  row.cache_bypass_effective = dropped || report.cache_bypass_effective;
  row.seed = spec.seed;
  return row;
}

/*######################################################################################
 * Sweeps
 *####################################################################################*/

IndexParams
SweepIndexParams(std::uint64_t epsilon)
{
  IndexParams p;
  p.sample_rate = kSweepSampleRate;
  p.sampled_epsilon = std::max<std::uint64_t>(1, epsilon / kSweepSampleRate);
  return p;
}

SweepSummary
CmdSweep(const SweepGrid &grid)
{
  std::filesystem::create_directories(grid.workdir);
  std::set<std::string> done;
  if (std::filesystem::exists(grid.csv) && std::filesystem::file_size(grid.csv) > 0) {
    for (const auto &r : ReadCsv(grid.csv)) done.insert(RunKey(r));
  }
  const auto dataset = std::string{DistributionName(grid.dist)} + "_" + std::to_string(grid.n);
  SweepSummary summary;

  for (const auto seed : grid.seeds) {
    const auto inner = Join(grid.workdir, dataset + "_s" + std::to_string(seed) + ".tbl");
    bool inner_ready = std::filesystem::exists(inner);
    for (const auto ratio : grid.ratios) {
      const auto outer = Join(grid.workdir, dataset + "_s" + std::to_string(seed) + "_r" +
                                                std::to_string(ratio) + ".tbl");
      for (const auto eps : grid.epsilons) {
        const auto params = SweepIndexParams(eps);
        std::unique_ptr<PlaIndex> learned;
        std::unique_ptr<PivotBtree> pivot;
        double learned_build = 0;
        double pivot_build = 0;
        for (const auto threads : grid.threads) {
          for (const auto method : grid.methods) {
            BenchResult key;
            key.dataset = dataset;
            key.method = MethodName(method);
            key.ratio = ratio;
            key.threads = threads;
            key.epsilon = eps;
            key.seed = seed;
            if (done.count(RunKey(key)) != 0) {
              ++summary.skipped;
              continue;
            }
            if (summary.executed >= grid.max_runs) return summary;

            if (!inner_ready) {
              Generate(grid.dist, grid.n, seed, inner);
              inner_ready = true;
            }
            if (!std::filesystem::exists(outer)) SampleRatio(inner, ratio, seed, outer);
            if (UsesIndex(method) && !learned) {
              const auto keys = ReadKeys(inner);
              auto a = BuildIndex(IndexKind::kPlaSampled, keys, params);
              learned_build = a.build_seconds;
              learned.reset(static_cast<PlaIndex *>(a.index.release()));
              auto b = BuildIndex(IndexKind::kBtreePivot, keys, params);
              pivot_build = b.build_seconds;
              pivot.reset(static_cast<PivotBtree *>(b.index.release()));
            }

            JoinSpec spec;
            spec.outer = outer;
            spec.inner = inner;
            spec.output = Join(grid.workdir, "out.tbl");
            spec.method = method;
            spec.threads = threads;
            spec.direct = grid.direct;
            spec.drop_caches = grid.drop_caches;
            spec.dataset = dataset;
            spec.ratio = ratio;
            spec.epsilon = eps;
            spec.seed = seed;
            double build_seconds = 0;
            if (UsesIndex(method)) {
              const bool is_learned = method == JoinMethod::kInljLearned;
              spec.index = Join(grid.workdir, is_learned ? "learned.plai" : "pivot.btpi");
              if (is_learned) {
                learned->Serialize(spec.index);
              } else {
                pivot->Serialize(spec.index);
              }
              spec.fetch_blocks = WindowSpanBlocks(learned->max_window());
              build_seconds = is_learned ? learned_build : pivot_build;
            }
            auto row = CmdJoin(spec);
            row.build_seconds = build_seconds;
            AppendRows(grid.csv, std::span{&row, 1});
            done.insert(RunKey(row));
            ++summary.executed;
          }
        }
      }
    }
  }
  std::filesystem::remove(Join(grid.workdir, "out.tbl"));
  return summary;
}

/*######################################################################################
 * Verification
 *####################################################################################*/

std::vector<Tuple>
OracleIntersection(std::span<const Tuple> outer, std::span<const Tuple> inner)
{
  std::vector<Tuple> out;
  std::size_t j = 0;
  for (const auto &r : outer) {
    while (j < inner.size() && inner[j].key < r.key) ++j;
    if (j < inner.size() && inner[j].key == r.key) out.push_back({r.key, inner[j].value});
  }
  return out;
}

JoinRunner
DefaultRunner(std::size_t threads)
{
  return [threads](JoinMethod method, const std::filesystem::path &outer,
                   const std::filesystem::path &inner, const SearchIndex *index,
                   const std::filesystem::path &output) {
    JoinOptions options;
    options.method = method;
    options.threads = threads;
    RunJoin(outer, inner, index, output, options);
  };
}

VerifyReport
VerifyTables(const std::filesystem::path &outer,
             const std::filesystem::path &inner,
             const std::filesystem::path &workdir,
             const JoinRunner &runner)
{
  std::filesystem::create_directories(workdir);
  const auto inner_tuples = ReadAll(inner);
  const auto oracle = OracleIntersection(ReadAll(outer), inner_tuples);
  const auto oracle_file = Join(workdir, "oracle.tbl");
  WriteTable(oracle, oracle_file);

  std::vector<std::uint64_t> keys;
  keys.reserve(inner_tuples.size());
  for (const auto &t : inner_tuples) keys.push_back(t.key);
  const auto learned = PlaIndex::BuildSampled(keys, 128, 2);
  const auto pivot = PivotBtree::BulkLoad(keys);

  VerifyReport report;
  report.pass = true;
  report.oracle_tuples = oracle.size();
  for (auto method : {JoinMethod::kInljLearned, JoinMethod::kInljBtree, JoinMethod::kSortJoin,
                      JoinMethod::kHashJoin}) {
    const SearchIndex *index = method == JoinMethod::kInljLearned ? static_cast<const SearchIndex *>(&learned)
                               : method == JoinMethod::kInljBtree ? &pivot
                                                                  : nullptr;
    const auto out = Join(workdir, std::string{MethodName(method)} + ".tbl");
    runner(method, outer, inner, index, out);
    VerifyCase c;
    c.method = MethodName(method);
    c.divergence = FirstDivergence(oracle_file, out);
    c.pass = c.divergence == -1;
    c.output_tuples = ReadHeader(out).tuple_count;
    report.pass = report.pass && c.pass;
    report.cases.push_back(c);
  }
  return report;
}

VerifyReport
VerifyDataset(Distribution dist,
              std::uint64_t n,
              std::uint64_t ratio,
              std::uint64_t seed,
              const std::filesystem::path &workdir,
              const JoinRunner &runner)
{
  std::filesystem::create_directories(workdir);
  const auto inner = Join(workdir, "inner.tbl");
  const auto outer = Join(workdir, "outer.tbl");
  Generate(dist, n, seed, inner);
  SampleRatio(inner, ratio, seed, outer);
  return VerifyTables(outer, inner, workdir, runner);
}

std::string
FormatVerify(const VerifyReport &report)
{
  std::ostringstream os;
  for (const auto &c : report.cases) {
    os << (c.pass ? "PASS " : "FAIL ") << c.method << " tuples=" << c.output_tuples;
    if (!c.pass) os << " first_divergence=" << c.divergence;
    os << '\n';
  }
  os << (report.pass ? "PASS" : "FAIL") << " oracle_tuples=" << report.oracle_tuples << '\n';
  return os.str();
}

}  // namespace xmjoin
