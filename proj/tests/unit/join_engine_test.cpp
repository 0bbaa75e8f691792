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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_support.hpp"
#include "xmjoin/btree_index.hpp"
#include "xmjoin/datagen.hpp"
#include "xmjoin/errors.hpp"
#include "xmjoin/join_engine.hpp"
#include "xmjoin/pla_index.hpp"

namespace xmjoin
{
namespace
{
using testing::Rng;
using testing::TempDir;

constexpr JoinMethod kAllMethods[] = {JoinMethod::kInljLearned, JoinMethod::kInljBtree,
                                      JoinMethod::kSortJoin, JoinMethod::kHashJoin};

/// Values differ from keys so the output payload source is observable.
std::vector<Tuple>
WithPayload(const std::vector<std::uint64_t> &keys, std::uint64_t salt)
{
  std::vector<Tuple> t;
  t.reserve(keys.size());
  for (auto k : keys) t.push_back(Tuple{k, k * 31 + salt});
  return t;
}

/// In-memory intersection carrying the inner payload.
std::vector<Tuple>
Oracle(const std::vector<Tuple> &outer, const std::vector<Tuple> &inner)
{
  std::vector<Tuple> out;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < outer.size() && j < inner.size()) {
    if (outer[i].key < inner[j].key) {
      ++i;
    } else if (inner[j].key < outer[i].key) {
      ++j;
    } else {
      out.push_back(inner[j]);
      ++i;
      ++j;
    }
  }
  return out;
}

std::uint64_t
CeilLog2(std::uint64_t n)
{
  std::uint64_t b = 0;
  while ((std::uint64_t{1} << b) < n) ++b;
  return b;
}

struct Fixture {
  TempDir dir;
  std::vector<Tuple> outer;
  std::vector<Tuple> inner;
  std::vector<std::uint64_t> inner_keys;
  PlaIndex learned;
  PivotBtree btree;

  Fixture(std::vector<Tuple> r, std::vector<Tuple> s) : outer{std::move(r)}, inner{std::move(s)}
  {
    WriteTable(outer, dir / "R");
    WriteTable(inner, dir / "S");
    for (const auto &t : inner) inner_keys.push_back(t.key);
    learned = inner_keys.size() >= 2 ? PlaIndex::BuildSampled(inner_keys, 128, 2)
                                     : PlaIndex::Build(inner_keys, 2);
    btree = PivotBtree::BulkLoad(inner_keys);
  }

  const SearchIndex *IndexFor(JoinMethod m) const
  {
    if (m == JoinMethod::kInljLearned) return &learned;
    if (m == JoinMethod::kInljBtree) return &btree;
    return nullptr;
  }

  JoinReport Run(JoinOptions options, const std::string &name = "O")
  {
    return RunJoin(dir / "R", dir / "S", IndexFor(options.method), dir / name, options);
  }

  JoinReport Run(JoinMethod m, std::size_t threads = 1, const std::string &name = "O")
  {
    JoinOptions o;
    o.method = m;
    o.threads = threads;
    return Run(o, name);
  }
};

/*### Last-mile search ###*/

TEST(LastMile, SingleTupleEqualToQuery)
{
  const std::vector<Tuple> w{{7, 0}};
  std::uint64_t c = 0;
  EXPECT_EQ(LastMileSearch(w, 7, c), 0u);
  EXPECT_EQ(LastMileSearch(w, 8, c), 1u);
  EXPECT_EQ(LastMileSearch(w, 6, c), 0u);
  EXPECT_EQ(LastMileSearch({}, 6, c), 0u);
}

TEST(LastMile, AbsentQueryLandsOnRightNeighbour)
{
  const std::vector<Tuple> w{{10, 0}, {20, 0}, {30, 0}, {40, 0}};
  std::uint64_t c = 0;
  EXPECT_EQ(LastMileSearch(w, 25, c), 2u);
  EXPECT_EQ(LastMileSearch(w, 41, c), 4u);
}

TEST(LastMile, MatchesReferenceBinarySearch)
{
  Rng rng{1};
  for (int round = 0; round < 100; ++round) {
    const auto keys = testing::RandomSortedKeys(rng, 1 + rng.Below(5000), 1 + rng.Below(100));
    const auto window = testing::AsTuples(keys);
    for (int p = 0; p < 1000; ++p) {
      const auto q = rng.Below(keys.back() + 50);
      std::uint64_t c = 0;
      const auto got = LastMileSearch(window, q, c);
      ASSERT_EQ(got, testing::OracleLowerBound(keys, q));
      ASSERT_LE(c, CeilLog2(keys.size()) + 1);
    }
  }
}

/*### Method semantics ###*/

TEST(Join, SmallExampleAllMethods)
{
  Fixture f{WithPayload({2, 4}, 1), WithPayload({1, 2, 3, 4, 5}, 2)};
  for (auto m : kAllMethods) {
    const auto report = f.Run(m);
    EXPECT_EQ(report.output_tuples, 2u);
    const auto out = ReadAll(f.dir / "O");
    EXPECT_EQ(out, (std::vector<Tuple>{{2, 2 * 31 + 2}, {4, 4 * 31 + 2}})) << MethodName(m);
  }
}

TEST(Join, SelfJoinReturnsInner)
{
  Rng rng{2};
  const auto keys = testing::SparseKeys(rng, 50'000);
  Fixture f{WithPayload(keys, 5), WithPayload(keys, 6)};
  for (auto m : kAllMethods) {
    f.Run(m);
    ASSERT_EQ(ReadAll(f.dir / "O"), f.inner) << MethodName(m);
  }
}

TEST(Join, RandomRatiosMatchOracle)
{
  Rng rng{3};
  for (std::uint64_t ratio : {1, 10, 100, 1000}) {
    const auto s_keys = testing::RandomSortedKeys(rng, 60'000, 1 + rng.Below(1u << 12));
    std::vector<std::uint64_t> r_keys;
    for (auto k : s_keys) {
      if (rng.Below(ratio) == 0) r_keys.push_back(k);
      // Absent probes that fall between inner keys.
      if (ratio > 1 && rng.Below(ratio * 4) == 0 && k > 0) r_keys.push_back(k - 1);
    }
    std::sort(r_keys.begin(), r_keys.end());
    r_keys.erase(std::unique(r_keys.begin(), r_keys.end()), r_keys.end());
    Fixture f{WithPayload(r_keys, 9), WithPayload(s_keys, 10)};
    const auto expected = Oracle(f.outer, f.inner);
    for (auto m : kAllMethods) {
      for (std::size_t threads : {1u, 3u}) {
        const auto report = f.Run(m, threads);
        ASSERT_EQ(ReadAll(f.dir / "O"), expected) << MethodName(m) << " ratio " << ratio;
        ASSERT_EQ(report.output_tuples, expected.size());
      }
    }
  }
}

TEST(Join, SortJoinDisjointRangesScanBoth)
{
  std::vector<std::uint64_t> r_keys(3000);
  std::vector<std::uint64_t> s_keys(9000);
  for (std::size_t i = 0; i < r_keys.size(); ++i) r_keys[i] = i;
  for (std::size_t i = 0; i < s_keys.size(); ++i) s_keys[i] = 1'000'000 + i;
  Fixture f{WithPayload(r_keys, 0), WithPayload(s_keys, 0)};
  const auto report = f.Run(JoinMethod::kSortJoin);
  EXPECT_EQ(report.output_tuples, 0u);
  EXPECT_EQ(report.outer.blocks_read, BlocksFor(3000));
  EXPECT_EQ(report.inner.blocks_read, BlocksFor(9000));
  EXPECT_LE(report.comparisons, r_keys.size() + s_keys.size());
}

TEST(Join, SortJoinComparisonBound)
{
  Rng rng{4};
  const auto s_keys = testing::SparseKeys(rng, 40'000);
  std::vector<std::uint64_t> r_keys;
  for (std::size_t i = 0; i < s_keys.size(); i += 7) r_keys.push_back(s_keys[i]);
  Fixture f{WithPayload(r_keys, 0), WithPayload(s_keys, 0)};
  const auto report = f.Run(JoinMethod::kSortJoin);
  EXPECT_LE(report.comparisons, r_keys.size() + s_keys.size());
  EXPECT_EQ(report.inner.blocks_read, BlocksFor(s_keys.size()));
  EXPECT_EQ(report.outer.blocks_read, BlocksFor(r_keys.size()));
}

TEST(Join, HashJoinEmptyOuterScansInner)
{
  Rng rng{5};
  Fixture f{{}, WithPayload(testing::SparseKeys(rng, 10'000), 0)};
  const auto report = f.Run(JoinMethod::kHashJoin);
  EXPECT_EQ(report.output_tuples, 0u);
  EXPECT_EQ(report.inner.blocks_read, BlocksFor(10'000));
  EXPECT_GE(report.hash_build_seconds, 0.0);
  for (auto m : {JoinMethod::kInljLearned, JoinMethod::kSortJoin}) {
    EXPECT_LT(f.Run(m).hash_build_seconds, 0.0);
  }
}

TEST(Join, HashJoinMemoryCap)
{
  Rng rng{6};
  const auto keys = testing::SparseKeys(rng, 10'000);
  Fixture f{WithPayload(keys, 0), WithPayload(keys, 0)};
  JoinOptions o;
  o.method = JoinMethod::kHashJoin;
  o.hash_memory_bytes = 10'000 * kHashEntryBytes - 1;
  EXPECT_THROW(f.Run(o), ResourceError);
  o.hash_memory_bytes = 10'000 * kHashEntryBytes;
  EXPECT_NO_THROW(f.Run(o));
}

TEST(Join, RejectsBadInputs)
{
  Rng rng{7};
  const auto keys = testing::SparseKeys(rng, 5000);
  Fixture f{WithPayload(keys, 0), WithPayload(std::vector<std::uint64_t>(keys.begin(), keys.begin() + 4000), 0)};
  EXPECT_THROW(f.Run(JoinMethod::kSortJoin), ContractError);

  Fixture g{WithPayload({1, 2}, 0), WithPayload(keys, 0)};
  JoinOptions o;
  o.method = JoinMethod::kInljLearned;
  EXPECT_THROW(RunJoin(g.dir / "R", g.dir / "S", nullptr, g.dir / "O", o), ContractError);
  const auto wrong = PlaIndex::Build(std::vector<std::uint64_t>(keys.begin(), keys.begin() + 10), 2);
  EXPECT_THROW(RunJoin(g.dir / "R", g.dir / "S", &wrong, g.dir / "O", o), ContractError);
  o.threads = 0;
  EXPECT_THROW(g.Run(o), ContractError);
  EXPECT_THROW(ParseMethod("nested"), ContractError);
  EXPECT_EQ(ParseMethod("hash_join"), JoinMethod::kHashJoin);
}

/*### Optimizations ###*/

TEST(Join, ClampAndIteratorDoNotChangeOutput)
{
  Rng rng{8};
  const auto s_keys = testing::RandomSortedKeys(rng, 80'000, 1000);
  std::vector<std::uint64_t> r_keys;
  for (auto k : s_keys) {
    if (rng.Below(20) == 0) r_keys.push_back(k + rng.Below(2));
  }
  r_keys.erase(std::unique(r_keys.begin(), r_keys.end()), r_keys.end());
  Fixture f{WithPayload(r_keys, 1), WithPayload(s_keys, 2)};
  const auto expected = Oracle(f.outer, f.inner);
  for (bool clamp : {false, true}) {
    for (bool iter : {false, true}) {
      JoinOptions o;
      o.method = JoinMethod::kInljLearned;
      o.clamp_to_last = clamp;
      o.use_iterator = iter;
      f.Run(o);
      ASSERT_EQ(ReadAll(f.dir / "O"), expected) << clamp << iter;
    }
  }
}

TEST(Join, SequentialRegimeReadsInnerOnce)
{
  Rng rng{9};
  const auto s_keys = testing::SparseKeys(rng, 300'000);
  for (std::uint64_t ratio : {1, 10, 100}) {
    std::vector<std::uint64_t> r_keys;
    for (auto k : s_keys) {
      if (rng.Below(ratio) == 0) r_keys.push_back(k);
    }
    Fixture f{WithPayload(r_keys, 0), WithPayload(s_keys, 0)};
    for (auto m : {JoinMethod::kInljLearned, JoinMethod::kInljBtree}) {
      for (std::size_t t : {1u, 4u}) {
        const auto report = f.Run(m, t);
        EXPECT_LE(report.inner.blocks_read, BlocksFor(s_keys.size()) + t) << MethodName(m);
      }
    }
  }
}

TEST(Join, SparseRegimeOneFetchPerProbe)
{
  Rng rng{10};
  const auto s_keys = testing::SparseKeys(rng, 500'000);
  std::vector<std::uint64_t> r_keys;
  for (std::size_t i = 0; i < s_keys.size(); i += 1000 + rng.Below(1000)) r_keys.push_back(s_keys[i]);
  Fixture f{WithPayload(r_keys, 0), WithPayload(s_keys, 0)};
  const auto report = f.Run(JoinMethod::kInljLearned);
  EXPECT_LE(report.inner.io_calls, r_keys.size() + f.learned.segments().size());
  const auto w = f.learned.max_window();
  const auto segs = f.learned.segments().size();
  EXPECT_LE(report.comparisons,
            r_keys.size() * (CeilLog2(w) + 1) + r_keys.size() + CeilLog2(segs + 1) + segs);
}

/*### Parallel execution ###*/

TEST(Join, ThreadCountsGiveIdenticalFiles)
{
  Rng rng{11};
  const auto s_keys = testing::SparseKeys(rng, 200'000);
  std::vector<std::uint64_t> r_keys;
  for (auto k : s_keys) {
    if (rng.Below(100) == 0) r_keys.push_back(k);
  }
  Fixture f{WithPayload(r_keys, 3), WithPayload(s_keys, 4)};
  for (auto m : kAllMethods) {
    const auto single = f.Run(m, 1, "single");
    for (std::size_t t : {2u, 4u, 8u}) {
      const auto multi = f.Run(m, t, "multi");
      ASSERT_EQ(FirstDivergence(f.dir / "single", f.dir / "multi"), -1) << MethodName(m) << t;
      ASSERT_EQ(multi.inner_per_thread.size(), t);
      ASSERT_LE(multi.inner.blocks_read, single.inner.blocks_read + t) << MethodName(m) << t;
      ASSERT_FALSE(std::filesystem::exists(f.dir / "multi.part0"));
    }
  }
}

TEST(Join, MoreThreadsThanOuterTuples)
{
  Fixture f{WithPayload({5}, 0), WithPayload({1, 5, 9}, 0)};
  const auto report = f.Run(JoinMethod::kInljLearned, 8);
  EXPECT_EQ(report.output_tuples, 1u);
}

TEST(Join, SelfJoinMillionFourThreads)
{
  TempDir dir;
  Generate(Distribution::kUsparse, 1'000'000, 3, dir / "S");
  const auto keys = ReadKeys(dir / "S");
  const auto index = PlaIndex::BuildSampled(keys, 128, 2);
  JoinOptions o;
  o.method = JoinMethod::kInljLearned;
  const auto one = RunJoin(dir / "S", dir / "S", &index, dir / "one", o);
  o.threads = 4;
  const auto four = RunJoin(dir / "S", dir / "S", &index, dir / "four", o);
  EXPECT_EQ(FirstDivergence(dir / "one", dir / "four"), -1);
  EXPECT_EQ(one.output_tuples, 1'000'000u);
  EXPECT_EQ(one.inner.blocks_read, 3907u);
  EXPECT_LE(four.inner.blocks_read, 3907u + 4);
}

}  // namespace
}  // namespace xmjoin
