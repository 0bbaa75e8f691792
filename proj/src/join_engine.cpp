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

#include "xmjoin/join_engine.hpp"

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_set>

#include "xmjoin/errors.hpp"

namespace xmjoin
{
namespace
{
using Clock = std::chrono::steady_clock;

constexpr std::size_t kStreamBlocks = 64;

double
SecondsSince(Clock::time_point start)
{
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Rank ranges owned by one worker: outer [r_begin, r_end), inner [s_begin, s_end).
struct WorkerRange {
  std::uint64_t r_begin;
  std::uint64_t r_end;
  std::uint64_t s_begin;
  std::uint64_t s_end;
};

class Worker
{
 public:
  Worker(const std::filesystem::path &outer,
         const std::filesystem::path &inner,
         const std::filesystem::path &output,
         const WorkerRange &range,
         const SearchIndex *index,
         const JoinOptions &options,
         std::size_t fetch_blocks)
      : range_{range},
        index_{index},
        options_{options},
        outer_{TableReader::Open(outer, options.outer_buffer_blocks, options.direct)},
        inner_{TableReader::Open(inner, fetch_blocks, options.direct)},
        writer_{TableWriter::Create(output, Order::kSorted)}
  {
    outer_.Restrict(range.r_begin, range.r_end);
    inner_.Restrict(range.s_begin, range.s_end);
  }

  void Run()
  {
    switch (options_.method) {
      case JoinMethod::kInljLearned:
      case JoinMethod::kInljBtree:
        Inlj();
        break;
      case JoinMethod::kSortJoin:
        SortMerge();
        break;
      case JoinMethod::kHashJoin:
        HashBuild();
        HashProbe();
        break;
    }
    Finish();
  }

  /*### indexed nested loop ###*/

  void Inlj()
  {
    const bool learned = options_.method == JoinMethod::kInljLearned;
    const bool clamp = learned && options_.clamp_to_last;
    auto cursor = index_->MakeCursor();
    std::uint64_t last = range_.s_begin;
    auto stream = outer_.Stream(range_.r_begin, range_.r_end);
    Tuple r{};
    while (stream.Next(r)) {
      SearchWindow w{};
      if (options_.use_iterator) {
        w = cursor->Lookup(r.key);
      } else {
        auto fresh = index_->MakeCursor();
        w = fresh->Lookup(r.key);
        comparisons_ += fresh->comparisons();
      }
      std::uint64_t lo = std::max(w.lo, range_.s_begin);
      if (clamp) lo = std::max(lo, last);
      const std::uint64_t hi = std::max(lo, std::min(w.hi, range_.s_end));
      const auto window = inner_.ReadWindow(lo, hi);
      const auto offset = LastMileSearch(window, r.key, comparisons_);
      if (offset < window.size() && window[offset].key == r.key) {
        writer_.Append(Tuple{r.key, window[offset].value});
      }
      last = lo + offset;
    }
    comparisons_ += cursor->comparisons();
  }

  /*### two-pointer merge ###*/

  void SortMerge()
  {
    auto rs = outer_.Stream(range_.r_begin, range_.r_end);
    auto ss = inner_.Stream(range_.s_begin, range_.s_end);
    while (!rs.done() && !ss.done()) {
      const auto rk = rs.Peek().key;
      const auto &s = ss.Peek();
      ++comparisons_;
      if (rk < s.key) {
        rs.Advance();
      } else if (s.key < rk) {
        ss.Advance();
      } else {
        writer_.Append(Tuple{s.key, s.value});
        rs.Advance();
        ss.Advance();
      }
    }
    // A merge reads both inputs to the end.
    while (!ss.done()) {
      ss.Peek();
      ss.Advance();
    }
    while (!rs.done()) {
      rs.Peek();
      rs.Advance();
    }
  }

  /*### hash ###*/

  void HashBuild()
  {
    const auto start = Clock::now();
    keys_.reserve(range_.r_end - range_.r_begin);
    auto rs = outer_.Stream(range_.r_begin, range_.r_end);
    Tuple r{};
    while (rs.Next(r)) keys_.insert(r.key);
    build_seconds_ = SecondsSince(start);
  }

  void HashProbe()
  {
    auto ss = inner_.Stream(range_.s_begin, range_.s_end);
    Tuple s{};
    while (ss.Next(s)) {
      ++comparisons_;
      if (keys_.contains(s.key)) writer_.Append(s);
    }
  }

  void Finish() { writer_.Close(); }

  [[nodiscard]] const IoStats &outer_stats() const { return outer_.stats(); }
  [[nodiscard]] const IoStats &inner_stats() const { return inner_.stats(); }
  [[nodiscard]] const IoStats &output_stats() const { return writer_.stats(); }
  [[nodiscard]] std::uint64_t comparisons() const { return comparisons_; }
  [[nodiscard]] std::uint64_t output_tuples() const { return writer_.count(); }
  [[nodiscard]] double build_seconds() const { return build_seconds_; }
  [[nodiscard]] bool direct_effective() const
  {
    return inner_.direct_effective() && outer_.direct_effective();
  }

 private:
  WorkerRange range_;
  const SearchIndex *index_;
  const JoinOptions &options_;
  TableReader outer_;
  TableReader inner_;
  TableWriter writer_;
  std::unordered_set<std::uint64_t> keys_{};
  std::uint64_t comparisons_{0};
  double build_seconds_{0};
};

/// Lower bound of `key` in the inner table, by index window or by binary search on disk.
std::uint64_t
DiskLowerBound(TableReader &reader, const SearchIndex *index, std::uint64_t key)
{
  std::uint64_t ignored = 0;
  if (index != nullptr) {
    const auto w = index->Lookup(key);
    return w.lo + LastMileSearch(reader.ReadWindow(w.lo, w.hi), key, ignored);
  }
  std::uint64_t lo = 0;
  std::uint64_t hi = reader.size();
  while (lo < hi) {
    const auto mid = lo + (hi - lo) / 2;
    if (reader.ReadWindow(mid, mid + 1)[0].key < key) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return lo;
}

std::filesystem::path
PartPath(const std::filesystem::path &output, std::size_t t)
{
  auto p = output;
  p += ".part" + std::to_string(t);
  return p;
}

}  // namespace

std::string_view
MethodName(JoinMethod method)
{
  switch (method) {
    case JoinMethod::kInljLearned:
      return "inlj_learned";
    case JoinMethod::kInljBtree:
      return "inlj_btree";
    case JoinMethod::kSortJoin:
      return "sort_join";
    case JoinMethod::kHashJoin:
      return "hash_join";
  }
  return "unknown";
}

JoinMethod
ParseMethod(std::string_view name)
{
  for (auto m : {JoinMethod::kInljLearned, JoinMethod::kInljBtree, JoinMethod::kSortJoin,
                 JoinMethod::kHashJoin}) {
    if (MethodName(m) == name) return m;
  }
  throw ContractError("unknown join method '" + std::string{name} + "'");
}

std::size_t
LastMileSearch(std::span<const Tuple> window, std::uint64_t query, std::uint64_t &comparisons)
{
  std::size_t n = window.size();
  if (n == 0) return 0;
  const Tuple *base = window.data();
  std::uint64_t steps = 1;
  while (n > 1) {
    const std::size_t half = n / 2;
    base = base[half].key < query ? base + half : base;
    n -= half;
    ++steps;
  }
  comparisons += steps;
  return static_cast<std::size_t>(base - window.data()) + (base->key < query ? 1 : 0);
}

JoinReport
RunJoin(const std::filesystem::path &outer,
        const std::filesystem::path &inner,
        const SearchIndex *inner_index,
        const std::filesystem::path &output,
        const JoinOptions &options)
{
  const auto r_header = ReadHeader(outer);
  const auto s_header = ReadHeader(inner);
  if (r_header.tuple_count > s_header.tuple_count) {
    throw ContractError("outer table (" + std::to_string(r_header.tuple_count) +
                        " tuples) must not be larger than inner table (" +
                        std::to_string(s_header.tuple_count) + " tuples)");
  }
  if (options.threads == 0) throw ContractError("thread count must be >= 1");
  const SearchIndex *index = UsesIndex(options.method) ? inner_index : nullptr;
  if (UsesIndex(options.method)) {
    if (index == nullptr) {
      throw ContractError(std::string{MethodName(options.method)} + " needs an inner index");
    }
    if (index->key_count() != s_header.tuple_count) {
      throw ContractError("index covers " + std::to_string(index->key_count()) +
                          " keys but the inner table has " +
                          std::to_string(s_header.tuple_count));
    }
  }
  if (options.method == JoinMethod::kHashJoin && options.hash_memory_bytes > 0 &&
      r_header.tuple_count * kHashEntryBytes > options.hash_memory_bytes) {
    throw ResourceError("hash table for " + std::to_string(r_header.tuple_count) +
                        " keys exceeds the memory cap of " +
                        std::to_string(options.hash_memory_bytes) + " bytes");
  }

  JoinReport report;
  report.fetch_blocks = options.fetch_blocks;
  if (report.fetch_blocks == 0) {
    report.fetch_blocks = index != nullptr ? WindowSpanBlocks(index->max_window()) : kStreamBlocks;
  }

  const std::size_t threads =
      std::max<std::uint64_t>(1, std::min<std::uint64_t>(options.threads, r_header.tuple_count));

  // Split the outer table by rank and find where each split key falls in the inner table.
  std::vector<WorkerRange> ranges(threads);
  {
    std::vector<std::uint64_t> r_split(threads + 1);
    std::vector<std::uint64_t> s_split(threads + 1);
    r_split[threads] = r_header.tuple_count;
    s_split[threads] = s_header.tuple_count;
    if (threads > 1) {
      auto r_plan = TableReader::Open(outer, 1, options.direct);
      auto s_plan = TableReader::Open(inner, 1, options.direct);
      for (std::size_t t = 1; t < threads; ++t) {
        r_split[t] = r_header.tuple_count * t / threads;
        const auto key = r_plan.ReadWindow(r_split[t], r_split[t] + 1)[0].key;
        s_split[t] = DiskLowerBound(s_plan, index, key);
      }
      report.planning = r_plan.stats() + s_plan.stats();
    }
    for (std::size_t t = 0; t < threads; ++t) {
      ranges[t] = WorkerRange{r_split[t], r_split[t + 1], s_split[t], s_split[t + 1]};
    }
  }

  std::vector<std::optional<Worker>> workers(threads);
  std::vector<std::exception_ptr> errors(threads);
  std::atomic<bool> failed{false};
  auto run_start = Clock::now();
  double build_seconds = 0;
  std::barrier sync{static_cast<std::ptrdiff_t>(threads), [&]() noexcept {
                      build_seconds = SecondsSince(run_start);
                      run_start = Clock::now();
                    }};

  const auto body = [&](std::size_t t) {
    try {
      workers[t].emplace(outer, inner, threads == 1 ? output : PartPath(output, t), ranges[t],
                         index, options, report.fetch_blocks);
    } catch (...) {
      errors[t] = std::current_exception();
      failed = true;
    }
    if (options.method == JoinMethod::kHashJoin) {
      if (!failed) {
        try {
          workers[t]->HashBuild();
        } catch (...) {
          errors[t] = std::current_exception();
          failed = true;
        }
      }
      sync.arrive_and_wait();
    }
    if (failed || !workers[t]) return;
    try {
      if (options.method == JoinMethod::kHashJoin) {
        workers[t]->HashProbe();
        workers[t]->Finish();
      } else {
        workers[t]->Run();
      }
    } catch (...) {
      errors[t] = std::current_exception();
      failed = true;
    }
  };

  if (threads == 1) {
    body(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(body, t);
  }
  for (const auto &e : errors) {
    if (e) {
      for (std::size_t t = 0; t < threads && threads > 1; ++t) {
        std::error_code ec;
        std::filesystem::remove(PartPath(output, t), ec);
      }
      std::rethrow_exception(e);
    }
  }

  report.cache_bypass_effective = options.direct;
  for (auto &w : workers) {
    report.outer += w->outer_stats();
    report.inner += w->inner_stats();
    report.output += w->output_stats();
    report.inner_per_thread.push_back(w->inner_stats());
    report.comparisons += w->comparisons();
    report.output_tuples += w->output_tuples();
    report.cache_bypass_effective = report.cache_bypass_effective && w->direct_effective();
  }
  workers.clear();

  if (threads > 1) {
    auto final_writer = TableWriter::Create(output, Order::kSorted);
    for (std::size_t t = 0; t < threads; ++t) {
      const auto part = PartPath(output, t);
      {
        auto reader = TableReader::Open(part, kStreamBlocks);
        auto stream = reader.Stream();
        Tuple tuple{};
        while (stream.Next(tuple)) final_writer.Append(tuple);
        report.output += reader.stats();
      }
      std::filesystem::remove(part);
    }
    final_writer.Close();
    report.output += final_writer.stats();
  }
  report.join_seconds = SecondsSince(run_start);
  if (options.method == JoinMethod::kHashJoin) report.hash_build_seconds = build_seconds;
  return report;
}

}  // namespace xmjoin
