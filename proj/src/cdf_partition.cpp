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

#include "xmjoin/cdf_partition.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <random>
#include <string>

#include "binary_io.hpp"
#include "xmjoin/errors.hpp"
#include "xmjoin/join_engine.hpp"

namespace xmjoin
{
namespace
{
constexpr std::size_t kStreamBlocks = 64;
constexpr std::uint64_t kChunkHeaderBytes = 16;

std::filesystem::path
WithSuffix(const std::filesystem::path &prefix, const char *suffix)
{
  auto p = prefix;
  p += suffix;
  return p;
}

std::uint64_t
BlockOffset(std::uint64_t block)
{
  return kDataOffset + block * kBlockSize;
}

std::span<const std::byte>
AsBytes(std::span<const Tuple> tuples)
{
  return std::as_bytes(tuples);
}

/*######################################################################################
 * Partition writer state
 *####################################################################################*/

struct Chunk {
  std::uint64_t block;
  std::uint64_t count;
};

struct Slot {
  std::vector<Tuple> pending{};
  std::uint64_t in_extent{0};
  std::vector<Chunk> chunks{};
};

class PartitionWriter
{
 public:
  PartitionWriter(BlockFile &file, PartitionMap &map)
      : file_{file}, map_{map}, slots_(map.partitions),
        next_free_{map.partitions * map.extent_blocks()}
  {
    for (auto &s : slots_) s.pending.reserve(kFlushGroup);
  }

  void Add(std::uint64_t p, const Tuple &t)
  {
    auto &slot = slots_[p];
    slot.pending.push_back(t);
    if (slot.pending.size() == kFlushGroup) Drain(p);
  }

  void Finish()
  {
    for (std::uint64_t p = 0; p < slots_.size(); ++p) {
      Drain(p);
      auto &slot = slots_[p];
      auto &entry = map_.entries[p];
      entry.offset_block = p * map_.extent_blocks();
      entry.count = slot.in_extent;
      entry.spill_block = slot.chunks.empty() ? 0 : slot.chunks.front().block;
      for (std::size_t c = 0; c < slot.chunks.size(); ++c) {
        const std::uint64_t header[2] = {
            c + 1 < slot.chunks.size() ? slot.chunks[c + 1].block : 0, slot.chunks[c].count};
        file_.WriteAt(BlockOffset(slot.chunks[c].block), std::as_bytes(std::span{header}));
        entry.count += slot.chunks[c].count;
      }
    }
  }

  /// First data block past the extents and every allocated spill chunk.
  [[nodiscard]] std::uint64_t end_block() const { return next_free_; }

  [[nodiscard]] std::uint64_t spilled() const
  {
    return static_cast<std::uint64_t>(
        std::count_if(slots_.begin(), slots_.end(), [](const Slot &s) { return !s.chunks.empty(); }));
  }

 private:
  void Drain(std::uint64_t p)
  {
    auto &slot = slots_[p];
    std::span<const Tuple> rest{slot.pending};
    const auto cap = map_.extent_capacity();
    if (!rest.empty() && slot.in_extent < cap) {
      const auto take = std::min<std::uint64_t>(rest.size(), cap - slot.in_extent);
      file_.WriteAt(BlockOffset(p * map_.extent_blocks()) + slot.in_extent * kTupleSize,
                    AsBytes(rest.first(take)));
      slot.in_extent += take;
      rest = rest.subspan(take);
    }
    while (!rest.empty()) {
      if (slot.chunks.empty() || slot.chunks.back().count == map_.spill_capacity()) {
        slot.chunks.push_back({next_free_, 0});
        next_free_ += map_.extent_blocks();
      }
      auto &chunk = slot.chunks.back();
      const auto take = std::min<std::uint64_t>(rest.size(), map_.spill_capacity() - chunk.count);
      file_.WriteAt(BlockOffset(chunk.block) + kChunkHeaderBytes + chunk.count * kTupleSize,
                    AsBytes(rest.first(take)));
      chunk.count += take;
      rest = rest.subspan(take);
    }
    slot.pending.clear();
  }

  BlockFile &file_;
  PartitionMap &map_;
  std::vector<Slot> slots_;
  std::uint64_t next_free_;
};

std::vector<Tuple>
SortedPartition(BlockFile &file, const PartitionMap &map, std::uint64_t p)
{
  auto tuples = ReadPartition(file, map, p);
  std::sort(tuples.begin(), tuples.end(),
            [](const Tuple &a, const Tuple &b) { return a.key < b.key; });
  return tuples;
}

}  // namespace

/*######################################################################################
 * Sampled model
 *####################################################################################*/

double
SampledModel::SampleRank(std::uint64_t key) const
{
  const auto &segs = index.segments();
  if (segs.empty() || key < segs.front().first_key) return 0;
  if (key > last_key) return static_cast<double>(sample_size);
  const auto i = index.SegmentFor(key);
  const bool last = i + 1 == segs.size();
  const auto x0 = segs[i].first_key;
  const auto y0 = static_cast<double>(segs[i].start_rank);
  const auto x1 = last ? last_key : segs[i + 1].first_key;
  const auto y1 = static_cast<double>(last ? sample_size - 1 : segs[i + 1].start_rank);
  if (x1 == x0) return y0;
  const double slope = (y1 - y0) / static_cast<double>(x1 - x0);
  return std::clamp(y0 + static_cast<double>(key - x0) * slope, y0, y1);
}

double
SampledModel::EstimateRank(std::uint64_t key) const
{
  if (sample_size == 0) return 0;
  return SampleRank(key) * static_cast<double>(table_count) / static_cast<double>(sample_size);
}

std::uint64_t
SampledModel::PartitionOf(std::uint64_t key, std::uint64_t partitions) const
{
  if (sample_size == 0 || partitions == 0) return 0;
  const double scaled = std::floor(SampleRank(key) * static_cast<double>(partitions) /
                                   static_cast<double>(sample_size));
  return std::min<std::uint64_t>(static_cast<std::uint64_t>(scaled), partitions - 1);
}

void
SampledModel::Serialize(const std::filesystem::path &summary,
                        const std::filesystem::path &index_file) const
{
  detail::ByteWriter out;
  out.Magic("SMDL");
  out.Put<std::uint64_t>(table_count);
  out.Put<std::uint64_t>(sample_size);
  out.Put<std::uint64_t>(last_key);
  out.Save(summary);
  index.Serialize(index_file);
}

SampledModel
SampledModel::Deserialize(const std::filesystem::path &summary,
                          const std::filesystem::path &index_file)
{
  detail::ByteReader in{summary};
  in.ExpectMagic("SMDL");
  SampledModel model;
  model.table_count = in.Get<std::uint64_t>();
  model.sample_size = in.Get<std::uint64_t>();
  model.last_key = in.Get<std::uint64_t>();
  model.index = PlaIndex::Deserialize(index_file);
  if (in.remaining() != 0 || model.index.n_train() != model.sample_size ||
      model.sample_size > model.table_count) {
    throw FormatError("model summary '" + summary.string() + "' does not match its index");
  }
  return model;
}

SampledModel
TrainSampledModel(const std::filesystem::path &table,
                  double fraction,
                  std::uint64_t seed,
                  IoStats *io,
                  std::uint64_t epsilon)
{
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ContractError("sample fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  auto reader = TableReader::Open(table, kStreamBlocks);
  const auto n = reader.size();
  if (n == 0) throw ContractError("cannot train a model on an empty table");
  const auto wanted = std::clamp<std::uint64_t>(
      static_cast<std::uint64_t>(std::llround(fraction * static_cast<double>(n))), 2, n);

  // Selection sampling: keep record i with probability (still needed) / (still unseen).
  std::mt19937_64 rng{seed};
  std::vector<std::uint64_t> sample;
  sample.reserve(wanted);
  auto stream = reader.Stream();
  Tuple t{};
  for (std::uint64_t seen = 0; stream.Next(t); ++seen) {
    const auto need = wanted - sample.size();
    if (need == 0) break;
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (u * static_cast<double>(n - seen) < static_cast<double>(need)) sample.push_back(t.key);
  }
  // The scan stops early once the sample is full; finish it so the pass is always whole.
  while (stream.Next(t)) {
  }
  if (io != nullptr) *io += reader.stats();

  std::sort(sample.begin(), sample.end());
  if (std::adjacent_find(sample.begin(), sample.end()) != sample.end()) {
    throw ContractError("table '" + table.string() + "' has duplicate keys");
  }
  SampledModel model;
  model.index = PlaIndex::Build(sample, epsilon);
  model.table_count = n;
  model.sample_size = sample.size();
  model.last_key = sample.back();
  return model;
}

/*######################################################################################
 * Partition map
 *####################################################################################*/

std::uint64_t
ExtentBlocks(std::uint64_t table_count, std::uint64_t partitions)
{
  if (partitions == 0) throw ContractError("partition count must be positive");
  const auto slack = (3 * table_count + 2 * partitions - 1) / (2 * partitions);
  return std::max<std::uint64_t>(1, (slack * kTupleSize + kBlockSize - 1) / kBlockSize);
}

std::uint64_t
DefaultPartitions(std::uint64_t table_count)
{
  return std::max<std::uint64_t>(1, BlocksFor(table_count));
}

std::uint64_t
PartitionMap::extent_blocks() const
{
  return ExtentBlocks(table_count, partitions);
}

void
PartitionMap::Serialize(const std::filesystem::path &path) const
{
  detail::ByteWriter out;
  out.Magic("PMAP");
  out.Put<std::uint64_t>(partitions);
  out.Put<std::uint64_t>(table_count);
  for (const auto &e : entries) {
    out.Put<std::uint64_t>(e.offset_block);
    out.Put<std::uint64_t>(e.count);
    out.Put<std::uint64_t>(e.spill_block);
  }
  out.Save(path);
}

PartitionMap
PartitionMap::Deserialize(const std::filesystem::path &path)
{
  detail::ByteReader in{path};
  in.ExpectMagic("PMAP");
  PartitionMap map;
  map.partitions = in.Get<std::uint64_t>();
  map.table_count = in.Get<std::uint64_t>();
  if (map.partitions == 0 || in.remaining() != map.partitions * 24) {
    throw FormatError("corrupt partition map '" + path.string() + "'");
  }
  map.entries.resize(map.partitions);
  std::uint64_t total = 0;
  for (auto &e : map.entries) {
    e.offset_block = in.Get<std::uint64_t>();
    e.count = in.Get<std::uint64_t>();
    e.spill_block = in.Get<std::uint64_t>();
    total += e.count;
  }
  if (total != map.table_count) {
    throw FormatError("partition counts in '" + path.string() + "' do not add up");
  }
  return map;
}

/*######################################################################################
 * Partitioning
 *####################################################################################*/

PartitionResult
Partition(const std::filesystem::path &table,
          const SampledModel &model,
          std::uint64_t partitions,
          const std::filesystem::path &out)
{
  auto reader = TableReader::Open(table, kStreamBlocks);
  if (partitions == 0) partitions = DefaultPartitions(reader.size());
  PartitionResult result;
  result.map.partitions = partitions;
  result.map.table_count = reader.size();
  result.map.entries.resize(partitions);

  auto file = BlockFile::Create(out);
  const std::uint64_t header[2] = {reader.size(), kTupleSize};
  file.WriteRaw(0, std::as_bytes(std::span{header}));
  PartitionWriter writer{file, result.map};
  auto stream = reader.Stream();
  Tuple t{};
  while (stream.Next(t)) writer.Add(model.PartitionOf(t.key, partitions), t);
  writer.Finish();
  // Extents are preallocated, so trailing ones may never have been written to.
  file.Truncate(BlockOffset(writer.end_block()));

  result.assign_pass = reader.stats();
  result.written = file.stats();
  result.spilled_partitions = writer.spilled();
  return result;
}

PartitionResult
PartitionTable(const std::filesystem::path &table,
               double fraction,
               std::uint64_t seed,
               std::uint64_t partitions,
               const std::filesystem::path &prefix)
{
  IoStats sample_io;
  const auto model = TrainSampledModel(table, fraction, seed, &sample_io);
  auto result = Partition(table, model, partitions, WithSuffix(prefix, ".part"));
  result.sample_pass = sample_io;
  result.map.Serialize(WithSuffix(prefix, ".pmap"));
  model.Serialize(WithSuffix(prefix, ".smdl"), WithSuffix(prefix, ".plai"));
  return result;
}

SampledModel
LoadModel(const std::filesystem::path &prefix)
{
  return SampledModel::Deserialize(WithSuffix(prefix, ".smdl"), WithSuffix(prefix, ".plai"));
}

std::vector<Tuple>
ReadPartition(BlockFile &file, const PartitionMap &map, std::uint64_t p)
{
  if (p >= map.partitions) {
    throw BoundsError("partition " + std::to_string(p) + " out of range");
  }
  const auto &entry = map.entries[p];
  std::vector<Tuple> tuples;
  tuples.reserve(entry.count);
  AlignedBuffer buffer{map.extent_blocks() * kBlockSize};
  const auto first = std::min(entry.count, map.extent_capacity());
  if (first > 0) {
    file.ReadBlocks(entry.offset_block, BlocksFor(first), buffer.data());
    const auto *src = reinterpret_cast<const Tuple *>(buffer.data());
    tuples.insert(tuples.end(), src, src + first);
  }
  auto chunk = entry.spill_block;
  while (tuples.size() < entry.count) {
    if (chunk == 0) throw FormatError("spill chain of partition " + std::to_string(p) + " ends early");
    const auto want = std::min<std::uint64_t>(entry.count - tuples.size(), map.spill_capacity());
    file.ReadBlocks(chunk, BlocksFor(want + 1), buffer.data());
    std::uint64_t header[2];
    std::memcpy(header, buffer.data(), sizeof header);
    if (header[1] != want) throw FormatError("spill chunk count mismatch in partition " + std::to_string(p));
    const auto *src = reinterpret_cast<const Tuple *>(buffer.data() + kChunkHeaderBytes);
    tuples.insert(tuples.end(), src, src + want);
    chunk = header[0];
  }
  return tuples;
}

/*######################################################################################
 * Partition-wise join
 *####################################################################################*/

UnclusteredReport
UnclusteredJoin(const std::filesystem::path &outer_prefix,
                const std::filesystem::path &inner_prefix,
                const std::filesystem::path &output)
{
  const auto outer_map = PartitionMap::Deserialize(WithSuffix(outer_prefix, ".pmap"));
  const auto inner_map = PartitionMap::Deserialize(WithSuffix(inner_prefix, ".pmap"));
  if (outer_map.table_count > inner_map.table_count) {
    throw ContractError("outer table must not be larger than the inner table");
  }
  const auto inner_model = LoadModel(inner_prefix);
  auto outer_file = BlockFile::OpenRead(WithSuffix(outer_prefix, ".part"), false);
  auto inner_file = BlockFile::OpenRead(WithSuffix(inner_prefix, ".part"), false);
  auto writer = TableWriter::Create(output, Order::kSorted);

  UnclusteredReport report;
  const auto start = std::chrono::steady_clock::now();
  std::vector<Tuple> cached;
  std::uint64_t cached_id = inner_map.partitions;  // none
  for (std::uint64_t p = 0; p < outer_map.partitions; ++p) {
    if (outer_map.entries[p].count == 0) continue;
    for (const auto &r : SortedPartition(outer_file, outer_map, p)) {
      const auto target = inner_model.PartitionOf(r.key, inner_map.partitions);
      if (target != cached_id) {
        cached = SortedPartition(inner_file, inner_map, target);
        cached_id = target;
        ++report.inner_partitions_loaded;
      }
      const auto at = LastMileSearch(cached, r.key, report.comparisons);
      if (at < cached.size() && cached[at].key == r.key) {
        writer.Append(Tuple{r.key, cached[at].value});
      }
    }
  }
  writer.Close();
  report.join_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.outer = outer_file.stats();
  report.inner = inner_file.stats();
  report.output = writer.stats();
  report.output_tuples = writer.count();
  return report;
}

}  // namespace xmjoin
