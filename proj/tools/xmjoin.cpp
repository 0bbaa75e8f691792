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

// xmjoin command-line driver.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "xmjoin/bench.hpp"
#include "xmjoin/cdf_partition.hpp"
#include "xmjoin/cost_model.hpp"
#include "xmjoin/datagen.hpp"
#include "xmjoin/errors.hpp"
#include "xmjoin/join_engine.hpp"

namespace
{
using namespace xmjoin;

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

void
EmitRow(const BenchResult &row, const std::string &csv)
{
  if (!csv.empty()) {
    AppendRows(csv, std::span{&row, 1});
    return;
  }
  std::cout << kCsvVersionLine << '\n' << CsvHeader() << '\n' << FormatRow(row) << '\n';
}

template <class T, class F>
std::vector<T>
ParseList(const std::vector<std::string> &items, F parse)
{
  std::vector<T> out;
  for (const auto &s : items) out.push_back(parse(s));
  return out;
}

}  // namespace

int
main(int argc, char **argv)
{
  CLI::App app{"External-memory joins with learned and B-tree indexes"};
  app.require_subcommand(1);
  int exit_code = 0;

  /*### gen ###*/
  auto *gen = app.add_subcommand("gen", "Generate a sorted table, or a ratio sample of one");
  std::string gen_dist = "usparse", gen_out, gen_from;
  std::uint64_t gen_n = 1'000'000, gen_seed = 1, gen_ratio = 0;
  gen->add_option("--dist", gen_dist, "udense, usparse, normal or lognormal");
  gen->add_option("--n", gen_n, "Number of keys");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--from", gen_from, "Sample this table instead of generating");
  gen->add_option("--ratio", gen_ratio, "Keep 1 in ratio tuples of --from");
  gen->add_option("--out", gen_out)->required();
  gen->callback([&] {
    TableHeader h;
    if (!gen_from.empty()) {
      if (gen_ratio == 0) throw UsageError("--from needs --ratio");
      h = SampleRatio(gen_from, gen_ratio, gen_seed, gen_out);
    } else {
      h = Generate(ParseDistribution(gen_dist), gen_n, gen_seed, gen_out);
    }
    std::cout << "tuples=" << h.tuple_count << " bytes=" << h.PhysicalBytes() << '\n';
  });

  /*### ingest ###*/
  auto *ingest = app.add_subcommand("ingest", "Wrap a file of packed u64 keys as a table");
  std::string ingest_raw, ingest_out;
  bool ingest_sorted = false;
  std::uint64_t ingest_offset = 0;
  ingest->add_option("--raw", ingest_raw)->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", ingest_out)->required();
  ingest->add_flag("--sorted", ingest_sorted, "Keys are strictly increasing");
  ingest->add_option("--offset", ingest_offset, "Bytes to skip before the first key");
  ingest->callback([&] {
    const auto h = IngestRaw(ingest_raw, ingest_sorted ? Order::kSorted : Order::kUnsorted,
                             ingest_out, ingest_offset);
    std::cout << "tuples=" << h.tuple_count << '\n';
  });

  /*### shuffle ###*/
  auto *shuffle = app.add_subcommand("shuffle", "Write a random permutation of a table");
  std::string shuffle_in, shuffle_out;
  std::uint64_t shuffle_seed = 1;
  shuffle->add_option("--in", shuffle_in)->required()->check(CLI::ExistingFile);
  shuffle->add_option("--out", shuffle_out)->required();
  shuffle->add_option("--seed", shuffle_seed);
  shuffle->callback([&] {
    const auto s = Shuffle(shuffle_in, shuffle_seed, shuffle_out);
    std::cout << "blocks_read=" << s.read.blocks_read << " blocks_written=" << s.written.blocks_written
              << '\n';
  });

  /*### build-index ###*/
  auto *build = app.add_subcommand("build-index", "Build an index over a table");
  std::string build_table, build_kind, build_out, build_csv, build_dataset;
  std::uint64_t build_seed = 0;
  IndexParams build_params;
  build->add_option("--table", build_table)->required()->check(CLI::ExistingFile);
  build->add_option("--kind", build_kind, "pla, pla_sampled, btree_pivot or btree_dynamic")->required();
  build->add_option("--out", build_out)->required();
  build->add_option("--epsilon", build_params.epsilon, "Error bound of pla");
  build->add_option("--sample-rate", build_params.sample_rate, "k of pla_sampled");
  build->add_option("--sampled-epsilon", build_params.sampled_epsilon, "Error bound of pla_sampled");
  build->add_option("--pool-bytes", build_params.pool_bytes, "Buffer pool of btree_dynamic");
  build->add_option("--dataset", build_dataset);
  build->add_option("--seed", build_seed, "Recorded in the row");
  build->add_option("--csv", build_csv, "Append the row here instead of printing it");
  build->callback([&] {
    EmitRow(CmdBuildIndex(build_table, ParseIndexKind(build_kind), build_params, build_out,
                          build_dataset, build_seed),
            build_csv);
  });

  /*### partition ###*/
  auto *part = app.add_subcommand("partition", "CDF-partition an unsorted table");
  std::string part_table, part_prefix;
  double part_fraction = kDefaultSampleFraction;
  std::uint64_t part_seed = 1, part_count = 0;
  part->add_option("--table", part_table)->required()->check(CLI::ExistingFile);
  part->add_option("--prefix", part_prefix, "Writes <prefix>.part/.pmap/.plai/.smdl")->required();
  part->add_option("--fraction", part_fraction, "Sample fraction");
  part->add_option("--seed", part_seed);
  part->add_option("--partitions", part_count, "0 = one block per partition on average");
  part->callback([&] {
    const auto r = PartitionTable(part_table, part_fraction, part_seed, part_count, part_prefix);
    std::cout << "partitions=" << r.map.partitions
              << " blocks_read=" << r.sample_pass.blocks_read + r.assign_pass.blocks_read
              << " blocks_written=" << r.written.blocks_written
              << " spilled_partitions=" << r.spilled_partitions << '\n';
  });

  /*### join ###*/
  auto *join = app.add_subcommand("join", "Join two tables and emit a result row");
  JoinSpec spec;
  std::string join_method = "inlj_learned", join_outer, join_inner, join_index, join_out, join_csv;
  join->add_option("--method", join_method,
                   "inlj_learned, inlj_btree, sort_join, hash_join or unclustered");
  join->add_option("--outer", join_outer, "Outer table (partition prefix for unclustered)")->required();
  join->add_option("--inner", join_inner, "Inner table (partition prefix for unclustered)")->required();
  join->add_option("--index", join_index, "Index file over the inner table");
  join->add_option("--out", join_out)->required();
  join->add_option("--threads", spec.threads);
  join->add_option("--fetch-blocks", spec.fetch_blocks, "Blocks per inner read; 0 = window span");
  join->add_flag("--direct", spec.direct, "Bypass the OS cache for reads where supported");
  join->add_flag("--drop-caches", spec.drop_caches, "Try to drop the OS page cache first");
  join->add_option("--dataset", spec.dataset);
  join->add_option("--ratio", spec.ratio);
  join->add_option("--epsilon", spec.epsilon);
  join->add_option("--seed", spec.seed);
  join->add_option("--csv", join_csv, "Append the row here instead of printing it");
  join->callback([&] {
    if (join_method == "unclustered") {
      const auto r = UnclusteredJoin(join_outer, join_inner, join_out);
      std::cout << "output_tuples=" << r.output_tuples << " blocks_read_outer=" << r.outer.blocks_read
                << " blocks_read_inner=" << r.inner.blocks_read
                << " inner_partitions_loaded=" << r.inner_partitions_loaded << '\n';
      return;
    }
    spec.method = ParseMethod(join_method);
    spec.outer = join_outer;
    spec.inner = join_inner;
    spec.index = join_index;
    spec.output = join_out;
    EmitRow(CmdJoin(spec), join_csv);
  });

  /*### sweep ###*/
  auto *sweep = app.add_subcommand("sweep", "Run a method x ratio x threads x epsilon grid");
  SweepGrid grid;
  std::string sweep_dist = "usparse", sweep_workdir, sweep_csv;
  std::vector<std::string> sweep_methods{"inlj_learned", "inlj_btree", "sort_join", "hash_join"};
  sweep->add_option("--dist", sweep_dist);
  sweep->add_option("--n", grid.n, "Inner table size");
  sweep->add_option("--methods", sweep_methods)->delimiter(',');
  sweep->add_option("--ratios", grid.ratios)->delimiter(',')->required();
  sweep->add_option("--threads", grid.threads)->delimiter(',');
  sweep->add_option("--epsilons", grid.epsilons)->delimiter(',');
  sweep->add_option("--seeds", grid.seeds)->delimiter(',');
  sweep->add_option("--workdir", sweep_workdir)->required();
  sweep->add_option("--csv", sweep_csv)->required();
  sweep->add_flag("--direct", grid.direct);
  sweep->add_flag("--drop-caches", grid.drop_caches);
  sweep->callback([&] {
    grid.dist = ParseDistribution(sweep_dist);
    grid.methods = ParseList<JoinMethod>(sweep_methods, [](const std::string &s) { return ParseMethod(s); });
    grid.workdir = sweep_workdir;
    grid.csv = sweep_csv;
    const auto s = CmdSweep(grid);
    std::cout << "executed=" << s.executed << " skipped=" << s.skipped << '\n';
  });

  /*### verify ###*/
  auto *verify = app.add_subcommand("verify", "Check all join methods against the oracle");
  std::string verify_dist = "usparse", verify_workdir;
  std::uint64_t verify_n = 10'000, verify_ratio = 10, verify_seed = 1;
  std::size_t verify_threads = 1;
  verify->add_option("--dist", verify_dist);
  verify->add_option("--n", verify_n);
  verify->add_option("--ratio", verify_ratio);
  verify->add_option("--seed", verify_seed);
  verify->add_option("--threads", verify_threads);
  verify->add_option("--workdir", verify_workdir)->required();
  verify->callback([&] {
    const auto report = VerifyDataset(ParseDistribution(verify_dist), verify_n, verify_ratio,
                                      verify_seed, verify_workdir, DefaultRunner(verify_threads));
    std::cout << FormatVerify(report);
    if (!report.pass) exit_code = kExitFailure;
  });

  /*### predict-cost ###*/
  auto *predict = app.add_subcommand("predict-cost", "Evaluate the affine I/O cost model");
  CostParams cost;
  predict->add_option("--alpha", cost.alpha)->required();
  predict->add_option("--block-words", cost.block_words);
  predict->add_option("--epsilon", cost.epsilon)->required();
  predict->add_option("--r", cost.r_count, "Outer tuples")->required();
  predict->add_option("--s", cost.s_count, "Inner tuples")->required();
  predict->callback([&] {
    const auto c = PredictCost(cost);
    std::printf("outer_scan,inner_probe,total,regime,predicted_io_calls\n%.12g,%.12g,%.12g,%s,%.12g\n",
                c.outer_scan, c.inner_probe, c.total,
                std::string{RegimeName(ClassifyRegime(cost))}.c_str(), PredictIoCalls(cost));
  });

  /*### calibrate-alpha ###*/
  auto *calib = app.add_subcommand("calibrate-alpha", "Fit alpha from timed reads of a large file");
  std::string calib_file;
  int calib_reads = 32;
  bool calib_direct = false;
  std::uint64_t calib_seed = 1;
  calib->add_option("--file", calib_file, "At least 256 MB")->required()->check(CLI::ExistingFile);
  calib->add_option("--reads", calib_reads, "Reads per I/O size");
  calib->add_flag("--direct", calib_direct);
  calib->add_option("--seed", calib_seed);
  calib->callback([&] {
    const auto samples = ProbeDevice(calib_file, calib_reads, calib_direct, calib_seed);
    const auto fit = CalibrateAlpha(samples);
    if (!fit.warning.empty()) std::cerr << "warning: " << fit.warning << '\n';
    std::printf("alpha,intercept_seconds,seconds_per_word,monotone\n%.17g,%.17g,%.17g,%d\n",
                fit.alpha, fit.intercept, fit.slope, fit.monotone ? 1 : 0);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e);
  } catch (const ContractError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return exit_code;
}
