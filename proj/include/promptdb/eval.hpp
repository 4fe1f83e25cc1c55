// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "promptdb/cascade.hpp"
#include "promptdb/snapshot.hpp"
#include "promptdb/types.hpp"

namespace promptdb {

/// Seeded description of a synthetic corpus: speaker-clustered embeddings
/// with per-speaker base rate/pitch, plus held-out noisy query variants.
struct SyntheticCorpusSpec {
  std::size_t n_records = 400;
  std::size_t n_speakers = 20;
  Dims dims{64, 32, 16};
  int n_emotions = 6;
  double rate_min = 2.5;
  double rate_max = 6.5;
  double pitch_min = 90.0;
  double pitch_max = 320.0;
  double intra_sigma = 0.15;     // cluster spread around unit centers
  double record_jitter = 0.05;   // rate/pitch jitter within a speaker
  double query_vec_noise = 0.25; // additive spherical noise on query vectors
  double query_jitter = 0.10;    // multiplicative rate/pitch noise on queries
  std::size_t n_queries = 20;
  std::uint64_t seed = 1;

  void validate() const;  // raises BadSpec
};

struct EvalQuery {
  std::string source_id;
  QueryFeatures clean;  // ground truth
  QueryFeatures noisy;  // what the selector sees
};

struct GeneratedCorpus {
  DatabaseSnapshot snapshot;
  std::vector<EvalQuery> queries;
};

GeneratedCorpus generate_corpus(const SyntheticCorpusSpec& spec);

enum class Strategy { original, random_pick, proposed };

const char* to_string(Strategy s) noexcept;

struct StrategyRow {
  Strategy strategy = Strategy::original;
  double mean_ss = 0.0;
  double mean_es = 0.0;
  double mean_srs = 0.0;
};

struct SweepRow {
  std::size_t stages_used = 0;
  double mean_ss = 0.0;
  double mean_es = 0.0;
  double mean_srs = 0.0;
};

struct EvalReport {
  std::vector<StrategyRow> rows;
  std::vector<SweepRow> sweep;

  std::string to_table() const;
  std::string to_csv() const;
};

/// Per query and strategy, scores the chosen prompt's speaker/emotion/rate
/// similarity against the query's clean ground truth and tabulates means.
/// `original` scores the noisy input itself, `random_pick` draws uniformly
/// from the registered subset, `proposed` registers by audio then runs the
/// cascade.
EvalReport run_eval(const DatabaseSnapshot& snapshot,
                    const std::vector<EvalQuery>& queries, const SelectionPlan& plan,
                    const std::vector<Strategy>& strategies, int subset_k = 32,
                    std::uint64_t random_seed = 7);

/// One row per interruption point: the proposed strategy run with the plan
/// truncated after `point` stages (anytime-consistent with interrupting a
/// full run there).
std::vector<SweepRow> sweep_interruption(const DatabaseSnapshot& snapshot,
                                         const std::vector<EvalQuery>& queries,
                                         const SelectionPlan& plan,
                                         const std::vector<std::size_t>& points,
                                         int subset_k = 32);

}  // namespace promptdb
