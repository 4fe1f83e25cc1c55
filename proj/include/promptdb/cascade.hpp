// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "promptdb/registration.hpp"
#include "promptdb/snapshot.hpp"
#include "promptdb/types.hpp"

namespace promptdb {

enum class StageKind { speech_rate, pitch, speaker, emotion };

const char* to_string(StageKind k) noexcept;
StageKind stage_kind_from_string(std::string_view s);

struct SimilarityStage {
  StageKind kind = StageKind::speech_rate;
  double top_fraction = 1.0;  // survivor fraction handed to this stage, (0, 1]
  std::optional<double> cost_per_sample_s;
};

/// Ordered similarity stages. The first stage always sees 100% of the
/// subset.
struct SelectionPlan {
  std::vector<SimilarityStage> stages;

  void validate() const;

  /// speech_rate 100%, pitch 20%, speaker 20%, emotion 20%.
  static SelectionPlan default_plan();

  static SelectionPlan from_json_text(const std::string& text);
  std::string to_json_text() const;
};

struct StageTrace {
  StageKind kind = StageKind::speech_rate;
  std::size_t processed = 0;
  std::vector<std::string> survivors;  // rank order, best first
  double elapsed_s = 0.0;
};

struct CascadeResult {
  std::string final_id;
  std::vector<StageTrace> stage_trace;
  std::optional<std::size_t> interrupted_at;  // 0-based index of the stage cut short

  static CascadeResult from_json_text(const std::string& text);
  std::string to_json_text() const;
};

/// Polled at stage boundaries and after every batch of 32 scored candidates;
/// returning true interrupts the cascade.
using StopFn = std::function<bool()>;

constexpr std::size_t kInterruptBatch = 32;

/// Higher is better. Speaker/emotion stages use embedding cosine; rate and
/// pitch stages use the negated relative distance. A record lacking the
/// stage's feature scores -infinity and ranks last; a query lacking it
/// raises MissingQueryFeature.
double stage_score(StageKind kind, const QueryFeatures& query,
                   const PromptRecord& record);

/// Survivors handed to the next stage: max(1, ceil(fraction * inputs)).
std::size_t survivor_count(double next_fraction, std::size_t inputs);

/// Per-stage processed counts for a subset of size n0 under the compounding
/// survivor recurrence.
std::vector<std::size_t> processed_counts(const SelectionPlan& plan, std::size_t n0);

/// Runs the cascade over the registered subset. Each stage scores its
/// inputs, sorts score-descending (ties by id ascending) and passes the top
/// survivors on. Interruption (deadline or stop signal) returns the rank-1
/// candidate of the last completed stage; if the first stage itself is cut
/// short, the best of its scored prefix. A stage whose query feature is
/// missing is skipped (stage 1 excepted, which raises MissingQueryFeature).
CascadeResult run_cascade(const SelectionPlan& plan, const CandidateSubset& subset,
                          const DatabaseSnapshot& snapshot, const QueryFeatures& query,
                          std::optional<double> deadline_s = std::nullopt,
                          const StopFn& stop = StopFn());

/// Predicted selection time: sum over stages of cost_per_sample_s times that
/// stage's processed count. Raises UnmeasuredStage when any stage lacks a
/// cost.
double estimate_total_time(const SelectionPlan& plan, std::size_t n0);

/// Measures per-sample stage costs: median of 5 repetitions of scoring
/// sample_n randomly drawn records, divided by sample_n. Requires
/// sample_n >= 100.
SelectionPlan calibrate_costs(const SelectionPlan& plan, const DatabaseSnapshot& snapshot,
                              std::size_t sample_n);

/// Longest plan prefix whose estimated time fits the budget; stage 1 is
/// always kept.
SelectionPlan plan_for_budget(const SelectionPlan& plan, std::size_t n0, double budget_s);

}  // namespace promptdb
