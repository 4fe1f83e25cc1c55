// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "promptdb/cascade.hpp"
#include "promptdb/metrics.hpp"
#include "test_util.hpp"

using namespace promptdb;

namespace {

QueryFeatures full_query(std::mt19937_64& rng, const DatabaseSnapshot& snap) {
  QueryFeatures q;
  q.speaking_rate = 2.0 + 4.0 * (static_cast<double>(rng() % 1000) / 1000.0);
  q.pitch_mean_hz = 90.0 + 200.0 * (static_cast<double>(rng() % 1000) / 1000.0);
  q.speaker_vec = testutil::random_unit(rng, snap.dims.speaker);
  q.emotion_vec = testutil::random_unit(rng, snap.dims.emotion);
  return q;
}

CandidateSubset subset_of_all(const DatabaseSnapshot& snap) {
  CandidateSubset s;
  s.provenance = Provenance::audio;
  for (const auto& r : snap.records) {
    s.ids.push_back(r.id);
    s.scores.emplace(r.id, 0.0);
  }
  return s;
}

CandidateSubset random_subset(std::mt19937_64& rng, const DatabaseSnapshot& snap,
                              std::size_t n) {
  std::vector<std::size_t> indices(snap.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  std::shuffle(indices.begin(), indices.end(), rng);
  indices.resize(std::min(n, indices.size()));
  CandidateSubset s;
  s.provenance = Provenance::audio;
  for (std::size_t i : indices) {
    s.ids.push_back(snap.records[i].id);
    s.scores.emplace(snap.records[i].id, 0.0);
  }
  return s;
}

/// Independent cascade oracle: full sort at every stage with the same score
/// functions, cut by the survivor recurrence. Returns per-stage survivor id
/// lists (rank order).
std::vector<std::vector<std::string>> oracle_cascade(const SelectionPlan& plan,
                                                     const CandidateSubset& subset,
                                                     const DatabaseSnapshot& snap,
                                                     const QueryFeatures& query) {
  std::vector<std::vector<std::string>> per_stage;
  std::vector<std::string> current = subset.ids;
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& id : current) {
      scored.emplace_back(stage_score(plan.stages[i].kind, query, snap.at(id)), id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::size_t keep = scored.size();
    if (i + 1 < plan.stages.size()) {
      const double f = plan.stages[i + 1].top_fraction;
      keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(
                 std::ceil(f * static_cast<double>(scored.size()) - 1e-9)));
      keep = std::min(keep, scored.size());
    }
    std::vector<std::string> survivors;
    for (std::size_t j = 0; j < keep; ++j) survivors.push_back(scored[j].second);
    current = survivors;
    per_stage.push_back(std::move(survivors));
  }
  return per_stage;
}

}  // namespace

TEST_CASE("stage_score frozen values and missing-data rule") {
  std::mt19937_64 rng(40);
  PromptRecord r = testutil::make_record(rng, "a", 8, 4);
  r.speaking_rate = 4.0;
  r.pitch_mean_hz = 220.0;

  QueryFeatures q;
  q.speaking_rate = 5.0;
  q.pitch_mean_hz = 110.0;
  q.speaker_vec = r.speaker_vec;
  q.emotion_vec = r.emotion_vec;

  CHECK(stage_score(StageKind::speaker, q, r) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(stage_score(StageKind::speech_rate, q, r) == doctest::Approx(-0.25));
  CHECK(stage_score(StageKind::pitch, q, r) == doctest::Approx(-0.5));

  PromptRecord no_pitch = r;
  no_pitch.pitch_mean_hz.reset();
  CHECK(stage_score(StageKind::pitch, q, no_pitch) ==
        -std::numeric_limits<double>::infinity());

  QueryFeatures no_rate = q;
  no_rate.speaking_rate.reset();
  CHECK_THROWS_AS(stage_score(StageKind::speech_rate, no_rate, r), Error);
}

TEST_CASE("survivor counts follow the compounding law") {
  const SelectionPlan plan = SelectionPlan::default_plan();
  CHECK(processed_counts(plan, 1000) == std::vector<std::size_t>{1000, 200, 40, 8});
  CHECK(processed_counts(plan, 10) == std::vector<std::size_t>{10, 2, 1, 1});
  CHECK(processed_counts(plan, 1) == std::vector<std::size_t>{1, 1, 1, 1});

  // Monotone in n0 and in each fraction.
  for (std::size_t n = 1; n < 400; ++n) {
    const auto a = processed_counts(plan, n);
    const auto b = processed_counts(plan, n + 1);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] <= b[i]);
  }
  SelectionPlan wider = plan;
  wider.stages[2].top_fraction = 0.5;
  const auto narrow = processed_counts(plan, 500);
  const auto wide = processed_counts(wider, 500);
  for (std::size_t i = 0; i < narrow.size(); ++i) CHECK(narrow[i] <= wide[i]);
}

TEST_CASE("uninterrupted cascade matches the oracle stage by stage") {
  const DatabaseSnapshot snap = testutil::small_snapshot(41, 300, 16, 8);
  std::mt19937_64 rng(41);
  const SelectionPlan plan = SelectionPlan::default_plan();
  for (int trial = 0; trial < 20; ++trial) {
    const auto subset = random_subset(rng, snap, 1 + rng() % 200);
    const QueryFeatures q = full_query(rng, snap);
    const CascadeResult result = run_cascade(plan, subset, snap, q);
    const auto expected = oracle_cascade(plan, subset, snap, q);
    REQUIRE(result.stage_trace.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(result.stage_trace[i].survivors == expected[i]);
    }
    CHECK(result.final_id == expected.back().front());
    CHECK_FALSE(result.interrupted_at.has_value());
  }
}

TEST_CASE("monotone refinement: each survivor set nests in the previous") {
  const DatabaseSnapshot snap = testutil::small_snapshot(42, 200, 8, 4);
  std::mt19937_64 rng(42);
  const SelectionPlan plan = SelectionPlan::default_plan();
  const auto subset = random_subset(rng, snap, 150);
  const QueryFeatures q = full_query(rng, snap);
  const CascadeResult result = run_cascade(plan, subset, snap, q);
  for (std::size_t i = 1; i < result.stage_trace.size(); ++i) {
    const auto& prev = result.stage_trace[i - 1].survivors;
    for (const auto& id : result.stage_trace[i].survivors) {
      CHECK(std::find(prev.begin(), prev.end(), id) != prev.end());
    }
  }
}

TEST_CASE("single-stage plan is a brute-force argmax") {
  const DatabaseSnapshot snap = testutil::small_snapshot(43, 120, 8, 4);
  std::mt19937_64 rng(43);
  SelectionPlan plan;
  plan.stages = {{StageKind::speaker, 1.0, std::nullopt}};
  const auto subset = subset_of_all(snap);
  const QueryFeatures q = full_query(rng, snap);
  const CascadeResult result = run_cascade(plan, subset, snap, q);

  std::string best;
  double best_score = -1e300;
  for (const auto& r : snap.records) {
    const double s = stage_score(StageKind::speaker, q, r);
    if (s > best_score || (s == best_score && r.id < best)) {
      best_score = s;
      best = r.id;
    }
  }
  CHECK(result.final_id == best);
}

TEST_CASE("deterministic: identical runs give identical results") {
  const DatabaseSnapshot snap = testutil::small_snapshot(44, 250, 8, 4);
  std::mt19937_64 rng(44);
  const auto subset = random_subset(rng, snap, 200);
  const QueryFeatures q = full_query(rng, snap);
  const SelectionPlan plan = SelectionPlan::default_plan();
  const CascadeResult a = run_cascade(plan, subset, snap, q);
  const CascadeResult b = run_cascade(plan, subset, snap, q);
  CHECK(a.final_id == b.final_id);
  REQUIRE(a.stage_trace.size() == b.stage_trace.size());
  for (std::size_t i = 0; i < a.stage_trace.size(); ++i) {
    CHECK(a.stage_trace[i].survivors == b.stage_trace[i].survivors);
    CHECK(a.stage_trace[i].processed == b.stage_trace[i].processed);
  }
}

TEST_CASE("anytime consistency via deterministic stop polling") {
  const DatabaseSnapshot snap = testutil::small_snapshot(45, 300, 8, 4);
  std::mt19937_64 rng(45);
  const SelectionPlan plan = SelectionPlan::default_plan();
  for (int trial = 0; trial < 25; ++trial) {
    const auto subset = random_subset(rng, snap, 10 + rng() % 200);
    const QueryFeatures q = full_query(rng, snap);
    const auto counts = processed_counts(plan, subset.ids.size());

    for (std::size_t k = 1; k <= plan.stages.size(); ++k) {
      SelectionPlan truncated;
      truncated.stages.assign(plan.stages.begin(), plan.stages.begin() + k);
      const CascadeResult want = run_cascade(truncated, subset, snap, q);

      testutil::StopAtPoll stop(testutil::poll_index_after_stage(counts, k));
      const CascadeResult got =
          run_cascade(plan, subset, snap, q, std::nullopt, std::ref(stop));
      CHECK(got.final_id == want.final_id);
      if (k < plan.stages.size()) {
        REQUIRE(got.interrupted_at.has_value());
        CHECK(*got.interrupted_at == k);
      } else {
        CHECK_FALSE(got.interrupted_at.has_value());
      }
    }
  }
}

TEST_CASE("interruption after stage 2 equals brute force over stage-2 inputs") {
  const DatabaseSnapshot snap = testutil::small_snapshot(46, 260, 8, 4);
  std::mt19937_64 rng(46);
  const SelectionPlan plan = SelectionPlan::default_plan();
  const auto subset = random_subset(rng, snap, 180);
  const QueryFeatures q = full_query(rng, snap);
  const auto counts = processed_counts(plan, subset.ids.size());

  testutil::StopAtPoll stop(testutil::poll_index_after_stage(counts, 2));
  const CascadeResult got =
      run_cascade(plan, subset, snap, q, std::nullopt, std::ref(stop));

  const auto oracle = oracle_cascade(plan, subset, snap, q);
  CHECK(got.final_id == oracle[1].front());
}

TEST_CASE("mid-stage-1 interruption returns the best of the scored prefix") {
  const DatabaseSnapshot snap = testutil::small_snapshot(47, 100, 8, 4);
  std::mt19937_64 rng(47);
  const auto subset = subset_of_all(snap);
  const QueryFeatures q = full_query(rng, snap);

  // Fire on the very first poll: exactly one batch of 32 has been scored.
  testutil::StopAtPoll stop(1);
  const CascadeResult got = run_cascade(SelectionPlan::default_plan(), subset, snap, q,
                                        std::nullopt, std::ref(stop));
  REQUIRE(got.interrupted_at.has_value());
  CHECK(*got.interrupted_at == 0);
  CHECK(got.stage_trace.size() == 1);
  CHECK(got.stage_trace[0].processed == 32);

  std::string best;
  double best_score = -1e300;
  for (std::size_t i = 0; i < 32; ++i) {
    const auto& r = snap.at(subset.ids[i]);
    const double s = stage_score(StageKind::speech_rate, q, r);
    if (s > best_score || (s == best_score && r.id < best)) {
      best_score = s;
      best = r.id;
    }
  }
  CHECK(got.final_id == best);
}

TEST_CASE("immediate deadline interrupts within the first stage") {
  const DatabaseSnapshot snap = testutil::small_snapshot(48, 200, 8, 4);
  std::mt19937_64 rng(48);
  const auto subset = subset_of_all(snap);
  const QueryFeatures q = full_query(rng, snap);
  const CascadeResult got =
      run_cascade(SelectionPlan::default_plan(), subset, snap, q, 0.0);
  REQUIRE(got.interrupted_at.has_value());
  CHECK(*got.interrupted_at <= 1);
  CHECK_FALSE(got.final_id.empty());
}

TEST_CASE("query missing a later stage's feature skips that stage") {
  const DatabaseSnapshot snap = testutil::small_snapshot(49, 100, 8, 4);
  std::mt19937_64 rng(49);
  QueryFeatures q = full_query(rng, snap);
  q.pitch_mean_hz.reset();  // stage 2 of the default plan

  const auto subset = subset_of_all(snap);
  const CascadeResult got = run_cascade(SelectionPlan::default_plan(), subset, snap, q);
  CHECK(got.stage_trace[1].processed == 0);
  CHECK(got.stage_trace[1].survivors == got.stage_trace[0].survivors);

  QueryFeatures no_first;
  no_first.pitch_mean_hz = 200.0;
  try {
    run_cascade(SelectionPlan::default_plan(), subset, snap, no_first);
    FAIL("expected MissingQueryFeature");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingQueryFeature);
  }
}

TEST_CASE("records lacking a stage feature rank last, never error") {
  std::mt19937_64 rng(50);
  std::vector<PromptRecord> records;
  for (int i = 0; i < 10; ++i) {
    PromptRecord r = testutil::make_record(rng, testutil::padded_id(i), 8, 4);
    if (i < 5) r.speaking_rate.reset();
    records.push_back(std::move(r));
  }
  const DatabaseSnapshot snap = build_snapshot(records);
  SelectionPlan plan;
  plan.stages = {{StageKind::speech_rate, 1.0, std::nullopt}};
  QueryFeatures q;
  q.speaking_rate = 4.0;
  const CascadeResult got = run_cascade(plan, subset_of_all(snap), snap, q);
  const auto& ranked = got.stage_trace[0].survivors;
  // The five rate-less records occupy the last five ranks, id order.
  for (int i = 0; i < 5; ++i) {
    CHECK(ranked[5 + i] == testutil::padded_id(i));
  }
}

TEST_CASE("estimate_total_time frozen example and exactness") {
  SelectionPlan plan = SelectionPlan::default_plan();
  plan.stages[0].cost_per_sample_s = 1e-6;
  plan.stages[1].cost_per_sample_s = 2e-6;
  plan.stages[2].cost_per_sample_s = 4e-6;
  plan.stages[3].cost_per_sample_s = 8e-6;
  // 1*1000 + 2*200 + 4*40 + 8*8 microseconds.
  CHECK(estimate_total_time(plan, 1000) == doctest::Approx(1624e-6).epsilon(1e-12));

  SelectionPlan single;
  single.stages = {{StageKind::speaker, 1.0, 3e-6}};
  CHECK(estimate_total_time(single, 500) == doctest::Approx(1500e-6));

  SelectionPlan unmeasured = SelectionPlan::default_plan();
  unmeasured.stages[0].cost_per_sample_s = 1e-6;
  try {
    estimate_total_time(unmeasured, 100);
    FAIL("expected UnmeasuredStage");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnmeasuredStage);
  }
}

TEST_CASE("plan_for_budget returns the maximal affordable prefix") {
  SelectionPlan plan = SelectionPlan::default_plan();
  plan.stages[0].cost_per_sample_s = 1e-6;
  plan.stages[1].cost_per_sample_s = 2e-6;
  plan.stages[2].cost_per_sample_s = 4e-6;
  plan.stages[3].cost_per_sample_s = 8e-6;

  CHECK(plan_for_budget(plan, 1000, 1.0).stages.size() == 4);       // plenty
  CHECK(plan_for_budget(plan, 1000, 1500e-6).stages.size() == 2);   // 1400 <= b < 1560
  CHECK(plan_for_budget(plan, 1000, 1560e-6).stages.size() == 3);
  CHECK(plan_for_budget(plan, 1000, 0.5e-6).stages.size() == 1);    // floor
}

TEST_CASE("calibrate_costs measures every stage") {
  const DatabaseSnapshot snap = testutil::small_snapshot(51, 300, 16, 8);
  const SelectionPlan plan =
      calibrate_costs(SelectionPlan::default_plan(), snap, 500);
  for (const auto& s : plan.stages) {
    REQUIRE(s.cost_per_sample_s.has_value());
    CHECK(*s.cost_per_sample_s > 0.0);
  }
  CHECK_THROWS_AS(calibrate_costs(SelectionPlan::default_plan(), snap, 99), Error);

  // Run-to-run stability on an idle box; intentionally loose.
  const SelectionPlan again =
      calibrate_costs(SelectionPlan::default_plan(), snap, 500);
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    const double a = *plan.stages[i].cost_per_sample_s;
    const double b = *again.stages[i].cost_per_sample_s;
    CHECK(std::max(a, b) / std::min(a, b) < 3.0);
  }
}

TEST_CASE("plan validation and JSON round trip") {
  SelectionPlan plan = SelectionPlan::default_plan();
  plan.stages[1].cost_per_sample_s = 2.5e-7;
  const SelectionPlan parsed = SelectionPlan::from_json_text(plan.to_json_text());
  REQUIRE(parsed.stages.size() == 4);
  CHECK(parsed.stages[1].kind == StageKind::pitch);
  CHECK(parsed.stages[1].top_fraction == doctest::Approx(0.2));
  CHECK(parsed.stages[1].cost_per_sample_s.value() == doctest::Approx(2.5e-7));

  SelectionPlan bad;
  bad.stages = {{StageKind::pitch, 0.5, std::nullopt}};
  CHECK_THROWS_AS(bad.validate(), Error);  // first stage must be 100%

  CHECK_THROWS_AS(run_cascade(SelectionPlan::default_plan(), CandidateSubset{},
                              testutil::small_snapshot(1, 3), QueryFeatures{}),
                  Error);
}
