// SPDX-License-Identifier: Apache-2.0
#include "promptdb/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "promptdb/metrics.hpp"
#include "promptdb/registration.hpp"

namespace promptdb {

void SyntheticCorpusSpec::validate() const {
  if (n_records == 0 || n_speakers == 0 || n_queries == 0) {
    raise(ErrorCode::BadSpec, "record, speaker and query counts must be > 0");
  }
  if (n_speakers > n_records) {
    raise(ErrorCode::BadSpec, "more speakers than records");
  }
  if (dims.speaker < 2 || dims.emotion < 2 || dims.face < 2) {
    raise(ErrorCode::BadSpec, "embedding dimensions must be >= 2");
  }
  if (n_emotions < 1) raise(ErrorCode::BadSpec, "need at least one emotion class");
  if (!(rate_min > 0.0 && rate_max > rate_min)) {
    raise(ErrorCode::BadSpec, "bad rate range");
  }
  if (!(pitch_min > 0.0 && pitch_max > pitch_min)) {
    raise(ErrorCode::BadSpec, "bad pitch range");
  }
  if (intra_sigma < 0.0 || record_jitter < 0.0 || query_vec_noise < 0.0 ||
      query_jitter < 0.0 || record_jitter >= 1.0 || query_jitter >= 1.0) {
    raise(ErrorCode::BadSpec, "noise magnitudes out of range");
  }
}

namespace {

const char* kEmotionNames[] = {"neutral", "joy",  "anger",    "sadness",
                               "fear",    "calm", "surprise", "disgust"};
const char* kLanguages[] = {"en", "zh", "es", "fr", "de", "it", "pt", "pl"};

Vec random_unit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = gauss(rng);
  const double norm = v.cast<double>().norm();
  return (v.cast<double>() / norm).cast<float>();
}

// Adds a random direction of length sigma to a unit center, renormalized;
// sigma is the perturbation norm, independent of dimension.
Vec perturbed_unit(std::mt19937_64& rng, const Vec& center, double sigma) {
  if (sigma <= 0.0) return center;
  Vec v = center + static_cast<float>(sigma) * random_unit(rng, static_cast<int>(center.size()));
  const double norm = v.cast<double>().norm();
  return (v.cast<double>() / norm).cast<float>();
}

}  // namespace

GeneratedCorpus generate_corpus(const SyntheticCorpusSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  const int n_emotions = std::min<int>(spec.n_emotions, std::size(kEmotionNames));

  struct Speaker {
    Vec center;
    Vec face_center;
    double base_rate;
    double base_pitch;
    Gender gender;
    int age;
  };
  std::vector<Speaker> speakers(spec.n_speakers);
  for (auto& s : speakers) {
    s.center = random_unit(rng, spec.dims.speaker);
    s.face_center = random_unit(rng, spec.dims.face);
    s.base_rate = spec.rate_min + (spec.rate_max - spec.rate_min) * uni(rng);
    s.base_pitch = spec.pitch_min + (spec.pitch_max - spec.pitch_min) * uni(rng);
    s.gender = uni(rng) < 0.5 ? Gender::male : Gender::female;
    s.age = 16 + static_cast<int>(uni(rng) * 60.0);
  }

  std::vector<Vec> emotion_centers;
  emotion_centers.reserve(n_emotions);
  for (int e = 0; e < n_emotions; ++e) {
    emotion_centers.push_back(random_unit(rng, spec.dims.emotion));
  }

  std::vector<PromptRecord> records;
  records.reserve(spec.n_records);
  for (std::size_t i = 0; i < spec.n_records; ++i) {
    const std::size_t s_idx = i % spec.n_speakers;
    const Speaker& s = speakers[s_idx];
    PromptRecord r;
    char id[16];
    std::snprintf(id, sizeof(id), "r%06zu", i);
    r.id = id;
    r.language = kLanguages[s_idx % std::size(kLanguages)];
    r.duration_s = 2.0 + 8.0 * uni(rng);
    r.transcript = "synthetic sample " + std::to_string(i);
    r.gender = s.gender;
    r.age_years = std::clamp(s.age + static_cast<int>(uni(rng) * 5.0) - 2, 0, 120);
    r.age_group = age_group_of(*r.age_years);
    const int e_idx = static_cast<int>(uni(rng) * n_emotions) % n_emotions;
    r.emotion = kEmotionNames[e_idx];
    r.speaking_rate = s.base_rate * (1.0 + spec.record_jitter * (2.0 * uni(rng) - 1.0));
    r.pitch_mean_hz = s.base_pitch * (1.0 + spec.record_jitter * (2.0 * uni(rng) - 1.0));
    r.speaker_vec = perturbed_unit(rng, s.center, spec.intra_sigma);
    r.emotion_vec = perturbed_unit(rng, emotion_centers[e_idx], spec.intra_sigma);
    r.face_vec = perturbed_unit(rng, s.face_center, spec.intra_sigma);
    r.quality = 2.5 + 2.5 * uni(rng);

    const char* pitch_word = *r.pitch_mean_hz < 150.0   ? "low"
                             : *r.pitch_mean_hz < 230.0 ? "medium"
                                                        : "high";
    const char* pace_word = *r.speaking_rate < 3.5   ? "slow"
                            : *r.speaking_rate < 5.0 ? "moderate"
                                                     : "swift";
    r.description = std::string(to_string(r.gender)) + " " +
                    to_string(*r.age_group) + " voice " + pitch_word + " pace " +
                    pace_word + " " + r.emotion;
    for (const auto& tok : tokenize_text(r.description)) r.desc_vec[tok] += 1.0f;
    records.push_back(std::move(r));
  }

  GeneratedCorpus out;
  out.snapshot = build_snapshot(std::move(records));

  std::uniform_int_distribution<std::size_t> pick_record(0, spec.n_records - 1);
  out.queries.reserve(spec.n_queries);
  for (std::size_t q = 0; q < spec.n_queries; ++q) {
    // One query per speaker, cycling, drawn from that speaker's records.
    const std::size_t s_idx = q % spec.n_speakers;
    std::size_t rec_idx = pick_record(rng);
    rec_idx = rec_idx - (rec_idx % spec.n_speakers) + s_idx;
    if (rec_idx >= spec.n_records) rec_idx = s_idx;
    const PromptRecord& src = out.snapshot.records[rec_idx];

    EvalQuery eq;
    eq.source_id = src.id;
    eq.clean.speaking_rate = src.speaking_rate;
    eq.clean.pitch_mean_hz = src.pitch_mean_hz;
    eq.clean.speaker_vec = src.speaker_vec;
    eq.clean.emotion_vec = src.emotion_vec;
    eq.noisy.speaking_rate =
        *src.speaking_rate * (1.0 + spec.query_jitter * (2.0 * uni(rng) - 1.0));
    eq.noisy.pitch_mean_hz =
        *src.pitch_mean_hz * (1.0 + spec.query_jitter * (2.0 * uni(rng) - 1.0));
    eq.noisy.speaker_vec = perturbed_unit(rng, src.speaker_vec, spec.query_vec_noise);
    eq.noisy.emotion_vec = perturbed_unit(rng, src.emotion_vec, spec.query_vec_noise);
    out.queries.push_back(std::move(eq));
  }
  return out;
}

const char* to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::original: return "original";
    case Strategy::random_pick: return "random";
    case Strategy::proposed: return "proposed";
  }
  return "original";
}

namespace {

struct SimilarityTriple {
  double ss = 0.0;
  double es = 0.0;
  double srs_val = 0.0;
};

SimilarityTriple score_against_clean(const QueryFeatures& chosen,
                                     const QueryFeatures& clean) {
  SimilarityTriple t;
  t.ss = cosine_similarity(*chosen.speaker_vec, *clean.speaker_vec);
  t.es = cosine_similarity(*chosen.emotion_vec, *clean.emotion_vec);
  t.srs_val = srs(*chosen.speaking_rate, *clean.speaking_rate);
  return t;
}

QueryFeatures features_of_record(const PromptRecord& r) {
  QueryFeatures f;
  f.speaking_rate = r.speaking_rate;
  f.pitch_mean_hz = r.pitch_mean_hz;
  f.speaker_vec = r.speaker_vec;
  f.emotion_vec = r.emotion_vec;
  return f;
}

}  // namespace

EvalReport run_eval(const DatabaseSnapshot& snapshot,
                    const std::vector<EvalQuery>& queries, const SelectionPlan& plan,
                    const std::vector<Strategy>& strategies, int subset_k,
                    std::uint64_t random_seed) {
  if (queries.empty()) raise(ErrorCode::BadInput, "no queries");
  plan.validate();

  EvalReport report;
  for (Strategy strategy : strategies) {
    std::mt19937_64 rng(random_seed);
    double sum_ss = 0.0, sum_es = 0.0, sum_srs = 0.0;
    for (const auto& q : queries) {
      QueryFeatures chosen;
      switch (strategy) {
        case Strategy::original:
          chosen = q.noisy;
          break;
        case Strategy::random_pick: {
          const CandidateSubset subset =
              register_audio(snapshot, *q.noisy.speaker_vec, subset_k);
          std::uniform_int_distribution<std::size_t> pick(0, subset.ids.size() - 1);
          chosen = features_of_record(snapshot.at(subset.ids[pick(rng)]));
          break;
        }
        case Strategy::proposed: {
          const CandidateSubset subset =
              register_audio(snapshot, *q.noisy.speaker_vec, subset_k);
          const CascadeResult r = run_cascade(plan, subset, snapshot, q.noisy);
          chosen = features_of_record(snapshot.at(r.final_id));
          break;
        }
      }
      const SimilarityTriple t = score_against_clean(chosen, q.clean);
      sum_ss += t.ss;
      sum_es += t.es;
      sum_srs += t.srs_val;
    }
    const double n = static_cast<double>(queries.size());
    report.rows.push_back({strategy, sum_ss / n, sum_es / n, sum_srs / n});
  }
  return report;
}

std::vector<SweepRow> sweep_interruption(const DatabaseSnapshot& snapshot,
                                         const std::vector<EvalQuery>& queries,
                                         const SelectionPlan& plan,
                                         const std::vector<std::size_t>& points,
                                         int subset_k) {
  if (queries.empty()) raise(ErrorCode::BadInput, "no queries");
  plan.validate();

  std::vector<SweepRow> rows;
  for (std::size_t point : points) {
    if (point < 1 || point > plan.stages.size()) {
      raise(ErrorCode::BadInput, "interruption point outside the plan");
    }
    SelectionPlan truncated;
    truncated.stages.assign(plan.stages.begin(), plan.stages.begin() + point);

    double sum_ss = 0.0, sum_es = 0.0, sum_srs = 0.0;
    for (const auto& q : queries) {
      const CandidateSubset subset =
          register_audio(snapshot, *q.noisy.speaker_vec, subset_k);
      const CascadeResult r = run_cascade(truncated, subset, snapshot, q.noisy);
      const SimilarityTriple t =
          score_against_clean(features_of_record(snapshot.at(r.final_id)), q.clean);
      sum_ss += t.ss;
      sum_es += t.es;
      sum_srs += t.srs_val;
    }
    const double n = static_cast<double>(queries.size());
    rows.push_back({point, sum_ss / n, sum_es / n, sum_srs / n});
  }
  return rows;
}

std::string EvalReport::to_table() const {
  std::ostringstream ss;
  char line[128];
  ss << "strategy    mean_SS   mean_ES   mean_SRS\n";
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-10s %8.4f  %8.4f  %9.4f\n",
                  to_string(r.strategy), r.mean_ss, r.mean_es, r.mean_srs);
    ss << line;
  }
  if (!sweep.empty()) {
    ss << "\ninterrupt_after  mean_SS   mean_ES   mean_SRS\n";
    for (const auto& r : sweep) {
      std::snprintf(line, sizeof(line), "%-15zu %8.4f  %8.4f  %9.4f\n",
                    r.stages_used, r.mean_ss, r.mean_es, r.mean_srs);
      ss << line;
    }
  }
  return ss.str();
}

std::string EvalReport::to_csv() const {
  std::ostringstream ss;
  ss << "kind,strategy_or_point,mean_ss,mean_es,mean_srs\n";
  ss.precision(10);
  for (const auto& r : rows) {
    ss << "strategy," << to_string(r.strategy) << ',' << r.mean_ss << ',' << r.mean_es
       << ',' << r.mean_srs << '\n';
  }
  for (const auto& r : sweep) {
    ss << "sweep," << r.stages_used << ',' << r.mean_ss << ',' << r.mean_es << ','
       << r.mean_srs << '\n';
  }
  return ss.str();
}

}  // namespace promptdb
