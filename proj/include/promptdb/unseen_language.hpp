// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "promptdb/language_tree.hpp"
#include "promptdb/metrics.hpp"
#include "promptdb/snapshot.hpp"

namespace promptdb {

/// Thresholds a proxy-language record must clear to become a candidate
/// prompt for an unseen language. The defaults are configuration, not ground
/// truth; only the LID threshold is fixed by the retention rule.
struct CandidateCriteria {
  double lid_threshold = 0.95;
  double max_cer = 0.05;
  double min_ss = 0.80;
  double min_es = 0.50;
  double max_srs = 0.30;

  void validate() const;
  static CandidateCriteria from_json_text(const std::string& text);
  std::string to_json_text() const;
};

/// Measured properties of cross-lingual synthesis from a reference prompt:
/// the LID probability vector plus speaker/emotion/rate similarity and CER
/// of the synthesized speech.
struct SynthesisMeasurement {
  ProbVector lang_probs;
  double ss = 0.0;
  double es = 0.0;
  double srs = 0.0;
  double cer = 0.0;
};

/// Collapses synthesis, LID and ASR into one measurement oracle. Real models
/// live behind this interface; tests and the CLI use deterministic doubles.
class SynthesisOracle {
 public:
  virtual ~SynthesisOracle() = default;
  virtual SynthesisMeasurement synthesize(const std::string& target_text,
                                          const PromptRecord& reference) = 0;
};

struct CandidateReport {
  bool pass = false;
  SynthesisMeasurement metrics;
};

/// Pass iff the LID probability of the target strictly exceeds the threshold
/// AND cer <= max_cer AND ss >= min_ss AND es >= min_es AND srs <= max_srs.
CandidateReport evaluate_candidate(const PromptRecord& record,
                                   const std::string& target_text,
                                   const std::string& target_language,
                                   SynthesisOracle& oracle,
                                   const CandidateCriteria& criteria);

struct CandidateAnnotation {
  std::string proxy_language;
  std::set<std::string> passing_ids;
  DatabaseSnapshot snapshot;  // updated copy; input snapshot is untouched
};

/// Chooses the proxy language by family-tree distance over the snapshot's
/// languages (the target itself excluded), evaluates every proxy-language
/// record against every text, and tags records that pass on all texts with
/// the target language in candidate_for. Idempotent.
CandidateAnnotation annotate_candidates(const DatabaseSnapshot& snapshot,
                                        const std::string& target_language,
                                        const std::vector<std::string>& texts,
                                        const LanguageTree& tree,
                                        SynthesisOracle& oracle,
                                        const CandidateCriteria& criteria);

/// Procedural synthesizer stand-in: measurements derive deterministically
/// from (text, record id, seed), with the rate term blended from the
/// reference record's speaking rate.
class ToySynthesisOracle final : public SynthesisOracle {
 public:
  explicit ToySynthesisOracle(std::string target_language, std::uint64_t seed = 0);
  SynthesisMeasurement synthesize(const std::string& target_text,
                                  const PromptRecord& reference) override;

 private:
  std::string target_language_;
  std::uint64_t seed_;
};

/// Fixture oracle: one measurement per record id, any text. Raises
/// OracleFailure for unknown ids.
class ScriptedSynthesisOracle final : public SynthesisOracle {
 public:
  explicit ScriptedSynthesisOracle(std::map<std::string, SynthesisMeasurement> by_id)
      : by_id_(std::move(by_id)) {}

  /// Loads a fixture file: JSON object record_id -> {lang_probs, ss, es,
  /// srs, cer}.
  static ScriptedSynthesisOracle load(const std::string& path);

  SynthesisMeasurement synthesize(const std::string& target_text,
                                  const PromptRecord& reference) override;

 private:
  std::map<std::string, SynthesisMeasurement> by_id_;
};

}  // namespace promptdb
