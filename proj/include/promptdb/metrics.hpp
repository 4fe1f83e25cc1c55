// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "promptdb/error.hpp"

namespace promptdb {

/// Language-probability distribution, as produced by a LID model.
/// Probabilities must sum to 1 within 1e-6; keys are ISO 639 codes.
struct ProbVector {
  std::map<std::string, double> entries;

  double probability_of(const std::string& lang) const {
    auto it = entries.find(lang);
    return it == entries.end() ? 0.0 : it->second;
  }

  void validate() const;
};

/// Cosine similarity of two equal-dimension nonzero vectors, computed in
/// double precision and clamped to [-1, 1]. For unit-norm inputs this equals
/// the dot product.
template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                         const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) {
    raise(ErrorCode::DimensionMismatch,
          "cosine: got " + std::to_string(a.size()) + " vs " +
              std::to_string(b.size()));
  }
  const auto ad = a.derived().template cast<double>();
  const auto bd = b.derived().template cast<double>();
  const double na = ad.norm();
  const double nb = bd.norm();
  if (na == 0.0 || nb == 0.0) {
    raise(ErrorCode::ZeroVector, "cosine similarity of a zero vector");
  }
  const double c = ad.dot(bd) / (na * nb);
  return std::min(1.0, std::max(-1.0, c));
}

/// Speaking-rate similarity |(test - ref) / ref|; lower is better.
double srs(double speed_test, double speed_ref);

/// Relative pitch distance |(test - ref) / ref|, mirroring the rate formula;
/// lower is better.
double pitch_similarity(double pitch_test_hz, double pitch_ref_hz);

/// Character error rate (S + D + I) / N from a minimum-cost character
/// alignment over normalized text. Normalization: lowercase, punctuation
/// stripped, whitespace runs collapsed to single spaces, ends trimmed.
/// Input is treated as UTF-8 and compared at codepoint granularity,
/// spaces included. May exceed 1.
double cer(const std::string& reference, const std::string& hypothesis);

/// True iff p[lang] strictly exceeds the threshold. A language absent from p
/// has probability zero.
bool passes_lid(const ProbVector& p, const std::string& lang, double threshold);

/// Normalization applied by cer(), exposed for tooling. Returns the
/// normalized codepoint sequence.
std::vector<char32_t> normalize_for_cer(const std::string& text);

/// Unit-cost Levenshtein distance over codepoint sequences.
std::size_t edit_distance(const std::vector<char32_t>& a,
                          const std::vector<char32_t>& b);

}  // namespace promptdb
