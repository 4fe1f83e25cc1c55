// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "promptdb/error.hpp"

namespace promptdb {

/// Dense embeddings are stored as 32-bit floats, unit-normalized at ingest so
/// cosine similarity reduces to a dot product.
using Vec = Eigen::VectorXf;

/// Sparse nonnegative term->weight vector over a corpus-dependent vocabulary.
using SparseVec = std::map<std::string, float>;

enum class Gender { male, female, unknown };
enum class AgeGroup { child, teenager, young_adult, middle_aged, elderly };

const char* to_string(Gender g) noexcept;
const char* to_string(AgeGroup g) noexcept;
Gender gender_from_string(std::string_view s);
AgeGroup age_group_from_string(std::string_view s);

/// Age-group taxonomy: child <14, teenager 14-25, young_adult 26-39,
/// middle_aged 40-54, elderly 55 and up. Total over 0..120.
AgeGroup age_group_of(int age_years);

/// Accepts two- or three-letter lowercase ISO 639 codes.
bool is_language_code(std::string_view s) noexcept;

struct Dims {
  int speaker = 0;
  int emotion = 0;
  int face = 0;

  bool operator==(const Dims&) const = default;
};

/// One annotated speech sample: the unit everything else queries over.
struct PromptRecord {
  std::string id;
  std::string language;  // lowercase ISO 639 code
  double duration_s = 0.0;
  std::string transcript;   // may be empty
  std::string description;  // natural-language voice description
  Gender gender = Gender::unknown;
  std::optional<int> age_years;  // 0..120
  std::optional<AgeGroup> age_group;
  std::string emotion;  // categorical label, may be empty
  std::optional<double> speaking_rate;  // syllables/second, > 0
  std::optional<double> pitch_mean_hz;  // > 0
  Vec speaker_vec;                      // unit norm, dim D_s
  Vec emotion_vec;                      // unit norm, dim D_e
  std::optional<Vec> face_vec;          // unit norm, dim D_f
  SparseVec desc_vec;                   // nonnegative term weights
  std::set<std::string> candidate_for;  // never contains `language`
  std::optional<double> quality;        // [1, 5]
};

bool records_equal(const PromptRecord& a, const PromptRecord& b);

/// Time-varying query-side features for online selection. At least one field
/// must be present.
struct QueryFeatures {
  std::optional<double> speaking_rate;
  std::optional<double> pitch_mean_hz;
  std::optional<Vec> speaker_vec;
  std::optional<Vec> emotion_vec;

  bool empty() const {
    return !speaking_rate && !pitch_mean_hz && !speaker_vec && !emotion_vec;
  }
};

}  // namespace promptdb
