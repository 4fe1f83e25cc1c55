// SPDX-License-Identifier: Apache-2.0
#include "promptdb/types.hpp"

namespace promptdb {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::BadLanguageCode: return "BadLanguageCode";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NormOutOfRange: return "NormOutOfRange";
    case ErrorCode::BadField: return "BadField";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyDatabase: return "EmptyDatabase";
    case ErrorCode::HeaderMismatch: return "HeaderMismatch";
    case ErrorCode::TruncatedStore: return "TruncatedStore";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::NonpositiveReference: return "NonpositiveReference";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::BadThreshold: return "BadThreshold";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::NoModalities: return "NoModalities";
    case ErrorCode::NoOutputs: return "NoOutputs";
    case ErrorCode::UnweightedAgent: return "UnweightedAgent";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::NothingToDescribe: return "NothingToDescribe";
    case ErrorCode::UnknownLanguage: return "UnknownLanguage";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::OracleFailure: return "OracleFailure";
    case ErrorCode::NoProxyRecords: return "NoProxyRecords";
    case ErrorCode::BadInput: return "BadInput";
    case ErrorCode::BadQuery: return "BadQuery";
    case ErrorCode::NoFaceVectors: return "NoFaceVectors";
    case ErrorCode::EmptySubset: return "EmptySubset";
    case ErrorCode::MissingQueryFeature: return "MissingQueryFeature";
    case ErrorCode::UnmeasuredStage: return "UnmeasuredStage";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::BadRequest: return "BadRequest";
  }
  return "UnknownError";
}

const char* to_string(Gender g) noexcept {
  switch (g) {
    case Gender::male: return "male";
    case Gender::female: return "female";
    case Gender::unknown: return "unknown";
  }
  return "unknown";
}

const char* to_string(AgeGroup g) noexcept {
  switch (g) {
    case AgeGroup::child: return "child";
    case AgeGroup::teenager: return "teenager";
    case AgeGroup::young_adult: return "young_adult";
    case AgeGroup::middle_aged: return "middle_aged";
    case AgeGroup::elderly: return "elderly";
  }
  return "unknown";
}

Gender gender_from_string(std::string_view s) {
  if (s == "male") return Gender::male;
  if (s == "female") return Gender::female;
  if (s == "unknown") return Gender::unknown;
  raise(ErrorCode::BadField, "gender: unrecognized value '" + std::string(s) + "'");
}

AgeGroup age_group_from_string(std::string_view s) {
  if (s == "child") return AgeGroup::child;
  if (s == "teenager") return AgeGroup::teenager;
  if (s == "young_adult") return AgeGroup::young_adult;
  if (s == "middle_aged") return AgeGroup::middle_aged;
  if (s == "elderly") return AgeGroup::elderly;
  raise(ErrorCode::BadField, "age_group: unrecognized value '" + std::string(s) + "'");
}

AgeGroup age_group_of(int age_years) {
  if (age_years < 0 || age_years > 120) {
    raise(ErrorCode::OutOfRange,
          "age_years must be in [0, 120], got " + std::to_string(age_years));
  }
  if (age_years < 14) return AgeGroup::child;
  if (age_years <= 25) return AgeGroup::teenager;
  if (age_years <= 39) return AgeGroup::young_adult;
  if (age_years <= 54) return AgeGroup::middle_aged;
  return AgeGroup::elderly;  // 55 falls into the elderly bucket
}

bool is_language_code(std::string_view s) noexcept {
  if (s.size() < 2 || s.size() > 3) return false;
  for (char c : s) {
    if (c < 'a' || c > 'z') return false;
  }
  return true;
}

namespace {

bool vec_equal(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

}  // namespace

bool records_equal(const PromptRecord& a, const PromptRecord& b) {
  if (a.id != b.id || a.language != b.language || a.duration_s != b.duration_s ||
      a.transcript != b.transcript || a.description != b.description ||
      a.gender != b.gender || a.age_years != b.age_years ||
      a.age_group != b.age_group || a.emotion != b.emotion ||
      a.speaking_rate != b.speaking_rate || a.pitch_mean_hz != b.pitch_mean_hz ||
      a.desc_vec != b.desc_vec || a.candidate_for != b.candidate_for ||
      a.quality != b.quality) {
    return false;
  }
  if (!vec_equal(a.speaker_vec, b.speaker_vec)) return false;
  if (!vec_equal(a.emotion_vec, b.emotion_vec)) return false;
  if (a.face_vec.has_value() != b.face_vec.has_value()) return false;
  if (a.face_vec && !vec_equal(*a.face_vec, *b.face_vec)) return false;
  return true;
}

}  // namespace promptdb
