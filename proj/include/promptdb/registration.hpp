// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "promptdb/snapshot.hpp"
#include "promptdb/types.hpp"

namespace promptdb {

enum class Provenance { text, face, audio };

const char* to_string(Provenance p) noexcept;
Provenance provenance_from_string(std::string_view s);

/// Exactly one of text_desc / face_vec / speaker_vec must be populated.
struct RegistrationRequest {
  std::optional<std::string> text_desc;
  std::optional<Vec> face_vec;
  std::optional<Vec> speaker_vec;
  int k = 32;             // subset size
  int face_stage1_k = 20; // stage-1 shortlist for the face path

  void validate() const;
  Provenance provenance() const;

  static RegistrationRequest from_json_text(const std::string& text);
  std::string to_json_text() const;
};

/// The registered shortlist the online cascade selects from. Ids are ordered
/// best first; scores are nonincreasing along that order.
struct CandidateSubset {
  std::vector<std::string> ids;
  Provenance provenance = Provenance::audio;
  std::map<std::string, double> scores;

  static CandidateSubset from_json_text(const std::string& text);
  std::string to_json_text() const;
};

/// Stand-in for zero-shot face-to-speech synthesis: maps a face embedding to
/// a unit vector in speaker space (the embedding of the synthesized sample).
class FaceVoiceOracle {
 public:
  virtual ~FaceVoiceOracle() = default;
  virtual Vec voice_vec(const Vec& face_vec) = 0;
};

/// Deterministic seeded random projection from face space to speaker space.
class ToyFaceVoiceOracle final : public FaceVoiceOracle {
 public:
  ToyFaceVoiceOracle(int face_dim, int speaker_dim, std::uint64_t seed = 20250808);
  Vec voice_vec(const Vec& face_vec) override;

 private:
  Eigen::MatrixXf projection_;  // speaker_dim x face_dim
};

/// TF-IDF cosine over the stored description vectors; top-k, ties by id.
/// Raises BadQuery when no query term overlaps the vocabulary.
CandidateSubset register_text(const DatabaseSnapshot& snapshot,
                              const std::string& text_desc, int k);

/// Two-stage face path: shortlist the face_stage1_k nearest faces, then
/// rerank that shortlist by speaker-space similarity to the oracle's voice
/// vector and keep the top k.
CandidateSubset register_face(const DatabaseSnapshot& snapshot, const Vec& face_vec,
                              int face_stage1_k, int k, FaceVoiceOracle& oracle);

/// Top-k by speaker-embedding cosine; k is clamped to the snapshot size.
CandidateSubset register_audio(const DatabaseSnapshot& snapshot,
                               const Vec& speaker_vec, int k);

/// Dispatch on the request's populated modality. The oracle is only needed
/// for the face path.
CandidateSubset register_request(const DatabaseSnapshot& snapshot,
                                 const RegistrationRequest& request,
                                 FaceVoiceOracle* oracle = nullptr);

}  // namespace promptdb
