// SPDX-License-Identifier: Apache-2.0
#include "promptdb/registration.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "promptdb/metrics.hpp"

namespace promptdb {

using nlohmann::json;

const char* to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::text: return "text";
    case Provenance::face: return "face";
    case Provenance::audio: return "audio";
  }
  return "audio";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "text") return Provenance::text;
  if (s == "face") return Provenance::face;
  if (s == "audio") return Provenance::audio;
  raise(ErrorCode::BadField, "provenance: unrecognized value '" + std::string(s) + "'");
}

void RegistrationRequest::validate() const {
  const int modalities = (text_desc ? 1 : 0) + (face_vec ? 1 : 0) + (speaker_vec ? 1 : 0);
  if (modalities != 1) {
    raise(ErrorCode::BadRequest,
          "exactly one of text_desc, face_vec, speaker_vec must be set");
  }
  if (k < 1) raise(ErrorCode::BadRequest, "k must be >= 1");
  if (face_vec && face_stage1_k < k) {
    raise(ErrorCode::BadRequest, "face_stage1_k must be >= k");
  }
}

Provenance RegistrationRequest::provenance() const {
  if (text_desc) return Provenance::text;
  if (face_vec) return Provenance::face;
  return Provenance::audio;
}

namespace {

Vec vec_from_json(const json& v, const char* name) {
  if (!v.is_array()) raise(ErrorCode::BadRequest, std::string(name) + ": expected array");
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (const auto& x : v) {
    if (!x.is_number()) raise(ErrorCode::BadRequest, std::string(name) + ": expected numbers");
    out[i++] = x.get<float>();
  }
  return out;
}

std::vector<float> vec_to_std(const Vec& v) {
  return std::vector<float>(v.data(), v.data() + v.size());
}

}  // namespace

RegistrationRequest RegistrationRequest::from_json_text(const std::string& text) {
  RegistrationRequest r;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) raise(ErrorCode::BadRequest, "registration request must be an object");
    if (j.contains("text_desc")) r.text_desc = j["text_desc"].get<std::string>();
    if (j.contains("face_vec")) r.face_vec = vec_from_json(j["face_vec"], "face_vec");
    if (j.contains("speaker_vec")) r.speaker_vec = vec_from_json(j["speaker_vec"], "speaker_vec");
    if (j.contains("k")) r.k = j["k"].get<int>();
    if (j.contains("face_stage1_k")) r.face_stage1_k = j["face_stage1_k"].get<int>();
  } catch (const json::exception& e) {
    raise(ErrorCode::BadRequest, std::string("registration request: ") + e.what());
  }
  r.validate();
  return r;
}

std::string RegistrationRequest::to_json_text() const {
  json j;
  if (text_desc) j["text_desc"] = *text_desc;
  if (face_vec) j["face_vec"] = vec_to_std(*face_vec);
  if (speaker_vec) j["speaker_vec"] = vec_to_std(*speaker_vec);
  j["k"] = k;
  if (face_vec) j["face_stage1_k"] = face_stage1_k;
  return j.dump();
}

CandidateSubset CandidateSubset::from_json_text(const std::string& text) {
  CandidateSubset s;
  try {
    const json j = json::parse(text);
    s.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    for (const auto& id : j.at("ids")) s.ids.push_back(id.get<std::string>());
    if (j.contains("scores")) {
      for (const auto& [id, score] : j["scores"].items()) {
        s.scores[id] = score.get<double>();
      }
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::BadInput, std::string("candidate subset: ") + e.what());
  }
  return s;
}

std::string CandidateSubset::to_json_text() const {
  json j;
  j["provenance"] = to_string(provenance);
  j["ids"] = ids;
  json sc = json::object();
  for (const auto& [id, score] : scores) sc[id] = score;
  j["scores"] = std::move(sc);
  return j.dump();
}

ToyFaceVoiceOracle::ToyFaceVoiceOracle(int face_dim, int speaker_dim, std::uint64_t seed) {
  if (face_dim < 1 || speaker_dim < 1) {
    raise(ErrorCode::BadInput, "face and speaker dimensions must be >= 1");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  projection_.resize(speaker_dim, face_dim);
  for (int r = 0; r < speaker_dim; ++r) {
    for (int c = 0; c < face_dim; ++c) projection_(r, c) = dist(rng);
  }
}

Vec ToyFaceVoiceOracle::voice_vec(const Vec& face_vec) {
  if (face_vec.size() != projection_.cols()) {
    raise(ErrorCode::DimensionMismatch,
          "face_vec: got " + std::to_string(face_vec.size()) + ", want " +
              std::to_string(projection_.cols()));
  }
  Vec v = projection_ * face_vec;
  const double norm = v.cast<double>().norm();
  if (norm == 0.0) raise(ErrorCode::OracleFailure, "projected voice vector is zero");
  return (v.cast<double>() / norm).cast<float>();
}

namespace {

struct Scored {
  double score;
  std::size_t index;
};

/// Sorts score-descending with id ascending as the tie rule, then keeps k.
std::vector<Scored> top_k(std::vector<Scored> scored, const DatabaseSnapshot& snapshot,
                          std::size_t k) {
  std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return snapshot.records[a.index].id < snapshot.records[b.index].id;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

CandidateSubset subset_from(std::vector<Scored> ranked, const DatabaseSnapshot& snapshot,
                            Provenance provenance) {
  CandidateSubset out;
  out.provenance = provenance;
  out.ids.reserve(ranked.size());
  for (const auto& s : ranked) {
    const std::string& id = snapshot.records[s.index].id;
    out.ids.push_back(id);
    out.scores.emplace(id, s.score);
  }
  return out;
}

}  // namespace

CandidateSubset register_text(const DatabaseSnapshot& snapshot,
                              const std::string& text_desc, int k) {
  if (snapshot.records.empty()) raise(ErrorCode::EmptyDatabase, "empty snapshot");
  if (k < 1) raise(ErrorCode::BadRequest, "k must be >= 1");

  const std::vector<std::string> tokens = tokenize_text(text_desc);
  if (tokens.empty()) raise(ErrorCode::BadQuery, "description has no tokens");

  // Query TF over vocabulary terms only, then TF-IDF weighting on both sides.
  std::map<std::string, double> query_tf;
  for (const auto& tok : tokens) {
    if (snapshot.vocab.count(tok)) query_tf[tok] += 1.0;
  }
  if (query_tf.empty()) {
    raise(ErrorCode::BadQuery, "no query term overlaps the snapshot vocabulary");
  }

  std::map<std::string, double> query_w;
  double query_sq = 0.0;
  for (const auto& [term, tf] : query_tf) {
    const double w = tf * snapshot.idf.at(term);
    query_w.emplace(term, w);
    query_sq += w * w;
  }
  const double query_norm = std::sqrt(query_sq);

  std::vector<Scored> scored;
  scored.reserve(snapshot.records.size());
  for (std::size_t i = 0; i < snapshot.records.size(); ++i) {
    const PromptRecord& r = snapshot.records[i];
    const double rnorm = snapshot.desc_tfidf_norm[i];
    double dot = 0.0;
    if (rnorm > 0.0) {
      for (const auto& [term, qw] : query_w) {
        auto it = r.desc_vec.find(term);
        if (it != r.desc_vec.end()) {
          dot += qw * static_cast<double>(it->second) * snapshot.idf.at(term);
        }
      }
    }
    const double score = rnorm > 0.0 ? dot / (query_norm * rnorm) : 0.0;
    scored.push_back({score, i});
  }
  return subset_from(top_k(std::move(scored), snapshot, static_cast<std::size_t>(k)),
                     snapshot, Provenance::text);
}

CandidateSubset register_face(const DatabaseSnapshot& snapshot, const Vec& face_vec,
                              int face_stage1_k, int k, FaceVoiceOracle& oracle) {
  if (snapshot.records.empty()) raise(ErrorCode::EmptyDatabase, "empty snapshot");
  if (k < 1 || face_stage1_k < k) {
    raise(ErrorCode::BadRequest, "need face_stage1_k >= k >= 1");
  }

  std::vector<Scored> stage1;
  for (std::size_t i = 0; i < snapshot.records.size(); ++i) {
    const auto& face = snapshot.records[i].face_vec;
    if (!face) continue;
    stage1.push_back({cosine_similarity(face_vec, *face), i});
  }
  if (stage1.empty()) raise(ErrorCode::NoFaceVectors, "no record has a face vector");
  stage1 = top_k(std::move(stage1), snapshot, static_cast<std::size_t>(face_stage1_k));

  Vec voice;
  try {
    voice = oracle.voice_vec(face_vec);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    raise(ErrorCode::OracleFailure, e.what());
  }
  if (voice.size() != snapshot.records.front().speaker_vec.size()) {
    raise(ErrorCode::OracleFailure, "oracle voice vector has the wrong dimension");
  }

  std::vector<Scored> stage2;
  stage2.reserve(stage1.size());
  for (const auto& s : stage1) {
    stage2.push_back({cosine_similarity(voice, snapshot.records[s.index].speaker_vec),
                      s.index});
  }
  return subset_from(top_k(std::move(stage2), snapshot, static_cast<std::size_t>(k)),
                     snapshot, Provenance::face);
}

CandidateSubset register_audio(const DatabaseSnapshot& snapshot, const Vec& speaker_vec,
                               int k) {
  if (snapshot.records.empty()) raise(ErrorCode::EmptyDatabase, "empty snapshot");
  if (k < 1) raise(ErrorCode::BadRequest, "k must be >= 1");

  std::vector<Scored> scored;
  scored.reserve(snapshot.records.size());
  for (std::size_t i = 0; i < snapshot.records.size(); ++i) {
    scored.push_back({cosine_similarity(speaker_vec, snapshot.records[i].speaker_vec), i});
  }
  return subset_from(top_k(std::move(scored), snapshot, static_cast<std::size_t>(k)),
                     snapshot, Provenance::audio);
}

CandidateSubset register_request(const DatabaseSnapshot& snapshot,
                                 const RegistrationRequest& request,
                                 FaceVoiceOracle* oracle) {
  request.validate();
  switch (request.provenance()) {
    case Provenance::text:
      return register_text(snapshot, *request.text_desc, request.k);
    case Provenance::face: {
      if (oracle == nullptr) {
        raise(ErrorCode::OracleFailure, "face registration needs a face-voice oracle");
      }
      return register_face(snapshot, *request.face_vec, request.face_stage1_k,
                           request.k, *oracle);
    }
    case Provenance::audio:
      return register_audio(snapshot, *request.speaker_vec, request.k);
  }
  raise(ErrorCode::BadRequest, "unreachable");
}

}  // namespace promptdb
