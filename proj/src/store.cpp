// SPDX-License-Identifier: Apache-2.0
#include "promptdb/store.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace promptdb {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[4] = {'M', '3', 'P', 'V'};
constexpr std::uint16_t kVersion = 1;

[[noreturn]] void missing(const std::string& name) {
  raise(ErrorCode::MissingField, name);
}

const json& require(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) missing(name);
  return *it;
}

std::string require_string(const json& j, const char* name) {
  const json& v = require(j, name);
  if (!v.is_string()) raise(ErrorCode::BadField, std::string(name) + ": expected string");
  return v.get<std::string>();
}

double require_number(const json& j, const char* name) {
  const json& v = require(j, name);
  if (!v.is_number()) raise(ErrorCode::BadField, std::string(name) + ": expected number");
  return v.get<double>();
}

std::optional<double> opt_number(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) raise(ErrorCode::BadField, std::string(name) + ": expected number");
  return it->get<double>();
}

std::optional<std::string> opt_string(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) raise(ErrorCode::BadField, std::string(name) + ": expected string");
  return it->get<std::string>();
}

Vec vec_from_json(const json& v, const char* name) {
  if (!v.is_array()) raise(ErrorCode::BadField, std::string(name) + ": expected array");
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (const auto& x : v) {
    if (!x.is_number()) raise(ErrorCode::BadField, std::string(name) + ": expected numbers");
    out[i++] = x.get<float>();
  }
  return out;
}

/// Enforces the unit-norm ingest contract: dimension must match, the norm
/// must land in [0.5, 2.0], and the vector is scaled to exact unit norm.
Vec checked_unit(Vec v, int want_dim, const char* field) {
  if (static_cast<int>(v.size()) != want_dim) {
    raise(ErrorCode::DimensionMismatch,
          std::string(field) + ": got " + std::to_string(v.size()) + ", want " +
              std::to_string(want_dim));
  }
  if (!v.allFinite()) raise(ErrorCode::BadField, std::string(field) + ": non-finite value");
  const double norm = v.cast<double>().norm();
  if (norm < 0.5 || norm > 2.0) {
    raise(ErrorCode::NormOutOfRange,
          std::string(field) + ": norm " + std::to_string(norm));
  }
  return (v.cast<double>() / norm).cast<float>();
}

void validate_scalars(const PromptRecord& r) {
  if (r.id.empty()) missing("id");
  if (!is_language_code(r.language)) {
    raise(ErrorCode::BadLanguageCode, "'" + r.language + "'");
  }
  if (!(r.duration_s > 0.0) || !std::isfinite(r.duration_s)) {
    raise(ErrorCode::BadField, "duration_s must be > 0");
  }
  if (r.age_years && (*r.age_years < 0 || *r.age_years > 120)) {
    raise(ErrorCode::BadField, "age_years must be in [0, 120]");
  }
  if (r.age_years && r.age_group && age_group_of(*r.age_years) != *r.age_group) {
    raise(ErrorCode::BadField,
          "age_group '" + std::string(to_string(*r.age_group)) +
              "' inconsistent with age_years " + std::to_string(*r.age_years));
  }
  if (r.speaking_rate && !(*r.speaking_rate > 0.0)) {
    raise(ErrorCode::BadField, "speaking_rate must be > 0");
  }
  if (r.pitch_mean_hz && !(*r.pitch_mean_hz > 0.0)) {
    raise(ErrorCode::BadField, "pitch_mean_hz must be > 0");
  }
  if (r.quality && !(*r.quality >= 1.0 && *r.quality <= 5.0)) {
    raise(ErrorCode::BadField, "quality must be in [1, 5]");
  }
  for (const auto& [term, w] : r.desc_vec) {
    if (term.empty()) raise(ErrorCode::BadField, "desc_vec: empty term");
    if (!(w >= 0.0f) || !std::isfinite(w)) {
      raise(ErrorCode::BadField, "desc_vec: weight for '" + term + "' must be >= 0");
    }
  }
  for (const auto& lang : r.candidate_for) {
    if (!is_language_code(lang)) {
      raise(ErrorCode::BadLanguageCode, "candidate_for entry '" + lang + "'");
    }
    if (lang == r.language) {
      raise(ErrorCode::BadField, "candidate_for contains the record's own language");
    }
  }
}

}  // namespace

PromptRecord parse_record(const std::string& line, const Dims& dims,
                          std::optional<RecordVectors> vectors) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    raise(ErrorCode::BadField, std::string("manifest line is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) raise(ErrorCode::BadField, "manifest line must be a JSON object");

  PromptRecord r;
  try {
    r.id = require_string(j, "id");
    r.language = require_string(j, "language");
    r.duration_s = require_number(j, "duration_s");
    r.transcript = require_string(j, "transcript");
    r.description = require_string(j, "description");
    r.gender = gender_from_string(require_string(j, "gender"));
    if (auto v = opt_number(j, "age_years")) {
      const double a = *v;
      if (a != std::floor(a)) raise(ErrorCode::BadField, "age_years must be an integer");
      r.age_years = static_cast<int>(a);
    }
    if (auto v = opt_string(j, "age_group")) r.age_group = age_group_from_string(*v);
    r.emotion = require_string(j, "emotion");
    r.speaking_rate = opt_number(j, "speaking_rate");
    r.pitch_mean_hz = opt_number(j, "pitch_mean_hz");
    if (auto it = j.find("desc_vec"); it != j.end() && !it->is_null()) {
      if (!it->is_object()) raise(ErrorCode::BadField, "desc_vec: expected object");
      for (const auto& [term, w] : it->items()) {
        if (!w.is_number()) raise(ErrorCode::BadField, "desc_vec: expected numeric weights");
        r.desc_vec[term] = w.get<float>();
      }
    } else {
      // Default: raw term frequencies of the description text.
      for (const auto& tok : tokenize_text(r.description)) r.desc_vec[tok] += 1.0f;
    }
    if (auto it = j.find("candidate_for"); it != j.end() && !it->is_null()) {
      if (!it->is_array()) raise(ErrorCode::BadField, "candidate_for: expected array");
      for (const auto& x : *it) {
        if (!x.is_string()) raise(ErrorCode::BadField, "candidate_for: expected strings");
        r.candidate_for.insert(x.get<std::string>());
      }
    }
    r.quality = opt_number(j, "quality");

    const bool has_inline = j.contains("speaker_vec") || j.contains("emotion_vec") ||
                            j.contains("face_vec");
    if (vectors) {
      if (has_inline) {
        raise(ErrorCode::BadField,
              "dense vectors present in both the manifest and the vector store");
      }
      r.speaker_vec = checked_unit(std::move(vectors->speaker), dims.speaker, "speaker_vec");
      r.emotion_vec = checked_unit(std::move(vectors->emotion), dims.emotion, "emotion_vec");
      if (vectors->face) {
        r.face_vec = checked_unit(std::move(*vectors->face), dims.face, "face_vec");
      }
    } else {
      r.speaker_vec =
          checked_unit(vec_from_json(require(j, "speaker_vec"), "speaker_vec"),
                       dims.speaker, "speaker_vec");
      r.emotion_vec =
          checked_unit(vec_from_json(require(j, "emotion_vec"), "emotion_vec"),
                       dims.emotion, "emotion_vec");
      if (auto it = j.find("face_vec"); it != j.end() && !it->is_null()) {
        r.face_vec = checked_unit(vec_from_json(*it, "face_vec"), dims.face, "face_vec");
      }
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::BadField, std::string("manifest field: ") + e.what());
  }

  validate_scalars(r);
  return r;
}

std::string record_to_manifest_line(const PromptRecord& r, bool inline_vectors) {
  ordered_json j;
  j["id"] = r.id;
  j["language"] = r.language;
  j["duration_s"] = r.duration_s;
  j["transcript"] = r.transcript;
  j["description"] = r.description;
  j["gender"] = to_string(r.gender);
  if (r.age_years) j["age_years"] = *r.age_years;
  if (r.age_group) j["age_group"] = to_string(*r.age_group);
  j["emotion"] = r.emotion;
  if (r.speaking_rate) j["speaking_rate"] = *r.speaking_rate;
  if (r.pitch_mean_hz) j["pitch_mean_hz"] = *r.pitch_mean_hz;
  ordered_json dv = ordered_json::object();
  for (const auto& [term, w] : r.desc_vec) dv[term] = w;
  j["desc_vec"] = std::move(dv);
  if (!r.candidate_for.empty()) {
    j["candidate_for"] = std::vector<std::string>(r.candidate_for.begin(),
                                                  r.candidate_for.end());
  }
  if (r.quality) j["quality"] = *r.quality;
  if (inline_vectors) {
    j["speaker_vec"] = std::vector<float>(r.speaker_vec.data(),
                                          r.speaker_vec.data() + r.speaker_vec.size());
    j["emotion_vec"] = std::vector<float>(r.emotion_vec.data(),
                                          r.emotion_vec.data() + r.emotion_vec.size());
    if (r.face_vec) {
      j["face_vec"] = std::vector<float>(r.face_vec->data(),
                                         r.face_vec->data() + r.face_vec->size());
    }
  }
  return j.dump();
}

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path)
      : bytes_(bytes), path_(path) {}

  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint8_t>(bytes_[pos_]) |
                      (static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_ + 1])) << 8);
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
      v = (v << 8) | static_cast<std::uint8_t>(bytes_[pos_ + i]);
    }
    pos_ += 4;
    return v;
  }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  float f32() { return std::bit_cast<float>(u32()); }

  Vec vec(int dim) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = f32();
    return v;
  }

  void expect_magic() {
    need(4);
    for (int i = 0; i < 4; ++i) {
      if (bytes_[pos_ + i] != kMagic[i]) {
        raise(ErrorCode::HeaderMismatch, path_ + ": bad magic");
      }
    }
    pos_ += 4;
  }

  bool exhausted() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      raise(ErrorCode::TruncatedStore, path_ + ": file ends early");
    }
  }

  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoFailure, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) raise(ErrorCode::IoFailure, "read failed for " + path);
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IoFailure, "cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) raise(ErrorCode::IoFailure, "write failed for " + path);
}

std::vector<std::string> manifest_lines(const std::string& path) {
  std::string text = read_file(path);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.emplace_back(line);
    start = end + 1;
  }
  return lines;
}

}  // namespace

DatabaseSnapshot open_store(const std::string& manifest_path,
                            const std::string& vectors_path) {
  const std::vector<std::string> lines = manifest_lines(manifest_path);
  const std::string bytes = read_file(vectors_path);
  Reader rd(bytes, vectors_path);

  rd.expect_magic();
  const std::uint16_t version = rd.u16();
  if (version != kVersion) {
    raise(ErrorCode::HeaderMismatch,
          vectors_path + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = rd.u32();
  Dims dims;
  dims.speaker = rd.u16();
  dims.emotion = rd.u16();
  dims.face = rd.u16();
  if (count != lines.size()) {
    raise(ErrorCode::HeaderMismatch,
          "manifest has " + std::to_string(lines.size()) + " records, vector store " +
              std::to_string(count));
  }

  std::vector<PromptRecord> records;
  records.reserve(count);
  for (const auto& line : lines) {
    RecordVectors v;
    v.speaker = rd.vec(dims.speaker);
    v.emotion = rd.vec(dims.emotion);
    const std::uint8_t face_flag = rd.u8();
    if (face_flag > 1) {
      raise(ErrorCode::TruncatedStore, vectors_path + ": bad face flag");
    }
    if (face_flag == 1) v.face = rd.vec(dims.face);
    records.push_back(parse_record(line, dims, std::move(v)));
  }
  if (!rd.exhausted()) {
    raise(ErrorCode::TruncatedStore,
          vectors_path + ": " + std::to_string(rd.remaining()) + " trailing bytes");
  }
  return build_snapshot(std::move(records));
}

void save_store(const DatabaseSnapshot& snapshot, const std::string& manifest_path,
                const std::string& vectors_path) {
  std::string manifest;
  for (const auto& r : snapshot.records) {
    manifest += record_to_manifest_line(r);
    manifest += '\n';
  }

  std::string bytes;
  bytes.append(kMagic, 4);
  put_u16(bytes, kVersion);
  put_u32(bytes, static_cast<std::uint32_t>(snapshot.records.size()));
  put_u16(bytes, static_cast<std::uint16_t>(snapshot.dims.speaker));
  put_u16(bytes, static_cast<std::uint16_t>(snapshot.dims.emotion));
  put_u16(bytes, static_cast<std::uint16_t>(snapshot.dims.face));
  for (const auto& r : snapshot.records) {
    for (Eigen::Index i = 0; i < r.speaker_vec.size(); ++i) put_f32(bytes, r.speaker_vec[i]);
    for (Eigen::Index i = 0; i < r.emotion_vec.size(); ++i) put_f32(bytes, r.emotion_vec[i]);
    bytes.push_back(r.face_vec ? '\x01' : '\x00');
    if (r.face_vec) {
      for (Eigen::Index i = 0; i < r.face_vec->size(); ++i) put_f32(bytes, (*r.face_vec)[i]);
    }
  }

  write_file(manifest_path, manifest);
  write_file(vectors_path, bytes);
}

DatabaseSnapshot ingest_inline_manifest(const std::string& manifest_path) {
  const std::vector<std::string> lines = manifest_lines(manifest_path);
  if (lines.empty()) raise(ErrorCode::EmptyDatabase, manifest_path + " has no records");

  // Dims come from the first record's inline vectors.
  json first;
  try {
    first = json::parse(lines.front());
  } catch (const json::exception& e) {
    raise(ErrorCode::BadField, std::string("manifest line is not valid JSON: ") + e.what());
  }
  Dims dims;
  if (first.contains("speaker_vec") && first["speaker_vec"].is_array()) {
    dims.speaker = static_cast<int>(first["speaker_vec"].size());
  }
  if (first.contains("emotion_vec") && first["emotion_vec"].is_array()) {
    dims.emotion = static_cast<int>(first["emotion_vec"].size());
  }
  for (const auto& line : lines) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      continue;
    }
    if (j.contains("face_vec") && j["face_vec"].is_array()) {
      dims.face = static_cast<int>(j["face_vec"].size());
      break;
    }
  }

  std::vector<PromptRecord> records;
  records.reserve(lines.size());
  for (const auto& line : lines) records.push_back(parse_record(line, dims));
  return build_snapshot(std::move(records));
}

}  // namespace promptdb
