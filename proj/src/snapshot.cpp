// SPDX-License-Identifier: Apache-2.0
#include "promptdb/snapshot.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cctype>

namespace promptdb {

std::optional<std::size_t> DatabaseSnapshot::index_of(std::string_view id) const {
  if (!id_index.empty()) {
    auto it = id_index.find(id);
    if (it == id_index.end()) return std::nullopt;
    return it->second;
  }
  // Hand-assembled snapshots may lack the hash index; records stay sorted.
  auto it = std::lower_bound(
      records.begin(), records.end(), id,
      [](const PromptRecord& r, std::string_view key) { return r.id < key; });
  if (it == records.end() || it->id != id) return std::nullopt;
  return static_cast<std::size_t>(it - records.begin());
}

const PromptRecord& DatabaseSnapshot::at(std::string_view id) const {
  auto idx = index_of(id);
  if (!idx) raise(ErrorCode::BadInput, "no record with id '" + std::string(id) + "'");
  return records[*idx];
}

namespace {

std::optional<TercileCuts> tercile_cuts(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return TercileCuts{values[n / 3], values[std::min((2 * n) / 3, n - 1)]};
}

}  // namespace

DatabaseSnapshot build_snapshot(std::vector<PromptRecord> records) {
  if (records.empty()) raise(ErrorCode::EmptyDatabase, "no records");

  std::sort(records.begin(), records.end(),
            [](const PromptRecord& a, const PromptRecord& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].id == records[i - 1].id) {
      raise(ErrorCode::DuplicateId, records[i].id);
    }
  }

  DatabaseSnapshot snap;
  snap.dims.speaker = static_cast<int>(records.front().speaker_vec.size());
  snap.dims.emotion = static_cast<int>(records.front().emotion_vec.size());
  snap.dims.face = 0;
  for (const auto& r : records) {
    if (r.face_vec) {
      snap.dims.face = static_cast<int>(r.face_vec->size());
      break;
    }
  }
  for (const auto& r : records) {
    if (static_cast<int>(r.speaker_vec.size()) != snap.dims.speaker) {
      raise(ErrorCode::DimensionMismatch, "speaker_vec of record '" + r.id + "'");
    }
    if (static_cast<int>(r.emotion_vec.size()) != snap.dims.emotion) {
      raise(ErrorCode::DimensionMismatch, "emotion_vec of record '" + r.id + "'");
    }
    if (r.face_vec && static_cast<int>(r.face_vec->size()) != snap.dims.face) {
      raise(ErrorCode::DimensionMismatch, "face_vec of record '" + r.id + "'");
    }
  }

  // Vocabulary, document frequencies, per-record TF-IDF norms.
  std::map<std::string, int> df;
  for (const auto& r : records) {
    for (const auto& [term, w] : r.desc_vec) {
      (void)w;
      df[term] += 1;
    }
  }
  int col = 0;
  const double n = static_cast<double>(records.size());
  for (const auto& [term, count] : df) {
    snap.vocab.emplace(term, col++);
    snap.idf.emplace(term, 1.0 + std::log(n / static_cast<double>(count)));
  }

  snap.desc_tfidf_norm.reserve(records.size());
  for (const auto& r : records) {
    double sq = 0.0;
    for (const auto& [term, w] : r.desc_vec) {
      const double x = static_cast<double>(w) * snap.idf.at(term);
      sq += x * x;
    }
    snap.desc_tfidf_norm.push_back(std::sqrt(sq));
  }

  std::vector<double> rates;
  std::vector<double> pitches;
  for (const auto& r : records) {
    if (r.speaking_rate) rates.push_back(*r.speaking_rate);
    if (r.pitch_mean_hz) pitches.push_back(*r.pitch_mean_hz);
  }
  snap.rate_cuts = tercile_cuts(std::move(rates));
  snap.pitch_cuts = tercile_cuts(std::move(pitches));

  snap.created_at_unix = std::chrono::duration_cast<std::chrono::seconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
  snap.id_index.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    snap.id_index.emplace(records[i].id, i);
  }
  snap.records = std::move(records);
  return snap;
}

bool snapshots_equal(const DatabaseSnapshot& a, const DatabaseSnapshot& b) {
  if (!(a.dims == b.dims) || a.vocab != b.vocab ||
      a.records.size() != b.records.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    if (!records_equal(a.records[i], b.records[i])) return false;
  }
  return true;
}

std::vector<std::string> tokenize_text(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

int tercile_band(double value, const TercileCuts& cuts) {
  if (value <= cuts[0]) return 0;
  if (value <= cuts[1]) return 1;
  return 2;
}

}  // namespace promptdb
