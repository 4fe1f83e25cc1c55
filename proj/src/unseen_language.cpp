// SPDX-License-Identifier: Apache-2.0
#include "promptdb/unseen_language.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace promptdb {

using nlohmann::json;

void CandidateCriteria::validate() const {
  if (!(lid_threshold > 0.0 && lid_threshold < 1.0)) {
    raise(ErrorCode::BadThreshold, "lid_threshold must be in (0, 1)");
  }
  if (max_cer < 0.0 || min_ss < 0.0 || min_es < 0.0 || max_srs < 0.0) {
    raise(ErrorCode::BadInput, "criteria thresholds must be nonnegative");
  }
}

CandidateCriteria CandidateCriteria::from_json_text(const std::string& text) {
  CandidateCriteria c;
  try {
    const json j = json::parse(text);
    if (j.contains("lid_threshold")) c.lid_threshold = j["lid_threshold"].get<double>();
    if (j.contains("max_cer")) c.max_cer = j["max_cer"].get<double>();
    if (j.contains("min_ss")) c.min_ss = j["min_ss"].get<double>();
    if (j.contains("min_es")) c.min_es = j["min_es"].get<double>();
    if (j.contains("max_srs")) c.max_srs = j["max_srs"].get<double>();
  } catch (const json::exception& e) {
    raise(ErrorCode::BadInput, std::string("criteria: ") + e.what());
  }
  c.validate();
  return c;
}

std::string CandidateCriteria::to_json_text() const {
  json j;
  j["lid_threshold"] = lid_threshold;
  j["max_cer"] = max_cer;
  j["min_ss"] = min_ss;
  j["min_es"] = min_es;
  j["max_srs"] = max_srs;
  return j.dump();
}

CandidateReport evaluate_candidate(const PromptRecord& record,
                                   const std::string& target_text,
                                   const std::string& target_language,
                                   SynthesisOracle& oracle,
                                   const CandidateCriteria& criteria) {
  criteria.validate();
  SynthesisMeasurement m;
  try {
    m = oracle.synthesize(target_text, record);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    raise(ErrorCode::OracleFailure, e.what());
  }
  CandidateReport report;
  report.metrics = m;
  report.pass = passes_lid(m.lang_probs, target_language, criteria.lid_threshold) &&
                m.cer <= criteria.max_cer && m.ss >= criteria.min_ss &&
                m.es >= criteria.min_es && m.srs <= criteria.max_srs;
  return report;
}

CandidateAnnotation annotate_candidates(const DatabaseSnapshot& snapshot,
                                        const std::string& target_language,
                                        const std::vector<std::string>& texts,
                                        const LanguageTree& tree,
                                        SynthesisOracle& oracle,
                                        const CandidateCriteria& criteria) {
  if (texts.empty()) {
    raise(ErrorCode::BadInput, "no target-language texts to evaluate against");
  }
  criteria.validate();

  // Languages present in the snapshot, minus the target itself so a record
  // can never become a candidate for its own language.
  std::set<std::string> available;
  for (const auto& r : snapshot.records) {
    if (r.language != target_language && tree.is_leaf(r.language)) {
      available.insert(r.language);
    }
  }
  if (available.empty()) {
    raise(ErrorCode::NoProxyRecords,
          "snapshot has no records in any proxy-eligible language");
  }
  const std::string proxy = tree.proxy_language(target_language, available);

  CandidateAnnotation out;
  out.proxy_language = proxy;
  std::vector<PromptRecord> records = snapshot.records;
  bool any_proxy = false;
  for (auto& r : records) {
    if (r.language != proxy) continue;
    any_proxy = true;
    bool all_pass = true;
    for (const auto& text : texts) {
      if (!evaluate_candidate(r, text, target_language, oracle, criteria).pass) {
        all_pass = false;
        break;
      }
    }
    if (all_pass) {
      r.candidate_for.insert(target_language);
      out.passing_ids.insert(r.id);
    }
  }
  if (!any_proxy) {
    raise(ErrorCode::NoProxyRecords, "no records in proxy language '" + proxy + "'");
  }
  out.snapshot = build_snapshot(std::move(records));
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t hash_str(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = seed ^ 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

double unit_double(std::uint64_t x) {
  return static_cast<double>(x >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace

ToySynthesisOracle::ToySynthesisOracle(std::string target_language, std::uint64_t seed)
    : target_language_(std::move(target_language)), seed_(seed) {
  if (!is_language_code(target_language_)) {
    raise(ErrorCode::BadLanguageCode, "'" + target_language_ + "'");
  }
}

SynthesisMeasurement ToySynthesisOracle::synthesize(const std::string& target_text,
                                                    const PromptRecord& reference) {
  std::uint64_t h_rec = splitmix64(hash_str(reference.id, seed_));
  std::uint64_t h_text = splitmix64(hash_str(target_text, seed_ + 1));
  // A reference's suitability is mostly intrinsic; the text contributes a
  // small wiggle, so a strong reference passes most texts.
  auto next = [&]() {
    h_rec = splitmix64(h_rec);
    h_text = splitmix64(h_text);
    return 0.85 * unit_double(h_rec) + 0.15 * unit_double(h_text);
  };

  SynthesisMeasurement m;
  const double p = 0.90 + 0.10 * next();
  if (reference.language != target_language_) {
    m.lang_probs.entries[target_language_] = p;
    m.lang_probs.entries[reference.language] = 1.0 - p;
  } else {
    m.lang_probs.entries[target_language_] = 1.0;
  }
  m.ss = 0.70 + 0.28 * next();
  m.es = 0.30 + 0.68 * next();
  // The synthesizer roughly keeps the reference's pace; SRS is the relative
  // drift of a jittered rate.
  const double jitter = 0.65 + 0.70 * next();
  const double ref_rate = reference.speaking_rate.value_or(4.0);
  m.srs = std::abs(ref_rate * jitter - ref_rate) / ref_rate;
  m.cer = 0.10 * next();
  return m;
}

ScriptedSynthesisOracle ScriptedSynthesisOracle::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoFailure, "cannot open " + path);
  std::map<std::string, SynthesisMeasurement> by_id;
  try {
    const json j = json::parse(in);
    for (const auto& [id, mj] : j.items()) {
      SynthesisMeasurement m;
      for (const auto& [lang, p] : mj.at("lang_probs").items()) {
        m.lang_probs.entries[lang] = p.get<double>();
      }
      m.ss = mj.at("ss").get<double>();
      m.es = mj.at("es").get<double>();
      m.srs = mj.at("srs").get<double>();
      m.cer = mj.at("cer").get<double>();
      by_id.emplace(id, std::move(m));
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::BadInput, path + ": " + e.what());
  }
  return ScriptedSynthesisOracle(std::move(by_id));
}

SynthesisMeasurement ScriptedSynthesisOracle::synthesize(const std::string&,
                                                         const PromptRecord& reference) {
  auto it = by_id_.find(reference.id);
  if (it == by_id_.end()) {
    raise(ErrorCode::OracleFailure, "no scripted measurement for '" + reference.id + "'");
  }
  return it->second;
}

}  // namespace promptdb
