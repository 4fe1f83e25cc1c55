// SPDX-License-Identifier: Apache-2.0
#include "promptdb/annotation.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>

namespace promptdb {

using nlohmann::json;

const char* to_string(Modality m) noexcept {
  switch (m) {
    case Modality::audio: return "audio";
    case Modality::visual: return "visual";
    case Modality::text: return "text";
  }
  return "audio";
}

const char* to_string(Task t) noexcept {
  switch (t) {
    case Task::gender: return "gender";
    case Task::age: return "age";
    case Task::emotion: return "emotion";
    case Task::speaking_rate: return "speaking_rate";
    case Task::language: return "language";
  }
  return "gender";
}

Modality modality_from_string(std::string_view s) {
  if (s == "audio") return Modality::audio;
  if (s == "visual") return Modality::visual;
  if (s == "text") return Modality::text;
  raise(ErrorCode::BadField, "modality: unrecognized value '" + std::string(s) + "'");
}

Task task_from_string(std::string_view s) {
  if (s == "gender") return Task::gender;
  if (s == "age") return Task::age;
  if (s == "emotion") return Task::emotion;
  if (s == "speaking_rate") return Task::speaking_rate;
  if (s == "language") return Task::language;
  raise(ErrorCode::BadField, "task: unrecognized value '" + std::string(s) + "'");
}

bool task_is_numeric(Task t) noexcept {
  return t == Task::age || t == Task::speaking_rate;
}

AgentOutput AgentOutput::categorical(std::string agent_id, Task task, std::string label) {
  if (task_is_numeric(task)) {
    raise(ErrorCode::BadField,
          std::string("task ") + to_string(task) + " takes numeric values");
  }
  return AgentOutput{std::move(agent_id), task, std::move(label)};
}

AgentOutput AgentOutput::numeric(std::string agent_id, Task task, double value) {
  if (!task_is_numeric(task)) {
    raise(ErrorCode::BadField,
          std::string("task ") + to_string(task) + " takes categorical values");
  }
  return AgentOutput{std::move(agent_id), task, value};
}

std::optional<double> WeightAssignment::weight_of(Task task,
                                                  std::string_view agent_id) const {
  auto it = weights.find(task);
  if (it == weights.end()) return std::nullopt;
  for (const auto& [id, w] : it->second) {
    if (id == agent_id) return w;
  }
  return std::nullopt;
}

StateDescription build_state(const std::string& language,
                             const std::set<Modality>& modalities) {
  if (!is_language_code(language)) {
    raise(ErrorCode::BadLanguageCode, "'" + language + "'");
  }
  if (modalities.empty()) {
    raise(ErrorCode::NoModalities, "state needs at least one modality");
  }
  return StateDescription{language, modalities};
}

StateDescription state_of_record(const PromptRecord& record) {
  std::set<Modality> m{Modality::audio};
  if (record.face_vec) m.insert(Modality::visual);
  if (!record.transcript.empty()) m.insert(Modality::text);
  return build_state(record.language, m);
}

WeightAssignment assign_weights(const StateDescription& state,
                                const std::vector<AgentProfile>& kb) {
  static constexpr Task kTasks[] = {Task::gender, Task::age, Task::emotion,
                                    Task::speaking_rate, Task::language};
  WeightAssignment out;
  for (Task task : kTasks) {
    std::vector<std::pair<std::string, double>> eligible;
    double total = 0.0;
    for (const auto& agent : kb) {
      if (!state.modalities_present.count(agent.modality)) continue;
      auto it = agent.scores.find({task, state.language});
      if (it == agent.scores.end()) continue;
      const double score = it->second;
      if (!(score >= 0.0 && score <= 1.0)) {
        raise(ErrorCode::BadField,
              "score for agent '" + agent.agent_id + "' outside [0, 1]");
      }
      eligible.emplace_back(agent.agent_id, score);
      total += score;
    }
    if (eligible.empty() || total <= 0.0) continue;
    for (auto& [id, w] : eligible) w /= total;
    std::sort(eligible.begin(), eligible.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    out.weights.emplace(task, std::move(eligible));
  }
  return out;
}

namespace {

/// Weighted outputs for one task; raises NoOutputs / UnweightedAgent.
std::vector<std::pair<const AgentOutput*, double>> weighted_outputs(
    const std::vector<AgentOutput>& outputs, const WeightAssignment& weights,
    Task task) {
  std::vector<std::pair<const AgentOutput*, double>> result;
  for (const auto& o : outputs) {
    if (o.task != task) continue;
    auto w = weights.weight_of(task, o.agent_id);
    if (!w) raise(ErrorCode::UnweightedAgent, o.agent_id);
    result.emplace_back(&o, *w);
  }
  if (result.empty()) {
    raise(ErrorCode::NoOutputs, std::string("no outputs for task ") + to_string(task));
  }
  return result;
}

}  // namespace

std::string fuse_categorical(const std::vector<AgentOutput>& outputs,
                             const WeightAssignment& weights, Task task) {
  if (task_is_numeric(task)) {
    raise(ErrorCode::BadField, std::string("task ") + to_string(task) + " is numeric");
  }
  std::map<std::string, double> label_weight;
  for (const auto& [o, w] : weighted_outputs(outputs, weights, task)) {
    label_weight[std::get<std::string>(o->value)] += w;
  }
  // Map iteration is in label order, so keeping strict improvements only
  // yields the lexicographically smallest argmax.
  std::string best;
  double best_w = -1.0;
  for (const auto& [label, w] : label_weight) {
    if (w > best_w) {
      best = label;
      best_w = w;
    }
  }
  return best;
}

double fuse_numeric(const std::vector<AgentOutput>& outputs,
                    const WeightAssignment& weights, Task task) {
  if (!task_is_numeric(task)) {
    raise(ErrorCode::BadField, std::string("task ") + to_string(task) + " is categorical");
  }
  double acc = 0.0;
  double total = 0.0;
  for (const auto& [o, w] : weighted_outputs(outputs, weights, task)) {
    acc += w * std::get<double>(o->value);
    total += w;
  }
  if (total <= 0.0) {
    raise(ErrorCode::NoOutputs, "all responding agents have zero weight");
  }
  return acc / total;
}

const char* to_string(PitchLevel p) noexcept {
  switch (p) {
    case PitchLevel::low: return "low";
    case PitchLevel::medium: return "medium";
    case PitchLevel::high: return "high";
  }
  return "medium";
}

const char* to_string(PaceLevel p) noexcept {
  switch (p) {
    case PaceLevel::slow: return "slow";
    case PaceLevel::moderate: return "moderate";
    case PaceLevel::swift: return "swift";
  }
  return "moderate";
}

PitchLevel pitch_level(double pitch_hz, const TercileCuts& cuts) {
  switch (tercile_band(pitch_hz, cuts)) {
    case 0: return PitchLevel::low;
    case 1: return PitchLevel::medium;
    default: return PitchLevel::high;
  }
}

PaceLevel pace_level(double rate, const TercileCuts& cuts) {
  switch (tercile_band(rate, cuts)) {
    case 0: return PaceLevel::slow;
    case 1: return PaceLevel::moderate;
    default: return PaceLevel::swift;
  }
}

namespace {

const char* age_group_words(AgeGroup g) {
  switch (g) {
    case AgeGroup::child: return "child";
    case AgeGroup::teenager: return "teenager";
    case AgeGroup::young_adult: return "young adult";
    case AgeGroup::middle_aged: return "middle-aged";
    case AgeGroup::elderly: return "elderly";
  }
  return "adult";
}

bool starts_with_vowel(std::string_view word) {
  if (word.empty()) return false;
  const char c = word.front();
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

}  // namespace

std::string render_description(const FusedLabels& labels) {
  const bool has_gender = labels.gender && *labels.gender != Gender::unknown;
  if (!has_gender && !labels.age_group) {
    raise(ErrorCode::NothingToDescribe, "need gender or age group");
  }

  std::string subject;
  if (labels.age_group) subject = age_group_words(*labels.age_group);
  if (has_gender) {
    if (!subject.empty()) subject += ' ';
    subject += *labels.gender == Gender::male ? "male" : "female";
  }

  std::string out = starts_with_vowel(subject) ? "An " : "A ";
  out += subject;
  if (labels.pitch) {
    out += ", voice ";
    out += to_string(*labels.pitch);
  }
  if (labels.pace) {
    out += ", pace ";
    out += to_string(*labels.pace);
  }
  if (labels.emotion) {
    const char* pronoun = !has_gender ? "their"
                          : *labels.gender == Gender::male ? "his"
                                                           : "her";
    out += ", revealed " + *labels.emotion + " in " + pronoun + " emotion";
  }
  out += '.';
  return out;
}

std::vector<AgentProfile> load_knowledge_base(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoFailure, "cannot open " + path);
  std::vector<AgentProfile> kb;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      AgentProfile agent;
      agent.agent_id = j.at("agent_id").get<std::string>();
      agent.modality = modality_from_string(j.at("modality").get<std::string>());
      for (const auto& [key, score] : j.at("scores").items()) {
        const auto colon = key.find(':');
        if (colon == std::string::npos) {
          raise(ErrorCode::BadField, "score key '" + key + "' is not task:lang");
        }
        const Task task = task_from_string(key.substr(0, colon));
        const std::string lang = key.substr(colon + 1);
        if (!is_language_code(lang)) {
          raise(ErrorCode::BadLanguageCode, "score key '" + key + "'");
        }
        agent.scores[{task, lang}] = score.get<double>();
      }
      kb.push_back(std::move(agent));
    } catch (const json::exception& e) {
      raise(ErrorCode::BadField, path + ": " + e.what());
    }
  }
  if (kb.empty()) raise(ErrorCode::BadInput, path + ": empty knowledge base");
  return kb;
}

std::map<std::string, std::vector<AgentOutput>> load_agent_outputs(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoFailure, "cannot open " + path);
  std::map<std::string, std::vector<AgentOutput>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string record_id = j.at("record_id").get<std::string>();
      const std::string agent_id = j.at("agent_id").get<std::string>();
      const Task task = task_from_string(j.at("task").get<std::string>());
      const json& value = j.at("value");
      if (task_is_numeric(task)) {
        if (!value.is_number()) {
          raise(ErrorCode::BadField, std::string(to_string(task)) + " value must be numeric");
        }
        out[record_id].push_back(AgentOutput::numeric(agent_id, task, value.get<double>()));
      } else {
        if (!value.is_string()) {
          raise(ErrorCode::BadField, std::string(to_string(task)) + " value must be a label");
        }
        out[record_id].push_back(
            AgentOutput::categorical(agent_id, task, value.get<std::string>()));
      }
    } catch (const json::exception& e) {
      raise(ErrorCode::BadField, path + ": " + e.what());
    }
  }
  return out;
}

}  // namespace promptdb
