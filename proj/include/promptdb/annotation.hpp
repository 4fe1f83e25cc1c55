// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "promptdb/snapshot.hpp"
#include "promptdb/types.hpp"

namespace promptdb {

enum class Modality { audio, visual, text };
enum class Task { gender, age, emotion, speaking_rate, language };

const char* to_string(Modality m) noexcept;
const char* to_string(Task t) noexcept;
Modality modality_from_string(std::string_view s);
Task task_from_string(std::string_view s);
bool task_is_numeric(Task t) noexcept;

/// One agent model in the knowledge base: per (task, language) performance
/// scores in [0, 1]. An agent supports a pair iff the key exists.
struct AgentProfile {
  std::string agent_id;
  Modality modality = Modality::audio;
  std::map<std::pair<Task, std::string>, double> scores;
};

/// Structured state a data instance is reduced to before weight assignment.
struct StateDescription {
  std::string language;
  std::set<Modality> modalities_present;
};

/// One agent's answer for one task. Age and speaking-rate values are
/// numeric; the rest are categorical labels.
struct AgentOutput {
  std::string agent_id;
  Task task = Task::gender;
  std::variant<std::string, double> value;

  static AgentOutput categorical(std::string agent_id, Task task, std::string label);
  static AgentOutput numeric(std::string agent_id, Task task, double value);
};

/// Per-task fusion weights; per task the (agent_id, weight) entries are
/// sorted by agent id and the weights sum to 1.
struct WeightAssignment {
  std::map<Task, std::vector<std::pair<std::string, double>>> weights;

  /// Weight of an agent for a task, or nullopt when unassigned.
  std::optional<double> weight_of(Task task, std::string_view agent_id) const;
};

StateDescription build_state(const std::string& language,
                             const std::set<Modality>& modalities);

/// State of a record: audio is always present, visual iff a face vector is
/// stored, text iff the transcript is nonempty.
StateDescription state_of_record(const PromptRecord& record);

/// Score-proportional weights over eligible agents. An agent is eligible for
/// a task when its modality is present in the state and it has a score for
/// (task, state.language). Tasks with no eligible agent (or all-zero scores)
/// are omitted.
WeightAssignment assign_weights(const StateDescription& state,
                                const std::vector<AgentProfile>& kb);

/// Label with the highest summed weight; ties break to the lexicographically
/// smallest label. Outputs for other tasks are ignored.
std::string fuse_categorical(const std::vector<AgentOutput>& outputs,
                             const WeightAssignment& weights, Task task);

/// Weight-normalized mean over the responding agents, so the result always
/// lies within [min, max] of the input values.
double fuse_numeric(const std::vector<AgentOutput>& outputs,
                    const WeightAssignment& weights, Task task);

enum class PitchLevel { low, medium, high };
enum class PaceLevel { slow, moderate, swift };

const char* to_string(PitchLevel p) noexcept;
const char* to_string(PaceLevel p) noexcept;

PitchLevel pitch_level(double pitch_hz, const TercileCuts& cuts);
PaceLevel pace_level(double rate, const TercileCuts& cuts);

/// Quantized labels feeding the description template. Gender::unknown is not
/// representable here; callers map it to absent.
struct FusedLabels {
  std::optional<Gender> gender;
  std::optional<AgeGroup> age_group;
  std::optional<PitchLevel> pitch;
  std::optional<PaceLevel> pace;
  std::optional<std::string> emotion;
};

/// Deterministic single-sentence rendering, e.g. "A young adult female,
/// voice high, pace swift, revealed joy in her emotion." Missing fields drop
/// their clause. Requires gender or age_group (NothingToDescribe).
std::string render_description(const FusedLabels& labels);

/// Knowledge-base file: one agent per JSON line with agent_id, modality and
/// scores keyed "task:lang".
std::vector<AgentProfile> load_knowledge_base(const std::string& path);

/// Agent-output fixture file: one output per JSON line with record_id,
/// agent_id, task and value. Returns outputs grouped by record id.
std::map<std::string, std::vector<AgentOutput>> load_agent_outputs(
    const std::string& path);

}  // namespace promptdb
