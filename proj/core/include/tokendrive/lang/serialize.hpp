#pragma once

#include <optional>
#include <stdexcept>

#include "tokendrive/lang/grammar.hpp"
#include "tokendrive/types.hpp"

namespace tokendrive::lang {

enum class TaskMode { DRIVE, REQUERY, CORRECT };

const char* task_mode_name(TaskMode m);

struct ConflictInfo {
  double steer_delta = 0.0;  // signed; rendered as magnitude
  bool throttle_vs_brake = false;
};

struct TaskCommand {
  TaskMode mode = TaskMode::DRIVE;
  std::optional<ActionBundle> model_action;  // required for REQUERY / CORRECT
  std::optional<ConflictInfo> conflict;      // always serialized for REQUERY
};

struct MissingPayload : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Prompt part of a driving sentence: obs placeholders, the status block
// emitted twice (status repeat), the task command and its payload. All
// numbers are snapped to their field grids before rendering.
DrivingSentence serialize_prompt(int obs_token_count, const DriveStatus& status,
                                 const TaskCommand& task, const Vocab& vocab);

// Completion part: perception description, waypoints, control, end token.
DrivingSentence serialize_supervision(const PerceptionDescription& desc,
                                      const ActionBundle& action, const Vocab& vocab);

// Quantizes a bundle onto the grammar grids (what any serialized copy of it
// parses back to).
ActionBundle quantize_bundle(const ActionBundle& bundle, const Vocab& vocab);

// "WAYPOINTS: ... CONTROL: ..." rendering of a bundle, parseable by
// parse_action. Used for corpus columns and wire payloads.
std::string action_to_text(const ActionBundle& bundle, const Vocab& vocab);

// prompt tokens + completion tokens glued into one sentence (completion may
// come from sampling).
DrivingSentence join_sentence(const DrivingSentence& prompt, const std::vector<int>& completion,
                              const Vocab& vocab, bool truncated = false);

}  // namespace tokendrive::lang
