#include "tokendrive/lang/serialize.hpp"

#include <cmath>

namespace tokendrive::lang {

const char* task_mode_name(TaskMode m) {
  switch (m) {
    case TaskMode::DRIVE: return "DRIVE";
    case TaskMode::REQUERY: return "REQUERY";
    case TaskMode::CORRECT: return "CORRECT";
  }
  return "DRIVE";
}

namespace {

void push_numeric(std::vector<int>& ids, const Vocab& vocab, double value, Field f) {
  ids.push_back(vocab.numeric_id(f, vocab.quantize(value, f).bin));
}

void push_status_block(std::vector<int>& ids, const Vocab& vocab, const DriveStatus& status,
                       const char* head) {
  ids.push_back(vocab.keyword(head));
  ids.push_back(vocab.keyword("speed="));
  push_numeric(ids, vocab, status.speed, Field::speed);
  ids.push_back(vocab.keyword("throttle="));
  push_numeric(ids, vocab, status.throttle, Field::throttle);
  ids.push_back(vocab.keyword("brake="));
  push_numeric(ids, vocab, status.brake, Field::brake);
  ids.push_back(vocab.keyword("pos=("));
  push_numeric(ids, vocab, status.position.x, Field::pos);
  ids.push_back(vocab.keyword(","));
  push_numeric(ids, vocab, status.position.y, Field::pos);
  ids.push_back(vocab.keyword(")"));
}

void push_action_block(std::vector<int>& ids, const Vocab& vocab, const ActionBundle& action) {
  ids.push_back(vocab.keyword("WAYPOINTS:"));
  for (const auto& wp : action.waypoints) {
    ids.push_back(vocab.keyword("("));
    push_numeric(ids, vocab, wp.x, Field::wp);
    ids.push_back(vocab.keyword(","));
    push_numeric(ids, vocab, wp.y, Field::wp);
    ids.push_back(vocab.keyword(")"));
  }
  ids.push_back(vocab.keyword("CONTROL:"));
  ids.push_back(vocab.keyword("steer="));
  push_numeric(ids, vocab, action.control.steer, Field::steer);
  ids.push_back(vocab.keyword("throttle="));
  push_numeric(ids, vocab, action.control.throttle, Field::throttle);
  ids.push_back(vocab.keyword("brake="));
  push_numeric(ids, vocab, action.control.brake, Field::brake);
}

}  // namespace

DrivingSentence serialize_prompt(int obs_token_count, const DriveStatus& status,
                                 const TaskCommand& task, const Vocab& vocab) {
  if ((task.mode == TaskMode::REQUERY || task.mode == TaskMode::CORRECT) && !task.model_action)
    throw MissingPayload(std::string(task_mode_name(task.mode)) + " task needs a model action");

  DrivingSentence s;
  for (int i = 0; i < obs_token_count; ++i) s.tokens.push_back(vocab.obs());
  push_status_block(s.tokens, vocab, status, "STATUS");
  push_status_block(s.tokens, vocab, status, "STATUS_REPEAT");
  switch (task.mode) {
    case TaskMode::DRIVE: s.tokens.push_back(vocab.keyword("TASK=DRIVE")); break;
    case TaskMode::REQUERY: s.tokens.push_back(vocab.keyword("TASK=REQUERY")); break;
    case TaskMode::CORRECT: s.tokens.push_back(vocab.keyword("TASK=CORRECT")); break;
  }
  if (task.model_action) {
    s.tokens.push_back(vocab.keyword("MODEL:"));
    push_action_block(s.tokens, vocab, *task.model_action);
  }
  if (task.conflict || task.mode == TaskMode::REQUERY) {
    const ConflictInfo conflict = task.conflict.value_or(ConflictInfo{});
    s.tokens.push_back(vocab.keyword("CONFLICT:"));
    s.tokens.push_back(vocab.keyword("steer"));
    s.tokens.push_back(vocab.keyword("Δ="));
    push_numeric(s.tokens, vocab, std::fabs(conflict.steer_delta), Field::delta);
    s.tokens.push_back(
        vocab.keyword(conflict.throttle_vs_brake ? "long=throttle_vs_brake" : "long=none"));
  }
  s.prompt_len = s.size();
  s.text = vocab.detokenize(s.tokens);
  scan_sentence(vocab, s);
  return s;
}

DrivingSentence serialize_supervision(const PerceptionDescription& desc,
                                      const ActionBundle& action, const Vocab& vocab) {
  DrivingSentence s;
  s.prompt_len = 0;
  s.tokens.push_back(vocab.keyword("PERCEPTION:"));
  s.tokens.push_back(vocab.keyword("vehicles=["));
  for (const auto& v : desc.vehicles) {
    s.tokens.push_back(vocab.keyword("("));
    push_numeric(s.tokens, vocab, v.rel.x, Field::wp);
    s.tokens.push_back(vocab.keyword(","));
    push_numeric(s.tokens, vocab, v.rel.y, Field::wp);
    s.tokens.push_back(vocab.keyword(","));
    push_numeric(s.tokens, vocab, v.speed, Field::speed);
    s.tokens.push_back(vocab.keyword(")"));
  }
  s.tokens.push_back(vocab.keyword("]"));
  switch (desc.light) {
    case LightState::RED: s.tokens.push_back(vocab.keyword("light=RED")); break;
    case LightState::GREEN: s.tokens.push_back(vocab.keyword("light=GREEN")); break;
    case LightState::NONE: s.tokens.push_back(vocab.keyword("light=NONE")); break;
  }
  s.tokens.push_back(vocab.keyword("hazard_dist="));
  if (std::isinf(desc.hazard_dist)) {
    s.tokens.push_back(vocab.keyword("inf"));
  } else {
    push_numeric(s.tokens, vocab, desc.hazard_dist, Field::hazard);
  }
  push_action_block(s.tokens, vocab, action);
  s.tokens.push_back(vocab.end());
  s.text = vocab.detokenize(s.tokens);
  scan_sentence(vocab, s);
  return s;
}

ActionBundle quantize_bundle(const ActionBundle& bundle, const Vocab& vocab) {
  ActionBundle q = bundle;
  for (auto& wp : q.waypoints) {
    wp.x = vocab.quantize(wp.x, Field::wp).value;
    wp.y = vocab.quantize(wp.y, Field::wp).value;
  }
  q.control.steer = vocab.quantize(bundle.control.steer, Field::steer).value;
  q.control.throttle = vocab.quantize(bundle.control.throttle, Field::throttle).value;
  q.control.brake = vocab.quantize(bundle.control.brake, Field::brake).value;
  return q;
}

std::string action_to_text(const ActionBundle& bundle, const Vocab& vocab) {
  std::vector<int> ids;
  push_action_block(ids, vocab, bundle);
  return vocab.detokenize(ids);
}

DrivingSentence join_sentence(const DrivingSentence& prompt, const std::vector<int>& completion,
                              const Vocab& vocab, bool truncated) {
  DrivingSentence s;
  s.tokens = prompt.tokens;
  s.tokens.insert(s.tokens.end(), completion.begin(), completion.end());
  s.prompt_len = prompt.size();
  s.truncated = truncated;
  s.text = vocab.detokenize(s.tokens);
  scan_sentence(vocab, s);
  return s;
}

}  // namespace tokendrive::lang
