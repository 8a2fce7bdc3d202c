#include "tokendrive/arbitration/arbitrate.hpp"

namespace tokendrive::arb {

const char* source_name(DecisionSource s) {
  switch (s) {
    case DecisionSource::base: return "base";
    case DecisionSource::adviser: return "adviser";
    case DecisionSource::requery: return "requery";
    case DecisionSource::waypoint_fallback: return "waypoint_fallback";
    case DecisionSource::safety_override: return "safety_override";
  }
  return "base";
}

std::optional<DecisionSource> source_from_name(const std::string& name) {
  for (DecisionSource s : {DecisionSource::base, DecisionSource::adviser, DecisionSource::requery,
                           DecisionSource::waypoint_fallback, DecisionSource::safety_override}) {
    if (name == source_name(s)) return s;
  }
  return std::nullopt;
}

lang::DrivingSentence requery_prompt(const ActionBundle& base_output,
                                     const ctrl::ConflictReport& report,
                                     const DriveStatus& status, int obs_tokens,
                                     const lang::Vocab& vocab) {
  if (!report.conflicted) throw NotConflicted("requery_prompt: report is not conflicted");
  lang::TaskCommand task;
  task.mode = lang::TaskMode::REQUERY;
  task.model_action = base_output;
  task.conflict = lang::ConflictInfo{
      report.steer_delta,
      report.longitudinal == ctrl::LongitudinalDisagreement::throttle_vs_brake};
  return lang::serialize_prompt(obs_tokens, status, task, vocab);
}

Agent::Agent(const policy::Model& model, const lang::Vocab& vocab, ArbitrationConfig cfg,
             Adviser* adviser)
    : model_(model), vocab_(vocab), cfg_(cfg), adviser_(adviser) {
  last_action_.control = {0.0, 0.0, 1.0};
}

namespace {

std::string completion_text(const lang::DrivingSentence& s, const lang::Vocab& vocab) {
  const std::vector<int> tail(s.tokens.begin() + s.prompt_len, s.tokens.end());
  return vocab.detokenize(tail);
}

}  // namespace

TickDecision Agent::drive_tick(const sim::ObservationFrame& frame, double hazard_dist,
                               uint64_t tick_seed) {
  TickDecision decision;
  const Rng seeds(tick_seed);

  // (1) encode the frame
  const nn::FrameEncoding enc =
      nn::encode_frame(model_.encoder, frame.camera_grid, frame.bev_grid, nullptr);
  const std::vector<double> status_feats = policy::status_features(frame.status);
  const int obs_tokens = enc.joint.tokens.rows;

  // (2) base generation with task DRIVE
  lang::TaskCommand drive_task;
  drive_task.mode = lang::TaskMode::DRIVE;
  const lang::DrivingSentence prompt =
      lang::serialize_prompt(obs_tokens, frame.status, drive_task, vocab_);
  const lang::DrivingSentence base_out = policy::sample_sequence(
      model_, vocab_, enc.pooled, status_feats, prompt, cfg_.temperature, seeds.fork(1).next_u64());
  decision.completion_text = completion_text(base_out, vocab_);

  // (3) parse; on failure ask the adviser once, then safe stop
  lang::ParseResult parsed = lang::parse_action(decision.completion_text, vocab_);
  if (!parsed.ok()) {
    decision.parse_failed = true;
    bool recovered = false;
    if (adviser_ && decision.queries_used < 2) {
      lang::TaskCommand correct_task;
      correct_task.mode = lang::TaskMode::CORRECT;
      correct_task.model_action = last_action_;
      const lang::DrivingSentence correction_prompt =
          lang::serialize_prompt(obs_tokens, frame.status, correct_task, vocab_);
      ++decision.queries_used;
      decision.hold_ticks += adviser_->latency_ticks();
      if (const auto reply = adviser_->correct(correction_prompt)) {
        const lang::ParseResult reparsed = lang::parse_action(*reply, vocab_);
        if (reparsed.ok()) {
          parsed = reparsed;
          decision.source = DecisionSource::adviser;
          decision.completion_text = *reply;
          recovered = true;
        }
      }
    }
    if (!recovered) {
      // second failure: defined safe stop
      decision.bundle.control = {0.0, 0.0, 1.0};
      decision.final_control = decision.bundle.control;
      const auto env = ctrl::safety_envelope(decision.final_control, hazard_dist,
                                             frame.status.speed, cfg_.safety);
      decision.envelope_applied = true;
      decision.envelope_violation = env.violation;
      if (env.violation) decision.source = DecisionSource::safety_override;
      decision.final_control = env.control;
      return decision;
    }
  }

  decision.bundle = parsed.action;
  decision.final_control = parsed.action.control;

  // (4) waypoint-implied control; every conversion this tick starts from the
  // tick-start PID snapshot, the last one performed is committed.
  const ctrl::PidPair snapshot = pid_;
  ctrl::PidPair work = snapshot;
  ctrl::WaypointControl derived =
      ctrl::waypoints_to_control(parsed.action.waypoints, frame.status, work, cfg_.control);
  ctrl::PidPair committed = work;

  // (5)-(6) conflict, one re-query, then the waypoint-led action
  ctrl::ConflictReport report =
      ctrl::conflict(parsed.action.control, derived.control, cfg_.tau_c);
  decision.conflict_history.push_back(report);
  if (report.conflicted && cfg_.requery_enabled && decision.queries_used < 2) {
    ++decision.queries_used;
    const lang::DrivingSentence rq_prompt =
        requery_prompt(parsed.action, report, frame.status, obs_tokens, vocab_);
    const lang::DrivingSentence rq_out =
        policy::sample_sequence(model_, vocab_, enc.pooled, status_feats, rq_prompt,
                                cfg_.temperature, seeds.fork(2).next_u64());
    const lang::ParseResult rq_parsed = lang::parse_action(completion_text(rq_out, vocab_), vocab_);
    if (rq_parsed.ok()) {
      ctrl::PidPair rq_work = snapshot;
      const ctrl::WaypointControl rq_derived = ctrl::waypoints_to_control(
          rq_parsed.action.waypoints, frame.status, rq_work, cfg_.control);
      committed = rq_work;
      const ctrl::ConflictReport rq_report =
          ctrl::conflict(rq_parsed.action.control, rq_derived.control, cfg_.tau_c);
      decision.conflict_history.push_back(rq_report);
      decision.bundle = rq_parsed.action;
      decision.completion_text = completion_text(rq_out, vocab_);
      if (rq_report.conflicted) {
        decision.source = DecisionSource::waypoint_fallback;
        decision.final_control = rq_derived.control;
      } else {
        decision.source = DecisionSource::requery;
        decision.final_control = rq_parsed.action.control;
      }
    } else {
      // unusable re-query: fall back to the original waypoints
      decision.source = DecisionSource::waypoint_fallback;
      decision.final_control = derived.control;
    }
  } else if (report.conflicted && !cfg_.requery_enabled) {
    // re-query disabled: the initially generated output drives
    decision.final_control = parsed.action.control;
  }

  // (7) uncertainty-gated correction
  decision.uncertainty = policy::uncertainty(model_, enc.pooled);
  if (cfg_.uncertainty_gate && adviser_ && decision.uncertainty > cfg_.theta_u &&
      decision.queries_used < 2) {
    lang::TaskCommand correct_task;
    correct_task.mode = lang::TaskMode::CORRECT;
    correct_task.model_action = decision.bundle;
    if (!decision.conflict_history.empty() && decision.conflict_history.back().conflicted) {
      const auto& last = decision.conflict_history.back();
      correct_task.conflict = lang::ConflictInfo{
          last.steer_delta,
          last.longitudinal == ctrl::LongitudinalDisagreement::throttle_vs_brake};
    }
    const lang::DrivingSentence correction_prompt =
        lang::serialize_prompt(obs_tokens, frame.status, correct_task, vocab_);
    ++decision.queries_used;
    decision.hold_ticks += adviser_->latency_ticks();
    if (const auto reply = adviser_->correct(correction_prompt)) {
      const lang::ParseResult reparsed = lang::parse_action(*reply, vocab_);
      if (reparsed.ok()) {
        decision.bundle = reparsed.action;
        decision.final_control = reparsed.action.control;
        decision.source = DecisionSource::adviser;
        decision.completion_text = *reply;
      }
    }
  }

  // (8) safety envelope, always last
  const auto env =
      ctrl::safety_envelope(decision.final_control, hazard_dist, frame.status.speed, cfg_.safety);
  decision.envelope_applied = true;
  decision.envelope_violation = env.violation;
  if (env.violation) decision.source = DecisionSource::safety_override;
  decision.final_control = env.control;

  pid_ = committed;
  last_action_ = decision.bundle;
  return decision;
}

}  // namespace tokendrive::arb
