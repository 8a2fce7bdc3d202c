#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokendrive/control/safety.hpp"
#include "tokendrive/lang/parse.hpp"
#include "tokendrive/lang/serialize.hpp"
#include "tokendrive/policy/policy.hpp"
#include "tokendrive/sim/world.hpp"

namespace tokendrive::arb {

// Correction adviser: the trained policy, a scripted oracle replaying expert
// actions, or a remote model over the wire protocol. Returns the completion
// text for a CORRECT prompt; nullopt means "no correction" and is never fatal.
class Adviser {
 public:
  virtual ~Adviser() = default;
  virtual std::optional<std::string> correct(const lang::DrivingSentence& prompt) = 0;
  // Simulated-time cost of one call, charged by the runner as held ticks.
  virtual int latency_ticks() const { return 0; }
};

enum class DecisionSource { base, adviser, requery, waypoint_fallback, safety_override };
const char* source_name(DecisionSource s);
std::optional<DecisionSource> source_from_name(const std::string& name);

struct ArbitrationConfig {
  double tau_c = 0.2;    // steer conflict threshold
  double theta_u = 0.5;  // uncertainty gate
  bool requery_enabled = true;
  bool uncertainty_gate = true;
  double temperature = 0.3;  // generation temperature during driving
  ctrl::ControlConfig control;
  ctrl::SafetyConfig safety;
};

struct TickDecision {
  DecisionSource source = DecisionSource::base;
  Control final_control;
  ActionBundle bundle;  // waypoints + control backing the decision
  std::vector<ctrl::ConflictReport> conflict_history;
  int queries_used = 0;  // re-queries plus adviser calls, at most 2
  bool envelope_applied = false;
  bool envelope_violation = false;
  bool parse_failed = false;  // base generation did not parse
  double uncertainty = 0.0;
  int hold_ticks = 0;  // adviser latency charge
  std::string completion_text;
};

struct NotConflicted : std::logic_error {
  using std::logic_error::logic_error;
};

// REQUERY prompt carrying the previous disagreement. Throws NotConflicted
// when the report is not conflicted.
lang::DrivingSentence requery_prompt(const ActionBundle& base_output,
                                     const ctrl::ConflictReport& report,
                                     const DriveStatus& status, int obs_tokens,
                                     const lang::Vocab& vocab);

// One driving agent: policy inference, parse-failure fallback, conflict
// re-query, waypoint-led fallback, uncertainty-gated correction, safety
// envelope last. Holds per-agent PID state; not shareable across routes.
class Agent {
 public:
  Agent(const policy::Model& model, const lang::Vocab& vocab, ArbitrationConfig cfg,
        Adviser* adviser);

  TickDecision drive_tick(const sim::ObservationFrame& frame, double hazard_dist,
                          uint64_t tick_seed);

  const ArbitrationConfig& config() const { return cfg_; }

 private:
  const policy::Model& model_;
  const lang::Vocab& vocab_;
  ArbitrationConfig cfg_;
  Adviser* adviser_;
  ctrl::PidPair pid_;
  ActionBundle last_action_;
};

}  // namespace tokendrive::arb
