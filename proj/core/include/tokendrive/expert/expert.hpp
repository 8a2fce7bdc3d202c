#pragma once

#include "tokendrive/rng.hpp"
#include "tokendrive/sim/world.hpp"
#include "tokendrive/types.hpp"

namespace tokendrive::expert {

struct ExpertConfig {
  double cruise_speed = 6.0;
  double lat_accel_max = 2.0;   // caps cornering speed
  double brake_comfort = 2.0;   // used for stop-distance planning
  double stop_margin = 4.0;     // clearance kept in front of hazards
  double lookahead_gain = 1.0;  // pure pursuit: Ld = clamp(gain * v, min, max)
  double lookahead_min = 4.0;
  double lookahead_max = 12.0;
  double throttle_gain = 0.5;
  double brake_gain = 0.5;
  double speed_deadband = 0.05;
  double waypoint_dt = 0.5;     // spacing of the four planned waypoints
};

// Rule-based expert: pure-pursuit steering along the route centerline,
// proportional speed control with corner and end-of-route slowdown, full stop
// for hazards and red lights within planning distance. Stateless.
ActionBundle expert_control(const sim::WorldState& state, const sim::Route& route,
                            const sim::WorldConfig& world, const ExpertConfig& cfg);

// The planned speed the expert used (exposed for tests).
double expert_plan_speed(const sim::WorldState& state, const sim::Route& route,
                         const sim::WorldConfig& world, const ExpertConfig& cfg);

struct ScriptedModelConfig {
  double wp_noise = 1.2;      // waypoint jitter (m) at severity 1
  double steer_noise = 0.35;  // steer jitter at severity 1
  double flip_prob = 0.15;    // longitudinal flip probability at severity 1
  double base_severity = 0.3;
};

// Stand-in for an imperfect base driving model: the expert action perturbed
// with state-dependent severity (worse in turns and near hazards).
ActionBundle scripted_model_action(const ActionBundle& expert_action, double hazard_dist,
                                   Rng& rng, const ScriptedModelConfig& cfg);

struct UncertaintyThresholds {
  double tau_w = 0.5;  // mean waypoint L1 error, meters
  double tau_s = 0.2;  // steer difference
};

// 1 iff the model action needs correction: mean waypoint L1 error > tau_w, or
// |steer difference| > tau_s, or the two actions disagree on braking.
int label_uncertainty(const ActionBundle& model_action, const ActionBundle& expert_action,
                      const UncertaintyThresholds& thresholds);

}  // namespace tokendrive::expert
