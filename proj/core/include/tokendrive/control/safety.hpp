#pragma once

#include <array>
#include <limits>

#include "tokendrive/types.hpp"

namespace tokendrive::ctrl {

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
};

struct PidState {
  double integral = 0.0;
  double prev_error = 0.0;
  bool has_prev = false;
};

// One PID update; the integrator is clamped to +/- windup.
double pid_step(const PidGains& gains, PidState& state, double error, double dt, double windup);

struct ControlConfig {
  PidGains lateral{0.9, 0.05, 0.3};
  PidGains longitudinal{0.5, 0.05, 0.0};
  double windup = 2.0;
  double dt = 0.5;                  // matches the expert waypoint spacing
  double desired_speed_scale = 0.9;
  double stop_speed = 0.4;          // below this desired speed: full brake
};

// Lateral + longitudinal PID state for one agent. Not shareable across
// concurrently driven routes.
struct PidPair {
  PidState lateral;
  PidState longitudinal;
};

struct WaypointControl {
  Control control;
  bool degenerate = false;  // all four waypoints coincide; full brake returned
};

// PID conversion from predicted ego-frame waypoints to a control triple.
// Steering tracks the aim point (mean of the first two waypoints);
// longitudinal control tracks the speed implied by their spacing.
WaypointControl waypoints_to_control(const std::array<Vec2, 4>& waypoints,
                                     const DriveStatus& status, PidPair& state,
                                     const ControlConfig& config);

enum class LongitudinalDisagreement { none, throttle_vs_brake };

struct ConflictReport {
  double steer_delta = 0.0;  // parsed.steer - derived.steer
  LongitudinalDisagreement longitudinal = LongitudinalDisagreement::none;
  bool conflicted = false;
};

// conflicted iff |steer_delta| > tau_c or one control brakes hard while the
// other accelerates hard.
ConflictReport conflict(const Control& parsed, const Control& derived, double tau_c);

struct SafetyConfig {
  double brake_max = 8.0;  // m/s^2, matches the vehicle model
  double margin = 2.0;     // meters kept clear of the hazard
};

struct EnvelopeResult {
  Control control;
  bool violation = false;
  double safety_loss = 0.0;  // max(0, speed - v_safe)^2
  double v_safe = std::numeric_limits<double>::infinity();
};

// Desk-scale safety envelope: v_safe = sqrt(2 b (d - margin)); above it the
// control is overridden to full brake.
EnvelopeResult safety_envelope(const Control& control, double hazard_dist, double speed,
                               const SafetyConfig& config);

}  // namespace tokendrive::ctrl
