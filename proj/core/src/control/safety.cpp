#include "tokendrive/control/safety.hpp"

#include <algorithm>
#include <cmath>

namespace tokendrive::ctrl {

double pid_step(const PidGains& gains, PidState& state, double error, double dt, double windup) {
  state.integral = std::clamp(state.integral + error * dt, -windup, windup);
  const double derivative = state.has_prev ? (error - state.prev_error) / dt : 0.0;
  state.prev_error = error;
  state.has_prev = true;
  return gains.kp * error + gains.ki * state.integral + gains.kd * derivative;
}

WaypointControl waypoints_to_control(const std::array<Vec2, 4>& waypoints,
                                     const DriveStatus& status, PidPair& state,
                                     const ControlConfig& config) {
  WaypointControl out;
  bool all_equal = true;
  for (int i = 1; i < 4; ++i) all_equal &= waypoints[i] == waypoints[0];
  if (all_equal) {
    out.degenerate = true;
    out.control = {0.0, 0.0, 1.0};
    return out;
  }

  // Lateral: PID on the bearing to the aim point (ego frame, x lateral-left).
  const Vec2 aim = (waypoints[0] + waypoints[1]) * 0.5;
  const double heading_error = std::atan2(aim.x, aim.y);
  const double steer = pid_step(config.lateral, state.lateral, heading_error, config.dt, config.windup);
  out.control.steer = std::clamp(steer, -1.0, 1.0);

  // Longitudinal: track the speed implied by the first waypoint gap.
  const double desired = config.desired_speed_scale * (waypoints[1] - waypoints[0]).norm() / config.dt;
  const double u =
      pid_step(config.longitudinal, state.longitudinal, desired - status.speed, config.dt, config.windup);
  if (desired < config.stop_speed) {
    out.control.throttle = 0.0;
    out.control.brake = 1.0;
  } else if (u >= 0.0) {
    out.control.throttle = std::clamp(u, 0.0, 1.0);
    out.control.brake = 0.0;
  } else {
    out.control.throttle = 0.0;
    out.control.brake = std::clamp(-u, 0.0, 1.0);
  }
  return out;
}

ConflictReport conflict(const Control& parsed, const Control& derived, double tau_c) {
  ConflictReport r;
  r.steer_delta = parsed.steer - derived.steer;
  const bool tvb = (parsed.brake > 0.5 && derived.throttle > 0.5) ||
                   (parsed.throttle > 0.5 && derived.brake > 0.5);
  r.longitudinal = tvb ? LongitudinalDisagreement::throttle_vs_brake : LongitudinalDisagreement::none;
  r.conflicted = std::fabs(r.steer_delta) > tau_c || tvb;
  return r;
}

EnvelopeResult safety_envelope(const Control& control, double hazard_dist, double speed,
                               const SafetyConfig& config) {
  EnvelopeResult out;
  out.control = control;
  if (std::isinf(hazard_dist)) return out;
  out.v_safe = std::sqrt(2.0 * config.brake_max * std::max(hazard_dist - config.margin, 0.0));
  const double over = speed - out.v_safe;
  if (over > 0.0) {
    out.violation = true;
    out.safety_loss = over * over;
    out.control.throttle = 0.0;
    out.control.brake = 1.0;
  }
  return out;
}

}  // namespace tokendrive::ctrl
