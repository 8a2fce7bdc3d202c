#include "tokendrive/expert/expert.hpp"

#include <algorithm>
#include <cmath>

namespace tokendrive::expert {

namespace {

double corner_speed(const sim::Route& route, double s0, const ExpertConfig& cfg) {
  double v = cfg.cruise_speed;
  const double step = 2.0;
  Vec2 prev = sim::tangent_at(route, s0);
  for (double d = step; d <= 14.0; d += step) {
    const Vec2 t = sim::tangent_at(route, s0 + d);
    const double cross = prev.x * t.y - prev.y * t.x;
    const double dot = std::clamp(prev.dot(t), -1.0, 1.0);
    const double dang = std::fabs(std::atan2(cross, dot));
    const double curvature = dang / step;
    if (curvature > 1e-6) v = std::min(v, std::sqrt(cfg.lat_accel_max / curvature));
    prev = t;
  }
  return v;
}

}  // namespace

double expert_plan_speed(const sim::WorldState& state, const sim::Route& route,
                         const sim::WorldConfig& world, const ExpertConfig& cfg) {
  const sim::RouteProjection proj = sim::project(route, state.ego.position());
  double v_target = corner_speed(route, proj.s, cfg);

  const double remaining = std::max(0.0, route.length - proj.s);
  v_target = std::min(v_target, std::sqrt(2.0 * cfg.brake_comfort * std::max(remaining - 1.0, 0.0)));

  // The expert's own hazard scan: the forward corridor, plus anticipation of
  // pedestrians that are mid-crossing but not yet inside it. Parked obstacles
  // beside the lane (off the route ribbon) are passable, not stop causes.
  double hazard_dist = std::numeric_limits<double>::infinity();
  const double half = route.lane_width * 0.5;
  for (const auto& a : state.actors) {
    const Vec2 rel = world_to_ego(state.ego, a.pose.position());
    if (rel.y <= 0.0 || rel.y > world.hazard_scan_range) continue;
    if (a.kind == sim::ActorKind::pedestrian && a.walking) {
      if (std::fabs(rel.x) <= 4.0) hazard_dist = std::min(hazard_dist, rel.y);
      continue;
    }
    if (std::fabs(rel.x) > half) continue;
    if (a.kind == sim::ActorKind::static_obstacle &&
        sim::project(route, a.pose.position()).lateral > half)
      continue;
    hazard_dist = std::min(hazard_dist, rel.y);
  }
  for (const auto& l : state.lights) {
    if (l.phase != sim::LightPhase::RED) continue;
    const Vec2 rel = world_to_ego(state.ego, l.position);
    if (rel.y > 0.0 && rel.y <= world.hazard_scan_range && std::fabs(rel.x) <= half)
      hazard_dist = std::min(hazard_dist, rel.y);
  }
  const double v = state.ego_speed;
  const double stop_dist = v * v / (2.0 * cfg.brake_comfort) + cfg.stop_margin;
  if (hazard_dist < stop_dist) v_target = 0.0;
  return v_target;
}

ActionBundle expert_control(const sim::WorldState& state, const sim::Route& route,
                            const sim::WorldConfig& world, const ExpertConfig& cfg) {
  const sim::RouteProjection proj = sim::project(route, state.ego.position());
  const double v = state.ego_speed;
  const double v_target = expert_plan_speed(state, route, world, cfg);

  // Pure pursuit on the route centerline.
  const double ld = std::clamp(cfg.lookahead_gain * v, cfg.lookahead_min, cfg.lookahead_max);
  const Vec2 aim = world_to_ego(state.ego, sim::point_at(route, proj.s + ld));
  const double alpha = std::atan2(aim.x, aim.y);
  const double curvature = 2.0 * std::sin(alpha) / ld;
  const double steer_angle = std::atan(curvature * world.vehicle.wheelbase);

  ActionBundle out;
  out.control.steer = std::clamp(steer_angle / world.vehicle.max_steer, -1.0, 1.0);

  const double err = v_target - v;
  if (err > cfg.speed_deadband) {
    out.control.throttle = std::clamp(cfg.throttle_gain * err, 0.0, 1.0);
    out.control.brake = 0.0;
  } else if (err < -cfg.speed_deadband) {
    out.control.throttle = 0.0;
    out.control.brake = std::clamp(cfg.brake_gain * -err, 0.0, 1.0);
  }

  for (int k = 1; k <= 4; ++k) {
    const Vec2 p = sim::point_at(route, proj.s + v_target * cfg.waypoint_dt * k);
    out.waypoints[k - 1] = world_to_ego(state.ego, p);
  }
  return out;
}

ActionBundle scripted_model_action(const ActionBundle& expert_action, double hazard_dist,
                                   Rng& rng, const ScriptedModelConfig& cfg) {
  const double turn = std::fabs(expert_action.control.steer);
  const double hazard_prox =
      std::isinf(hazard_dist) ? 0.0 : std::max(0.0, 1.0 - hazard_dist / 20.0);
  const double severity = std::clamp(cfg.base_severity + 0.8 * turn + 0.6 * hazard_prox, 0.0, 1.0);

  ActionBundle m = expert_action;
  for (auto& wp : m.waypoints) {
    wp.x += rng.normal() * cfg.wp_noise * severity;
    wp.y += rng.normal() * cfg.wp_noise * severity;
  }
  m.control.steer =
      std::clamp(m.control.steer + rng.normal() * cfg.steer_noise * severity, -1.0, 1.0);
  if (rng.uniform() < cfg.flip_prob * severity) {
    if (m.control.brake > 0.5) {
      m.control.brake = 0.0;
      m.control.throttle = 0.7;
    } else {
      m.control.throttle = 0.0;
      m.control.brake = 1.0;
    }
  }
  return m;
}

int label_uncertainty(const ActionBundle& model_action, const ActionBundle& expert_action,
                      const UncertaintyThresholds& thresholds) {
  // mean per-waypoint error, Euclidean so the label is invariant under a
  // joint rigid transform of both waypoint sets
  double err = 0.0;
  for (int i = 0; i < 4; ++i)
    err += (model_action.waypoints[i] - expert_action.waypoints[i]).norm();
  err /= 4.0;
  if (err > thresholds.tau_w) return 1;
  if (std::fabs(model_action.control.steer - expert_action.control.steer) > thresholds.tau_s)
    return 1;
  if ((model_action.control.brake > 0.5) != (expert_action.control.brake > 0.5)) return 1;
  return 0;
}

}  // namespace tokendrive::expert
