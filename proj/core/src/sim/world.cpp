#include "tokendrive/sim/world.hpp"

#include <algorithm>
#include <cmath>

namespace tokendrive::sim {

const char* infraction_name(InfractionKind k) {
  switch (k) {
    case InfractionKind::collision_pedestrian: return "collision_pedestrian";
    case InfractionKind::collision_vehicle: return "collision_vehicle";
    case InfractionKind::collision_static: return "collision_static";
    case InfractionKind::red_light: return "red_light";
    case InfractionKind::route_deviation: return "route_deviation";
    case InfractionKind::timeout: return "timeout";
  }
  return "unknown";
}

std::optional<InfractionKind> infraction_from_name(const std::string& name) {
  for (InfractionKind k : {InfractionKind::collision_pedestrian, InfractionKind::collision_vehicle,
                           InfractionKind::collision_static, InfractionKind::red_light,
                           InfractionKind::route_deviation, InfractionKind::timeout}) {
    if (name == infraction_name(k)) return k;
  }
  return std::nullopt;
}

const char* hazard_name(HazardKind k) {
  switch (k) {
    case HazardKind::none: return "none";
    case HazardKind::vehicle: return "vehicle";
    case HazardKind::pedestrian: return "pedestrian";
    case HazardKind::static_obstacle: return "static";
    case HazardKind::red_light: return "red_light";
  }
  return "unknown";
}

long timeout_ticks(const WorldConfig& config, const Route& route) {
  const double seconds = config.timeout_factor * route.length / config.timeout_speed;
  return static_cast<long>(std::ceil(seconds / config.dt));
}

WorldState create_world(const WorldConfig& config, const Route& route, uint64_t seed) {
  if (route.goals.size() < 2) throw InvalidRoute("route needs at least 2 goals");
  WorldState st;
  st.rng_seed = seed;
  st.tick = 0;
  const Vec2 dir = route.goals[1] - route.goals[0];
  st.ego = {route.goals[0].x, route.goals[0].y, std::atan2(dir.y, dir.x)};
  st.ego_speed = 0.0;

  Rng rng(seed ^ 0x5bd1e9955bd1e995ull);

  // Lead vehicles: constant-velocity lane followers spawned ahead of the ego.
  for (int i = 0; i < config.scenario.lead_vehicles; ++i) {
    Actor a;
    a.kind = ActorKind::vehicle;
    a.speed = config.scenario.lead_speed * rng.uniform(0.8, 1.2);
    a.route_s = std::min(route.length * 0.9, 22.0 + 24.0 * i + rng.uniform(0.0, 6.0));
    const Vec2 p = point_at(route, a.route_s);
    const Vec2 t = tangent_at(route, a.route_s);
    a.pose = {p.x, p.y, std::atan2(t.y, t.x)};
    st.actors.push_back(a);
  }

  // Pedestrians wait beside the lane and cross when the ego gets close.
  for (int i = 0; i < config.scenario.pedestrians; ++i) {
    Actor a;
    a.kind = ActorKind::pedestrian;
    const double frac = config.scenario.pedestrians == 1
                            ? 0.45
                            : 0.3 + 0.4 * i / std::max(1, config.scenario.pedestrians - 1);
    const double s = route.length * frac + rng.uniform(-4.0, 4.0);
    const Vec2 p = point_at(route, s);
    const Vec2 t = tangent_at(route, s);
    const Vec2 left{-t.y, t.x};
    const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
    const double offset = route.lane_width * 0.5 + 1.2;
    a.pose = {p.x + side * offset * left.x, p.y + side * offset * left.y,
              std::atan2(-side * left.y, -side * left.x)};
    a.walk_dir = left * -side;
    a.trigger_radius = 14.0 + rng.uniform(0.0, 4.0);
    a.crossing_length = route.lane_width + 2.4;
    a.speed = 0.0;
    st.actors.push_back(a);
  }

  // Parked obstacles sit just outside the hazard corridor: the expert clears
  // them, a wobbling policy can clip them.
  for (int i = 0; i < config.scenario.statics; ++i) {
    Actor a;
    a.kind = ActorKind::static_obstacle;
    const double s = route.length * (0.25 + 0.5 * rng.uniform());
    const Vec2 p = point_at(route, s);
    const Vec2 t = tangent_at(route, s);
    const Vec2 left{-t.y, t.x};
    const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
    const double offset = route.lane_width * 0.5 + 0.35;
    a.pose = {p.x + side * offset * left.x, p.y + side * offset * left.y, std::atan2(t.y, t.x)};
    st.actors.push_back(a);
  }

  for (int i = 0; i < config.scenario.lights; ++i) {
    TrafficLight l;
    const double frac = config.scenario.lights == 1
                            ? 0.5
                            : 0.35 + 0.4 * i / std::max(1, config.scenario.lights - 1);
    l.route_s = route.length * frac + rng.uniform(-5.0, 5.0);
    l.position = point_at(route, l.route_s);
    l.phase = rng.uniform() < 0.5 ? LightPhase::RED : LightPhase::GREEN;
    l.phase_timer = rng.uniform(2.0, l.phase == LightPhase::RED ? l.red_duration : l.green_duration);
    st.lights.push_back(l);
  }
  return st;
}

namespace {

double collision_radius(const WorldConfig& config, ActorKind kind) {
  switch (kind) {
    case ActorKind::vehicle: return config.vehicle_radius;
    case ActorKind::pedestrian: return config.pedestrian_radius;
    case ActorKind::static_obstacle: return config.static_radius;
  }
  return config.vehicle_radius;
}

InfractionKind collision_kind(ActorKind kind) {
  switch (kind) {
    case ActorKind::vehicle: return InfractionKind::collision_vehicle;
    case ActorKind::pedestrian: return InfractionKind::collision_pedestrian;
    case ActorKind::static_obstacle: return InfractionKind::collision_static;
  }
  return InfractionKind::collision_vehicle;
}

// Paint helpers for the synthetic rasters. Semantic channel codes.
constexpr double kSemRoad = 0.2;
constexpr double kSemStatic = 0.4;
constexpr double kSemVehicle = 0.6;
constexpr double kSemPedestrian = 0.8;
constexpr double kSemLightGreen = 0.5;
constexpr double kSemLightRed = 1.0;

double semantic_code(ActorKind kind) {
  switch (kind) {
    case ActorKind::vehicle: return kSemVehicle;
    case ActorKind::pedestrian: return kSemPedestrian;
    case ActorKind::static_obstacle: return kSemStatic;
  }
  return kSemVehicle;
}

}  // namespace

ObservationFrame observe(const WorldState& state, const Route& route, const WorldConfig& config,
                         const Control& last_control) {
  const SensorConfig& sc = config.sensors;
  ObservationFrame frame;
  frame.camera_grid = Tensor3(sc.cam_h, sc.cam_w, sc.cam_c);
  frame.bev_grid = Tensor3(sc.bev_h, sc.bev_w, sc.bev_c);
  frame.status.speed = state.ego_speed;
  frame.status.throttle = last_control.throttle;
  frame.status.brake = last_control.brake;
  frame.status.position = state.ego.position();
  frame.status.heading = state.ego.heading;

  const double fov = sc.cam_fov_deg * 3.14159265358979323846 / 180.0;
  // Depth buffer so the nearest object wins each camera column block.
  std::vector<double> depth(static_cast<size_t>(sc.cam_h) * sc.cam_w,
                            std::numeric_limits<double>::infinity());

  auto paint_camera = [&](const Vec2& world, double radius, double sem, double rel_speed) {
    const Vec2 rel = world_to_ego(state.ego, world);  // x lateral-left, y forward
    const double d = rel.norm();
    if (rel.y <= 0.3 || d > sc.cam_range) return;
    const double bearing = std::atan2(-rel.x, rel.y);  // right positive for columns
    if (std::fabs(bearing) > fov * 0.5) return;
    const int col = std::clamp(static_cast<int>((bearing / fov + 0.5) * sc.cam_w), 0, sc.cam_w - 1);
    const double inv = std::clamp(sc.cam_near / d, 0.0, 0.999);
    const int row = std::clamp(sc.cam_h - 1 - static_cast<int>(inv * sc.cam_h), 0, sc.cam_h - 1);
    const int half_c = std::clamp(static_cast<int>(std::atan2(radius, d) / fov * sc.cam_w), 1, sc.cam_w / 4);
    const int half_r = std::max(1, half_c / 2);
    for (int r = std::max(0, row - half_r); r <= std::min(sc.cam_h - 1, row + half_r); ++r) {
      for (int c = std::max(0, col - half_c); c <= std::min(sc.cam_w - 1, col + half_c); ++c) {
        double& z = depth[static_cast<size_t>(r) * sc.cam_w + c];
        if (d >= z) continue;
        z = d;
        frame.camera_grid.at(r, c, 0) = 1.0;
        if (sc.cam_c > 1) frame.camera_grid.at(r, c, 1) = sem;
        if (sc.cam_c > 2) frame.camera_grid.at(r, c, 2) = std::clamp(rel_speed / 10.0, -1.0, 1.0);
      }
    }
  };

  auto paint_bev = [&](const Vec2& world, double radius, double sem, double rel_speed, int channel_sem) {
    const Vec2 rel = world_to_ego(state.ego, world);
    const double cell = sc.bev_extent / sc.bev_w;
    const int ir = static_cast<int>(std::floor((sc.bev_extent * 0.5 - rel.y) / cell));
    const int ic = static_cast<int>(std::floor((sc.bev_extent * 0.5 - rel.x) / cell));
    const int rad = std::max(0, static_cast<int>(std::ceil(radius / cell)) - 1);
    for (int r = ir - rad; r <= ir + rad; ++r) {
      for (int c = ic - rad; c <= ic + rad; ++c) {
        if (r < 0 || r >= sc.bev_h || c < 0 || c >= sc.bev_w) continue;
        if (channel_sem == 3) {
          frame.bev_grid.at(r, c, 3) = std::max(frame.bev_grid.at(r, c, 3), sem);
        } else {
          frame.bev_grid.at(r, c, 0) = 1.0;
          if (sc.bev_c > 1) frame.bev_grid.at(r, c, 1) = std::clamp(rel_speed / 10.0, -1.0, 1.0);
          if (sc.bev_c > 2) frame.bev_grid.at(r, c, 2) = sem;
        }
      }
    }
  };

  // Route centerline: one sample per meter, drawn into the camera road pixels
  // and the BEV overlay channel.
  for (double s = 0.0; s <= route.length; s += 1.0) {
    const Vec2 p = point_at(route, s);
    const Vec2 rel = world_to_ego(state.ego, p);
    if (rel.y > 0.3 && rel.norm() <= sc.cam_range) {
      const double bearing = std::atan2(-rel.x, rel.y);
      if (std::fabs(bearing) <= fov * 0.5) {
        const int col = std::clamp(static_cast<int>((bearing / fov + 0.5) * sc.cam_w), 0, sc.cam_w - 1);
        const double inv = std::clamp(sc.cam_near / rel.norm(), 0.0, 0.999);
        const int row = std::clamp(sc.cam_h - 1 - static_cast<int>(inv * sc.cam_h), 0, sc.cam_h - 1);
        if (frame.camera_grid.at(row, col, 0) == 0.0) {
          if (sc.cam_c > 1) frame.camera_grid.at(row, col, 1) = kSemRoad;
        }
      }
    }
    paint_bev(p, 0.4, 0.5, 0.0, 3);
  }

  for (const auto& a : state.actors) {
    const double radius = collision_radius(config, a.kind);
    paint_camera(a.pose.position(), radius, semantic_code(a.kind), a.speed - state.ego_speed);
    paint_bev(a.pose.position(), radius, semantic_code(a.kind), a.speed - state.ego_speed, 0);
  }
  for (const auto& l : state.lights) {
    const double sem = l.phase == LightPhase::RED ? kSemLightRed : kSemLightGreen;
    paint_camera(l.position, 0.5, sem, 0.0);
    paint_bev(l.position, 0.6, sem, 0.0, 3);
  }
  return frame;
}

StepResult step(const WorldState& state, const Route& route, const WorldConfig& config,
                const Control& control_in, double dt) {
  if (!(dt > 0.0 && dt <= 0.5)) dt = std::clamp(dt, 1e-6, 0.5);
  const Control control = Control::clamped(control_in.steer, control_in.throttle, control_in.brake);

  StepResult out;
  WorldState& st = out.state;
  st = state;

  const double s_prev = project(route, state.ego.position()).s;

  // Kinematic bicycle update, in the documented order: position with the old
  // speed and heading, then heading, then speed.
  const VehicleModel& vm = config.vehicle;
  const double v = state.ego_speed;
  st.ego.x += v * std::cos(state.ego.heading) * dt;
  st.ego.y += v * std::sin(state.ego.heading) * dt;
  st.ego.heading = wrap_angle(state.ego.heading +
                              v / vm.wheelbase * std::tan(vm.max_steer * control.steer) * dt);
  st.ego_speed = std::max(0.0, v + (vm.accel_max * control.throttle -
                                    vm.brake_max * control.brake - vm.drag * v) * dt);

  // Scripted actors.
  for (auto& a : st.actors) {
    switch (a.kind) {
      case ActorKind::vehicle: {
        // lane followers keep driving past the route end along the final
        // tangent so they never block the goal
        a.route_s += a.speed * dt;
        if (a.route_s <= route.length) {
          const Vec2 p = point_at(route, a.route_s);
          const Vec2 t = tangent_at(route, a.route_s);
          a.pose = {p.x, p.y, std::atan2(t.y, t.x)};
        } else {
          const Vec2 t = tangent_at(route, route.length);
          const Vec2 p = route.goals.back() + t * (a.route_s - route.length);
          a.pose = {p.x, p.y, std::atan2(t.y, t.x)};
        }
        break;
      }
      case ActorKind::pedestrian: {
        if (!a.walking && a.walked == 0.0) {
          const double dist = (st.ego.position() - a.pose.position()).norm();
          if (dist < a.trigger_radius) {
            a.walking = true;
            a.speed = 1.2;
          }
        }
        if (a.walking) {
          const double step_len = a.speed * dt;
          a.pose.x += a.walk_dir.x * step_len;
          a.pose.y += a.walk_dir.y * step_len;
          a.walked += step_len;
          if (a.walked >= a.crossing_length) {
            a.walking = false;
            a.speed = 0.0;
          }
        }
        break;
      }
      case ActorKind::static_obstacle:
        break;
    }
  }

  // Traffic lights.
  for (auto& l : st.lights) {
    l.phase_timer -= dt;
    while (l.phase_timer <= 0.0) {
      l.phase = l.phase == LightPhase::RED ? LightPhase::GREEN : LightPhase::RED;
      l.phase_timer += l.phase == LightPhase::RED ? l.red_duration : l.green_duration;
    }
  }

  st.tick = state.tick + 1;

  // Infractions, evaluated after the move, de-duplicated per (kind, actor,
  // window).
  const long window = config.infraction_window_ticks;
  for (auto& a : st.actors) {
    const double r = config.ego_radius + collision_radius(config, a.kind);
    if ((st.ego.position() - a.pose.position()).norm() < r) {
      if (st.tick - a.last_collision_tick >= window) {
        out.events.push_back({collision_kind(a.kind), st.tick, a.pose.position()});
        a.last_collision_tick = st.tick;
      }
    }
  }
  const RouteProjection proj = project(route, st.ego.position());
  for (auto& l : st.lights) {
    if (l.phase != LightPhase::RED) continue;
    // 1 s grace after the flip so a light turning red over the bumper does
    // not count against an agent that could not have stopped
    const double time_in_red = l.red_duration - l.phase_timer;
    if (time_in_red <= 1.0) continue;
    if (s_prev < l.route_s && proj.s >= l.route_s && proj.lateral <= route.lane_width) {
      if (st.tick - l.last_cross_tick >= window) {
        out.events.push_back({InfractionKind::red_light, st.tick, l.position});
        l.last_cross_tick = st.tick;
      }
    }
  }
  if (proj.lateral > config.deviation_limit) {
    if (st.tick - st.last_deviation_tick >= window) {
      out.events.push_back({InfractionKind::route_deviation, st.tick, st.ego.position()});
      st.last_deviation_tick = st.tick;
    }
  }
  if (st.tick == timeout_ticks(config, route)) {
    out.events.push_back({InfractionKind::timeout, st.tick, st.ego.position()});
  }

  out.frame = observe(st, route, config, control);
  return out;
}

double route_progress(const WorldState& state, const Route& route) {
  if (route.length <= 0) return 0.0;
  const double s = project(route, state.ego.position()).s;
  return std::clamp(s / route.length, 0.0, 1.0);
}

Hazard nearest_hazard(const WorldState& state, const Route& route, const WorldConfig& config) {
  Hazard best;
  const double half = route.lane_width * 0.5;
  auto consider = [&](const Vec2& world, HazardKind kind) {
    const Vec2 rel = world_to_ego(state.ego, world);
    if (rel.y <= 0.0 || rel.y > config.hazard_scan_range) return;
    if (std::fabs(rel.x) > half) return;
    if (rel.y < best.distance) best = {rel.y, kind};
  };
  for (const auto& a : state.actors) {
    HazardKind k = HazardKind::vehicle;
    if (a.kind == ActorKind::pedestrian) k = HazardKind::pedestrian;
    if (a.kind == ActorKind::static_obstacle) k = HazardKind::static_obstacle;
    consider(a.pose.position(), k);
  }
  for (const auto& l : state.lights) {
    if (l.phase == LightPhase::RED) consider(l.position, HazardKind::red_light);
  }
  return best;
}

PerceptionDescription describe_scene(const WorldState& state, const Route& route,
                                     const WorldConfig& config) {
  PerceptionDescription desc;
  struct Entry {
    double dist;
    PerceptionDescription::SeenActor seen;
  };
  std::vector<Entry> entries;
  for (const auto& a : state.actors) {
    const Vec2 rel = world_to_ego(state.ego, a.pose.position());
    if (std::fabs(rel.x) > 25.6 || std::fabs(rel.y) > 25.6) continue;
    entries.push_back({rel.norm(), {rel, a.speed}});
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.dist < b.dist; });
  for (size_t i = 0; i < entries.size() && i < 4; ++i) desc.vehicles.push_back(entries[i].seen);

  // The governing light: nearest one ahead in the corridor, regardless of
  // phase; NONE when out of range.
  double best = std::numeric_limits<double>::infinity();
  for (const auto& l : state.lights) {
    const Vec2 rel = world_to_ego(state.ego, l.position);
    if (rel.y <= 0.0 || rel.y > config.hazard_scan_range) continue;
    if (std::fabs(rel.x) > route.lane_width) continue;
    if (rel.y < best) {
      best = rel.y;
      desc.light = l.phase == LightPhase::RED ? LightState::RED : LightState::GREEN;
    }
  }
  desc.hazard_dist = nearest_hazard(state, route, config).distance;
  return desc;
}

}  // namespace tokendrive::sim
