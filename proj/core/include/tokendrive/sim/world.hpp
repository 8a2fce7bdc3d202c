#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tokendrive/rng.hpp"
#include "tokendrive/sim/route.hpp"
#include "tokendrive/tensor.hpp"
#include "tokendrive/types.hpp"

namespace tokendrive::sim {

enum class ActorKind { vehicle, pedestrian, static_obstacle };
enum class LightPhase { RED, GREEN };

struct Actor {
  ActorKind kind = ActorKind::vehicle;
  Pose pose;
  double speed = 0.0;

  // Script bookkeeping. Lane followers track an arc position on the route;
  // pedestrians wait at their spawn point until the ego comes within
  // trigger_radius, then cross along walk_dir for crossing_length meters.
  double route_s = 0.0;
  Vec2 walk_dir;
  double trigger_radius = 0.0;
  double crossing_length = 0.0;
  double walked = 0.0;
  bool walking = false;

  long last_collision_tick = -1000000;  // infraction de-duplication
};

struct TrafficLight {
  Vec2 position;
  double route_s = 0.0;
  LightPhase phase = LightPhase::GREEN;
  double phase_timer = 0.0;  // seconds until the next flip
  double red_duration = 6.0;
  double green_duration = 6.0;
  long last_cross_tick = -1000000;
};

enum class InfractionKind {
  collision_pedestrian,
  collision_vehicle,
  collision_static,
  red_light,
  route_deviation,
  timeout,
};

const char* infraction_name(InfractionKind k);
std::optional<InfractionKind> infraction_from_name(const std::string& name);

struct InfractionEvent {
  InfractionKind kind;
  long tick = 0;
  Vec2 position;
};

struct VehicleModel {
  double wheelbase = 2.5;                    // m
  double max_steer = 0.6108652381980153;     // 35 degrees, radians
  double accel_max = 3.0;                    // m/s^2 at full throttle
  double brake_max = 8.0;                    // m/s^2 at full brake
  double drag = 0.1;                         // 1/s
};

struct SensorConfig {
  int cam_h = 40, cam_w = 176, cam_c = 3;
  double cam_fov_deg = 120.0;
  double cam_range = 48.0;
  double cam_near = 2.0;
  int bev_h = 64, bev_w = 64, bev_c = 4;
  double bev_extent = 32.0;  // meters covered edge to edge, ego centered
};

// How many of each scripted hazard create_world spawns for a route.
struct ScenarioConfig {
  int lead_vehicles = 0;
  int pedestrians = 0;
  int lights = 0;
  int statics = 0;
  double lead_speed = 3.0;  // m/s
};

struct WorldConfig {
  VehicleModel vehicle;
  SensorConfig sensors;
  ScenarioConfig scenario;
  double dt = 0.1;
  double ego_radius = 0.9;
  double vehicle_radius = 0.9;
  double pedestrian_radius = 0.3;
  double static_radius = 0.6;
  double deviation_limit = 5.25;     // lateral meters before route_deviation
  double hazard_scan_range = 64.0;   // forward corridor scan limit
  double timeout_speed = 5.0;        // m/s, timeout = factor * length / speed
  double timeout_factor = 3.0;
  int infraction_window_ticks = 20;  // 2 s at dt = 0.1
};

struct WorldState {
  long tick = 0;
  Pose ego;
  double ego_speed = 0.0;
  std::vector<Actor> actors;
  std::vector<TrafficLight> lights;
  uint64_t rng_seed = 0;
  long last_deviation_tick = -1000000;
};

struct ObservationFrame {
  Tensor3 camera_grid;  // perspective-binned forward raster
  Tensor3 bev_grid;     // ego-centered, heading up
  DriveStatus status;
};

long timeout_ticks(const WorldConfig& config, const Route& route);

// Ego at the first goal facing the second; scripted actors and lights placed
// deterministically from the seed. Throws InvalidRoute for < 2 goals.
WorldState create_world(const WorldConfig& config, const Route& route, uint64_t seed);

struct StepResult {
  WorldState state;
  ObservationFrame frame;
  std::vector<InfractionEvent> events;
};

// Advances the world by dt. Ego motion follows the kinematic bicycle model;
// scripted actors and light phases advance; infractions are evaluated after
// the move. Control components are clamped, dt must be in (0, 0.5].
StepResult step(const WorldState& state, const Route& route, const WorldConfig& config,
                const Control& control, double dt);

// Renders the sensor rasters for a state without advancing it. `last_control`
// fills the throttle/brake slots of the reported status.
ObservationFrame observe(const WorldState& state, const Route& route, const WorldConfig& config,
                         const Control& last_control);

// Fraction of route arc length covered by the ego's projection, in [0, 1].
double route_progress(const WorldState& state, const Route& route);

enum class HazardKind { none, vehicle, pedestrian, static_obstacle, red_light };

const char* hazard_name(HazardKind k);

struct Hazard {
  double distance = std::numeric_limits<double>::infinity();  // longitudinal, m
  HazardKind kind = HazardKind::none;
};

// Minimum longitudinal distance to any actor or red light inside the forward
// corridor of width lane_width. (+inf, none) when clear.
Hazard nearest_hazard(const WorldState& state, const Route& route, const WorldConfig& config);

// Scene summary for the PERCEPTION span: up to four nearest actors within the
// waypoint grid range, the governing light state, and the hazard distance.
PerceptionDescription describe_scene(const WorldState& state, const Route& route,
                                     const WorldConfig& config);

}  // namespace tokendrive::sim
