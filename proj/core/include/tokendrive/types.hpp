#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace tokendrive {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::sqrt(x * x + y * y); }
  double l1() const { return std::fabs(x) + std::fabs(y); }
  bool operator==(const Vec2& o) const { return x == o.x && y == o.y; }
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, CCW positive, in [-pi, pi)

  Vec2 position() const { return {x, y}; }
};

inline double wrap_angle(double a) {
  // into [-pi, pi)
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  a = std::fmod(a + 3.14159265358979323846, kTwoPi);
  if (a < 0) a += kTwoPi;
  return a - 3.14159265358979323846;
}

// World point -> ego frame. Ego frame convention used throughout: x is the
// lateral axis (left positive), y is the forward axis.
inline Vec2 world_to_ego(const Pose& ego, const Vec2& p) {
  const double dx = p.x - ego.x;
  const double dy = p.y - ego.y;
  const double ch = std::cos(ego.heading);
  const double sh = std::sin(ego.heading);
  return {-sh * dx + ch * dy, ch * dx + sh * dy};
}

inline Vec2 ego_to_world(const Pose& ego, const Vec2& p) {
  const double ch = std::cos(ego.heading);
  const double sh = std::sin(ego.heading);
  return {ego.x + ch * p.y - sh * p.x, ego.y + sh * p.y + ch * p.x};
}

struct Control {
  double steer = 0.0;     // [-1, 1], positive steers left
  double throttle = 0.0;  // [0, 1]
  double brake = 0.0;     // [0, 1]

  static Control clamped(double s, double t, double b) {
    return {std::clamp(s, -1.0, 1.0), std::clamp(t, 0.0, 1.0), std::clamp(b, 0.0, 1.0)};
  }
};

struct DriveStatus {
  double speed = 0.0;  // m/s, >= 0
  double throttle = 0.0;
  double brake = 0.0;
  Vec2 position;       // world frame, meters
  double heading = 0.0;
};

struct ActionBundle {
  // Four future ego positions in the ego frame, 0.5 s apart.
  std::array<Vec2, 4> waypoints{};
  Control control;

  bool operator==(const ActionBundle& o) const {
    return waypoints == o.waypoints && control.steer == o.control.steer &&
           control.throttle == o.control.throttle && control.brake == o.control.brake;
  }
};

enum class LightState { NONE, RED, GREEN };

// Scene summary serialized into the PERCEPTION span of a driving sentence.
struct PerceptionDescription {
  struct SeenActor {
    Vec2 rel;      // ego frame (lateral, forward)
    double speed;  // m/s
  };
  std::vector<SeenActor> vehicles;  // nearest first, at most 4
  LightState light = LightState::NONE;
  double hazard_dist = std::numeric_limits<double>::infinity();
};

}  // namespace tokendrive
