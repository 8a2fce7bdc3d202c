#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "tokendrive/types.hpp"

namespace tokendrive::sim {

struct InvalidRoute : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A driving route: an ordered polyline of sparse goal positions in the world
// frame. Consecutive goals must be at least 1 m apart.
struct Route {
  std::vector<Vec2> goals;
  double lane_width = 3.5;
  double length = 0.0;  // polyline length of goals
};

Route make_route(std::vector<Vec2> goals, double lane_width = 3.5);

// Plain-text route file: one "x y" pair per line, meters. '#' starts a comment.
Route load_route_file(const std::string& path, double lane_width = 3.5);
void save_route_file(const Route& route, const std::string& path);

struct RouteProjection {
  double s = 0.0;        // arc length of the projection
  double lateral = 0.0;  // unsigned distance from the polyline
  int segment = 0;
};

// Nearest point on the polyline; among equally near candidates the one with
// the largest arc length wins.
RouteProjection project(const Route& route, const Vec2& p);

// Position at arc length s (clamped to [0, length]).
Vec2 point_at(const Route& route, double s);
// Unit tangent of the segment containing arc length s.
Vec2 tangent_at(const Route& route, double s);

}  // namespace tokendrive::sim
