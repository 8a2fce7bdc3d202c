#include "tokendrive/sim/route.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace tokendrive::sim {

Route make_route(std::vector<Vec2> goals, double lane_width) {
  if (goals.size() < 2) throw InvalidRoute("route needs at least 2 goals");
  double length = 0.0;
  for (size_t i = 1; i < goals.size(); ++i) {
    const double d = (goals[i] - goals[i - 1]).norm();
    if (d < 1.0) throw InvalidRoute("consecutive goals closer than 1 m");
    length += d;
  }
  Route r;
  r.goals = std::move(goals);
  r.lane_width = lane_width;
  r.length = length;
  return r;
}

Route load_route_file(const std::string& path, double lane_width) {
  std::ifstream in(path);
  if (!in) throw InvalidRoute("cannot open route file: " + path);
  std::vector<Vec2> goals;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double x, y;
    if (ls >> x >> y) goals.push_back({x, y});
  }
  return make_route(std::move(goals), lane_width);
}

void save_route_file(const Route& route, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidRoute("cannot write route file: " + path);
  char buf[80];
  for (const auto& g : route.goals) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g\n", g.x, g.y);
    out << buf;
  }
}

RouteProjection project(const Route& route, const Vec2& p) {
  RouteProjection best;
  best.lateral = std::numeric_limits<double>::infinity();
  double s_base = 0.0;
  for (size_t i = 0; i + 1 < route.goals.size(); ++i) {
    const Vec2 a = route.goals[i];
    const Vec2 b = route.goals[i + 1];
    const Vec2 ab = b - a;
    const double len2 = ab.dot(ab);
    double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Vec2 q = a + ab * t;
    const double d = (p - q).norm();
    const double seg_len = std::sqrt(len2);
    const double s = s_base + t * seg_len;
    // strictly-closer wins; ties go to the furthest arc length
    if (d < best.lateral - 1e-12) {
      best.lateral = d;
      best.s = s;
      best.segment = static_cast<int>(i);
    } else if (d <= best.lateral + 1e-12 && s > best.s) {
      best.lateral = std::min(best.lateral, d);
      best.s = s;
      best.segment = static_cast<int>(i);
    }
    s_base += seg_len;
  }
  return best;
}

Vec2 point_at(const Route& route, double s) {
  s = std::clamp(s, 0.0, route.length);
  double s_base = 0.0;
  for (size_t i = 0; i + 1 < route.goals.size(); ++i) {
    const Vec2 a = route.goals[i];
    const Vec2 b = route.goals[i + 1];
    const double seg_len = (b - a).norm();
    if (s <= s_base + seg_len || i + 2 == route.goals.size()) {
      const double t = seg_len > 0 ? std::clamp((s - s_base) / seg_len, 0.0, 1.0) : 0.0;
      return a + (b - a) * t;
    }
    s_base += seg_len;
  }
  return route.goals.back();
}

Vec2 tangent_at(const Route& route, double s) {
  s = std::clamp(s, 0.0, route.length);
  double s_base = 0.0;
  for (size_t i = 0; i + 1 < route.goals.size(); ++i) {
    const Vec2 a = route.goals[i];
    const Vec2 b = route.goals[i + 1];
    const double seg_len = (b - a).norm();
    if (s <= s_base + seg_len || i + 2 == route.goals.size()) {
      const Vec2 d = b - a;
      const double n = d.norm();
      return n > 0 ? d * (1.0 / n) : Vec2{1, 0};
    }
    s_base += seg_len;
  }
  return {1, 0};
}

}  // namespace tokendrive::sim
