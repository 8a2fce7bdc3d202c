#include <cmath>

#include "tokendrive/eval/runner.hpp"

namespace tokendrive::eval {

namespace {

// Polyline from segment (length, turn) pairs, recentered so world coordinates
// stay well inside the pos token grid.
sim::Route build_polyline(const std::vector<std::pair<double, double>>& segments,
                          double lane_width) {
  std::vector<Vec2> goals;
  Vec2 p{0, 0};
  double heading = 0.0;
  goals.push_back(p);
  for (const auto& [len, turn] : segments) {
    heading += turn;
    p = p + Vec2{std::cos(heading) * len, std::sin(heading) * len};
    goals.push_back(p);
  }
  Vec2 lo = goals[0], hi = goals[0];
  for (const auto& g : goals) {
    lo.x = std::min(lo.x, g.x);
    lo.y = std::min(lo.y, g.y);
    hi.x = std::max(hi.x, g.x);
    hi.y = std::max(hi.y, g.y);
  }
  const Vec2 center{(lo.x + hi.x) * 0.5, (lo.y + hi.y) * 0.5};
  for (auto& g : goals) g = g - center;
  return sim::make_route(std::move(goals), lane_width);
}

constexpr double kDeg = 3.14159265358979323846 / 180.0;

}  // namespace

expert::RouteScenario themed_route(int theme, uint64_t seed, const std::string& id) {
  Rng rng(seed ^ 0xc0ffee123ull);
  expert::RouteScenario rs;
  rs.id = id;
  std::vector<std::pair<double, double>> segs;
  switch (theme % 8) {
    case 0:  // straight
      for (int i = 0; i < 5; ++i) segs.push_back({20.0 + rng.uniform(-2, 2), 0.0});
      rs.hazard_free = true;
      break;
    case 1:  // gentle curves
      segs.push_back({16, 0});
      for (int i = 0; i < 6; ++i)
        segs.push_back({14.0 + rng.uniform(-2, 2), rng.uniform(-15, 15) * kDeg});
      rs.hazard_free = true;
      break;
    case 2: {  // two 90-degree turns
      const double dir = rng.uniform() < 0.5 ? 1.0 : -1.0;
      segs = {{26 + rng.uniform(-4, 4), 0},
              {14, dir * 45 * kDeg},
              {14, dir * 45 * kDeg},
              {26 + rng.uniform(-4, 4), 0},
              {14, -dir * 45 * kDeg},
              {14, -dir * 45 * kDeg},
              {20, 0}};
      rs.hazard_free = true;
      break;
    }
    case 3:  // s-curves plus a parked obstacle
      segs.push_back({14, 0});
      for (int i = 0; i < 5; ++i)
        segs.push_back({16.0, (i % 2 ? -1.0 : 1.0) * rng.uniform(30, 42) * kDeg});
      segs.push_back({14, 0});
      rs.scenario.statics = 1;
      break;
    case 4:  // traffic lights
      segs = {{26, 0}, {22, rng.uniform(-12, 12) * kDeg}, {26, 0}, {22, 0}};
      rs.scenario.lights = 2;
      break;
    case 5:  // pedestrian crossings
      segs = {{24, 0}, {24, rng.uniform(-10, 10) * kDeg}, {24, 0}, {20, 0}};
      rs.scenario.pedestrians = 2;
      break;
    case 6:  // lead traffic
      segs.push_back({18, 0});
      for (int i = 0; i < 5; ++i) segs.push_back({20.0, rng.uniform(-12, 12) * kDeg});
      rs.scenario.lead_vehicles = 2;
      break;
    case 7:  // mixed
      segs = {{22, 0},          {14, 45 * kDeg * (rng.uniform() < 0.5 ? 1 : -1)},
              {14, 0},          {20, rng.uniform(-10, 10) * kDeg},
              {22, 0},          {18, 0}};
      rs.scenario.lights = 1;
      rs.scenario.pedestrians = 1;
      rs.scenario.lead_vehicles = 1;
      break;
  }
  rs.route = build_polyline(segs, 3.5);
  return rs;
}

std::vector<expert::RouteScenario> builtin_collect_routes(uint64_t seed) {
  std::vector<expert::RouteScenario> out;
  for (int theme = 0; theme < 8; ++theme) {
    for (int k = 0; k < 6; ++k) {
      const uint64_t rseed = Rng(seed).fork(theme * 100 + k).next_u64();
      out.push_back(
          themed_route(theme, rseed, "t" + std::to_string(theme) + "-" + std::to_string(k)));
    }
  }
  return out;
}

std::vector<expert::RouteScenario> builtin_eval_routes(uint64_t seed) {
  const int themes[12] = {2, 2, 4, 4, 5, 5, 6, 6, 7, 7, 7, 1};
  std::vector<expert::RouteScenario> out;
  for (int i = 0; i < 12; ++i) {
    const uint64_t rseed = Rng(seed ^ 0xea17b3ull).fork(i).next_u64();
    out.push_back(themed_route(themes[i], rseed, "e" + std::to_string(i)));
  }
  return out;
}

}  // namespace tokendrive::eval
