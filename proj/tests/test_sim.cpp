#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "tokendrive/eval/runner.hpp"
#include "tokendrive/sim/trace.hpp"
#include "tokendrive/sim/world.hpp"

using namespace tokendrive;

namespace {

sim::Route straight_route(double length) {
  return sim::make_route({{-length / 2, 0}, {length / 2, 0}});
}

sim::WorldConfig default_config() { return sim::WorldConfig{}; }

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("create_world places ego at the first goal facing the second") {
  const auto route = sim::make_route({{0, 0}, {50, 0}});
  const auto st = sim::create_world(default_config(), route, 7);
  CHECK(st.ego.x == 0.0);
  CHECK(st.ego.y == 0.0);
  CHECK(st.ego.heading == doctest::Approx(0.0));
  CHECK(st.ego_speed == 0.0);
}

TEST_CASE("create_world is deterministic") {
  sim::WorldConfig cfg = default_config();
  cfg.scenario.lead_vehicles = 2;
  cfg.scenario.pedestrians = 1;
  cfg.scenario.lights = 2;
  const auto route = straight_route(120);
  const auto a = sim::create_world(cfg, route, 42);
  const auto b = sim::create_world(cfg, route, 42);
  REQUIRE(a.actors.size() == b.actors.size());
  for (size_t i = 0; i < a.actors.size(); ++i) {
    CHECK(a.actors[i].pose.x == b.actors[i].pose.x);
    CHECK(a.actors[i].pose.y == b.actors[i].pose.y);
    CHECK(a.actors[i].speed == b.actors[i].speed);
  }
  REQUIRE(a.lights.size() == b.lights.size());
  for (size_t i = 0; i < a.lights.size(); ++i) {
    CHECK(a.lights[i].phase == b.lights[i].phase);
    CHECK(a.lights[i].phase_timer == b.lights[i].phase_timer);
  }
}

TEST_CASE("create_world rejects a 1-goal route") {
  CHECK_THROWS_AS(sim::make_route({{0, 0}}), sim::InvalidRoute);
  sim::Route degenerate;
  degenerate.goals = {{0, 0}};
  CHECK_THROWS_AS(sim::create_world(default_config(), degenerate, 1), sim::InvalidRoute);
}

TEST_CASE("make_route rejects goals closer than 1 m") {
  CHECK_THROWS_AS(sim::make_route({{0, 0}, {0.5, 0}}), sim::InvalidRoute);
}

TEST_CASE("step advances position by v dt at zero steer") {
  const auto route = straight_route(200);
  const auto cfg = default_config();
  auto st = sim::create_world(cfg, route, 1);
  st.ego_speed = 1.0;
  const auto r = sim::step(st, route, cfg, {0.0, 0.0, 0.0}, 0.1);
  CHECK(r.state.ego.x == doctest::Approx(st.ego.x + 0.10).epsilon(1e-12));
  CHECK(r.state.ego.y == doctest::Approx(st.ego.y).epsilon(1e-12));
}

TEST_CASE("speed is non-increasing when coasting") {
  const auto route = straight_route(200);
  const auto cfg = default_config();
  auto st = sim::create_world(cfg, route, 1);
  st.ego_speed = 8.0;
  double prev = st.ego_speed;
  for (int i = 0; i < 50; ++i) {
    const auto r = sim::step(st, route, cfg, {0.2, 0.0, 0.0}, 0.1);
    st = r.state;
    CHECK(st.ego_speed <= prev + 1e-12);
    prev = st.ego_speed;
  }
  CHECK(st.ego_speed < 8.0);
  CHECK(st.ego_speed >= 0.0);
}

TEST_CASE("overlapping a pedestrian emits exactly one collision event per window") {
  const auto route = straight_route(100);
  sim::WorldConfig cfg = default_config();
  auto st = sim::create_world(cfg, route, 1);
  sim::Actor ped;
  ped.kind = sim::ActorKind::pedestrian;
  ped.pose = {st.ego.x + 0.5, st.ego.y, 0.0};
  st.actors.push_back(ped);

  int events = 0;
  // five consecutive overlapping ticks must produce a single event
  for (int i = 0; i < 5; ++i) {
    const auto r = sim::step(st, route, cfg, {0, 0, 0}, 0.1);
    st = r.state;
    for (const auto& e : r.events)
      if (e.kind == sim::InfractionKind::collision_pedestrian) ++events;
  }
  CHECK(events == 1);
}

TEST_CASE("100 steps with fixed controls replay bit-identically") {
  sim::WorldConfig cfg = default_config();
  cfg.scenario.lead_vehicles = 1;
  cfg.scenario.pedestrians = 1;
  cfg.scenario.lights = 1;
  const auto route = straight_route(150);

  auto run_once = [&] {
    auto st = sim::create_world(cfg, route, 99);
    sim::Trace trace;
    trace.route_id = "replay";
    trace.goals = route.goals;
    for (int i = 0; i < 100; ++i) {
      const auto r = sim::step(st, route, cfg, {0.05, 0.4, 0.0}, 0.1);
      st = r.state;
      sim::TraceRecord rec;
      rec.tick = st.tick;
      rec.ego = st.ego;
      rec.speed = st.ego_speed;
      rec.control = {0.05, 0.4, 0.0};
      rec.progress = sim::route_progress(st, route);
      rec.events = r.events;
      trace.records.push_back(rec);
    }
    return sim::trace_to_string(trace);
  };
  CHECK(run_once() == run_once());
}

TEST_CASE("route_progress endpoints and analytic midpoint") {
  const auto route = sim::make_route({{-200, 0}, {200, 0}});
  auto st = sim::create_world(default_config(), route, 1);
  CHECK(sim::route_progress(st, route) == doctest::Approx(0.0));

  st.ego.x = 200;
  CHECK(sim::route_progress(st, route) == doctest::Approx(1.0));

  st.ego.x = 0;  // midpoint of a 400 m straight route
  const double expected =
      oracles::straight_route_progress(route.goals[0], route.goals[1], {0, 0});
  CHECK(sim::route_progress(st, route) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(sim::route_progress(st, route) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("route_progress is non-decreasing along an expert trace") {
  eval::EvalConfig cfg;
  const auto scenario = eval::themed_route(2, 31, "turns");
  const auto rr = eval::run_route_expert(scenario, cfg, 5);
  double prev = 0.0;
  for (const auto& rec : rr.trace.records) {
    CHECK(rec.progress >= prev - 1e-9);
    prev = rec.progress;
  }
  CHECK(prev > 0.9);
}

TEST_CASE("route_progress is invariant under a joint rigid transform") {
  const auto route = sim::make_route({{-40, 0}, {10, 0}, {10, 60}});
  auto st = sim::create_world(default_config(), route, 1);
  st.ego.x = 3.0;
  st.ego.y = 1.0;
  const double base = sim::route_progress(st, route);

  const double angle = 0.7;
  const Vec2 shift{13.0, -4.5};
  auto transform = [&](const Vec2& p) {
    return Vec2{std::cos(angle) * p.x - std::sin(angle) * p.y + shift.x,
                std::sin(angle) * p.x + std::cos(angle) * p.y + shift.y};
  };
  std::vector<Vec2> goals;
  for (const auto& g : route.goals) goals.push_back(transform(g));
  const auto route2 = sim::make_route(goals);
  auto st2 = st;
  const Vec2 ego2 = transform(st.ego.position());
  st2.ego.x = ego2.x;
  st2.ego.y = ego2.y;
  CHECK(sim::route_progress(st2, route2) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("nearest_hazard corridor geometry") {
  const auto route = straight_route(100);
  const auto cfg = default_config();
  auto st = sim::create_world(cfg, route, 1);

  SUBCASE("empty world is clear") {
    const auto h = sim::nearest_hazard(st, route, cfg);
    CHECK(std::isinf(h.distance));
    CHECK(h.kind == sim::HazardKind::none);
  }

  SUBCASE("vehicle dead ahead") {
    sim::Actor v;
    v.kind = sim::ActorKind::vehicle;
    v.pose = {st.ego.x + 8.0, st.ego.y, 0.0};
    st.actors.push_back(v);
    const auto h = sim::nearest_hazard(st, route, cfg);
    CHECK(h.distance == doctest::Approx(8.0));
    CHECK(h.kind == sim::HazardKind::vehicle);
  }

  SUBCASE("vehicle outside the corridor is ignored") {
    sim::Actor v;
    v.kind = sim::ActorKind::vehicle;
    v.pose = {st.ego.x + 8.0, st.ego.y + 5.0, 0.0};  // 5 m lateral, lane 3.5
    st.actors.push_back(v);
    const auto h = sim::nearest_hazard(st, route, cfg);
    CHECK(std::isinf(h.distance));
    CHECK(h.kind == sim::HazardKind::none);
  }

  SUBCASE("corridor oracle over a grid of offsets") {
    // independent corridor check: inside iff forward in (0, range] and
    // |lateral| <= lane_width / 2
    for (double fwd : {-4.0, 2.0, 8.0, 20.0}) {
      for (double lat : {-3.0, -1.5, 0.0, 1.0, 1.74, 1.76, 4.0}) {
        auto stc = st;
        sim::Actor v;
        v.kind = sim::ActorKind::vehicle;
        v.pose = {st.ego.x + fwd, st.ego.y + lat, 0.0};
        stc.actors.push_back(v);
        const auto h = sim::nearest_hazard(stc, route, cfg);
        const bool inside = fwd > 0 && std::fabs(lat) <= route.lane_width / 2;
        if (inside) {
          CHECK(h.distance == doctest::Approx(fwd));
        } else {
          CHECK(std::isinf(h.distance));
        }
      }
    }
  }

  SUBCASE("red light is a hazard, green is not") {
    sim::TrafficLight l;
    l.position = {st.ego.x + 12.0, st.ego.y};
    l.route_s = 62.0;
    l.phase = sim::LightPhase::GREEN;
    st.lights.push_back(l);
    CHECK(std::isinf(sim::nearest_hazard(st, route, cfg).distance));
    st.lights[0].phase = sim::LightPhase::RED;
    const auto h = sim::nearest_hazard(st, route, cfg);
    CHECK(h.distance == doctest::Approx(12.0));
    CHECK(h.kind == sim::HazardKind::red_light);
  }
}

TEST_CASE("observation frame shapes and finiteness") {
  sim::WorldConfig cfg = default_config();
  cfg.scenario.lead_vehicles = 2;
  cfg.scenario.lights = 1;
  const auto route = straight_route(120);
  const auto st = sim::create_world(cfg, route, 3);
  const auto frame = sim::observe(st, route, cfg, {0.1, 0.5, 0.0});
  CHECK(frame.camera_grid.h == 40);
  CHECK(frame.camera_grid.w == 176);
  CHECK(frame.camera_grid.c == 3);
  CHECK(frame.bev_grid.h == 64);
  CHECK(frame.bev_grid.w == 64);
  CHECK(frame.bev_grid.c == 4);
  CHECK(all_finite(frame.camera_grid.a));
  CHECK(all_finite(frame.bev_grid.a));
  CHECK(frame.status.throttle == 0.5);
  double bev_sum = 0;
  for (double v : frame.bev_grid.a) bev_sum += std::fabs(v);
  CHECK(bev_sum > 0.0);  // the route overlay alone must paint something
}

TEST_CASE("trace files round-trip") {
  sim::Trace trace;
  trace.route_id = "t";
  trace.goals = {{-10, 0}, {10, 0}};
  sim::TraceRecord rec;
  rec.tick = 3;
  rec.ego = {1.25, -0.5, 0.1};
  rec.speed = 4.2;
  rec.control = {0.1, 0.7, 0.0};
  rec.source = "base";
  rec.queries_used = 1;
  rec.progress = 0.31;
  rec.events.push_back({sim::InfractionKind::red_light, 3, {1.0, 2.0}});
  trace.records.push_back(rec);

  const std::string path = std::filesystem::temp_directory_path() / "td_trace_test.txt";
  sim::save_trace(trace, path);
  const auto loaded = sim::load_trace(path);
  REQUIRE(loaded.records.size() == 1);
  CHECK(loaded.route_id == "t");
  CHECK(loaded.records[0].ego.x == rec.ego.x);
  CHECK(loaded.records[0].control.throttle == rec.control.throttle);
  REQUIRE(loaded.records[0].events.size() == 1);
  CHECK(loaded.records[0].events[0].kind == sim::InfractionKind::red_light);
  CHECK(sim::trace_to_string(loaded) == sim::trace_to_string(trace));
}

TEST_CASE("timeout fires at the documented tick") {
  const auto route = straight_route(100);
  const auto cfg = default_config();
  const long limit = sim::timeout_ticks(cfg, route);
  CHECK(limit == 600);  // 3 * (100 / 5) seconds at dt 0.1
  auto st = sim::create_world(cfg, route, 1);
  bool saw_timeout = false;
  for (long i = 0; i < limit + 5 && !saw_timeout; ++i) {
    const auto r = sim::step(st, route, cfg, {0, 0, 0}, 0.1);
    st = r.state;
    for (const auto& e : r.events)
      if (e.kind == sim::InfractionKind::timeout) {
        saw_timeout = true;
        CHECK(st.tick == limit);
      }
  }
  CHECK(saw_timeout);
}

}  // TEST_SUITE
