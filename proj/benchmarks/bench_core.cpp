#include <benchmark/benchmark.h>

#include "tokendrive/config.hpp"
#include "tokendrive/lang/parse.hpp"
#include "tokendrive/policy/policy.hpp"
#include "tokendrive/sim/world.hpp"

using namespace tokendrive;

namespace {

const RunConfig& rc() {
  static const RunConfig cfg;
  return cfg;
}

const lang::Vocab& vocab() {
  static const lang::Vocab v{rc().grammar_config()};
  return v;
}

void BM_SimStep(benchmark::State& state) {
  const auto route = sim::make_route({{-60, 0}, {60, 0}});
  sim::WorldConfig cfg = rc().world_config();
  cfg.scenario.lead_vehicles = 2;
  cfg.scenario.pedestrians = 1;
  cfg.scenario.lights = 1;
  auto st = sim::create_world(cfg, route, 1);
  st.ego_speed = 4.0;
  for (auto _ : state) {
    auto r = sim::step(st, route, cfg, {0.02, 0.5, 0.0}, 0.1);
    benchmark::DoNotOptimize(r.frame.bev_grid.a.data());
  }
}
BENCHMARK(BM_SimStep)->Unit(benchmark::kMicrosecond);

void BM_EncodeFrame(benchmark::State& state) {
  const auto route = sim::make_route({{-60, 0}, {60, 0}});
  const sim::WorldConfig cfg = rc().world_config();
  const auto st = sim::create_world(cfg, route, 1);
  const auto frame = sim::observe(st, route, cfg, {});
  const auto model = policy::make_model(rc().model_config(), vocab());
  for (auto _ : state) {
    const auto enc = nn::encode_frame(model.encoder, frame.camera_grid, frame.bev_grid, nullptr);
    benchmark::DoNotOptimize(enc.pooled.data());
  }
}
BENCHMARK(BM_EncodeFrame)->Unit(benchmark::kMillisecond);

void BM_SampleSequence(benchmark::State& state) {
  const auto model = policy::make_model(rc().model_config(), vocab());
  DriveStatus status;
  status.speed = 4.0;
  lang::TaskCommand task;
  const auto prompt = lang::serialize_prompt(4, status, task, vocab());
  std::vector<double> pooled(rc().model_config().encoder.dim, 0.1);
  const auto feats = policy::status_features(status);
  uint64_t seed = 0;
  for (auto _ : state) {
    const auto s = policy::sample_sequence(model, vocab(), pooled, feats, prompt, 0.7, ++seed);
    benchmark::DoNotOptimize(s.tokens.data());
  }
}
BENCHMARK(BM_SampleSequence)->Unit(benchmark::kMillisecond);

void BM_ParseAction(benchmark::State& state) {
  const std::string text =
      "PERCEPTION: vehicles=[(-1.2,9.6,2.80)] light=RED hazard_dist=9.6 WAYPOINTS: (0.0,1.8) "
      "(-0.1,3.6) (-0.3,5.4) (-0.6,7.2) CONTROL: steer=-0.10 throttle=0.00 brake=1.00 <END>";
  for (auto _ : state) {
    const auto r = lang::parse_action(text, vocab());
    benchmark::DoNotOptimize(&r);
  }
}
BENCHMARK(BM_ParseAction)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
