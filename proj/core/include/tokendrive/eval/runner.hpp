#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tokendrive/arbitration/arbitrate.hpp"
#include "tokendrive/expert/corpus.hpp"
#include "tokendrive/metrics/metrics.hpp"
#include "tokendrive/sim/trace.hpp"

namespace tokendrive::eval {

enum class DriveMode { drive, drive_no_requery, drive_correct };
const char* mode_name(DriveMode m);
std::optional<DriveMode> mode_from_name(const std::string& name);

struct EvalConfig {
  sim::WorldConfig world;
  expert::ExpertConfig expert;  // powers the scripted-oracle adviser
  arb::ArbitrationConfig arbitration;
  metrics::PenaltyCoefficients coeffs;
  int plan_period = 5;     // sim ticks between policy decisions
  double done_remaining = 1.0;
  int threads = 2;
};

// 8 procedurally themed maps: straight, gentle curves, 90-degree turns,
// s-curves with a parked obstacle, traffic lights, pedestrian crossings,
// lead traffic, mixed.
expert::RouteScenario themed_route(int theme, uint64_t seed, const std::string& id);
// 48 collection routes, 6 per theme.
std::vector<expert::RouteScenario> builtin_collect_routes(uint64_t seed);
// 12 evaluation routes biased toward hazards and turns.
std::vector<expert::RouteScenario> builtin_eval_routes(uint64_t seed);

struct RouteRun {
  metrics::RouteResult result;
  sim::Trace trace;
};

RouteRun run_route(const policy::Model& model, const lang::Vocab& vocab,
                   const expert::RouteScenario& scenario, DriveMode mode, const EvalConfig& cfg,
                   uint64_t seed);

// Drives every route `runs` times; (route, run) pairs execute in a small
// thread pool and assemble in fixed order, so reports are byte-stable.
metrics::EvaluationReport evaluate(const policy::Model& model, const lang::Vocab& vocab,
                                   const std::vector<expert::RouteScenario>& routes,
                                   DriveMode mode, int runs, const EvalConfig& cfg, uint64_t seed,
                                   std::vector<sim::Trace>* traces_out = nullptr);

// Replays the expert instead of the policy (corpus sanity checks and the
// expert baseline).
RouteRun run_route_expert(const expert::RouteScenario& scenario, const EvalConfig& cfg,
                          uint64_t seed);

}  // namespace tokendrive::eval
