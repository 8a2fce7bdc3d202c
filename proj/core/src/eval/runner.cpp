#include <atomic>
#include <thread>

#include "tokendrive/eval/runner.hpp"

namespace tokendrive::eval {

const char* mode_name(DriveMode m) {
  switch (m) {
    case DriveMode::drive: return "drive";
    case DriveMode::drive_no_requery: return "drive-no-requery";
    case DriveMode::drive_correct: return "drive-correct";
  }
  return "drive";
}

std::optional<DriveMode> mode_from_name(const std::string& name) {
  for (DriveMode m : {DriveMode::drive, DriveMode::drive_no_requery, DriveMode::drive_correct}) {
    if (name == mode_name(m)) return m;
  }
  return std::nullopt;
}

namespace {

// Replays the expert for the current world state; the scripted stand-in for a
// stronger correction model.
class OracleAdviser : public arb::Adviser {
 public:
  OracleAdviser(const sim::Route& route, const sim::WorldConfig& config,
                const expert::ExpertConfig& expert_cfg, const lang::Vocab& vocab)
      : route_(route), config_(config), expert_cfg_(expert_cfg), vocab_(vocab) {}

  void set_state(const sim::WorldState* state) { state_ = state; }

  std::optional<std::string> correct(const lang::DrivingSentence&) override {
    if (!state_) return std::nullopt;
    const ActionBundle bundle = expert::expert_control(*state_, route_, config_, expert_cfg_);
    const PerceptionDescription desc = sim::describe_scene(*state_, route_, config_);
    return lang::serialize_supervision(desc, lang::quantize_bundle(bundle, vocab_), vocab_).text;
  }

 private:
  const sim::Route& route_;
  const sim::WorldConfig& config_;
  const expert::ExpertConfig& expert_cfg_;
  const lang::Vocab& vocab_;
  const sim::WorldState* state_ = nullptr;
};

}  // namespace

RouteRun run_route(const policy::Model& model, const lang::Vocab& vocab,
                   const expert::RouteScenario& scenario, DriveMode mode, const EvalConfig& cfg,
                   uint64_t seed) {
  sim::WorldConfig world = cfg.world;
  world.scenario = scenario.scenario;

  arb::ArbitrationConfig arb_cfg = cfg.arbitration;
  arb_cfg.requery_enabled = mode != DriveMode::drive_no_requery;
  arb_cfg.uncertainty_gate = mode == DriveMode::drive_correct;

  OracleAdviser oracle(scenario.route, world, cfg.expert, vocab);
  arb::Adviser* adviser = mode == DriveMode::drive_correct ? &oracle : nullptr;
  arb::Agent agent(model, vocab, arb_cfg, adviser);

  RouteRun out;
  out.trace.route_id = scenario.id;
  out.trace.goals = scenario.route.goals;
  out.result.route_id = scenario.id;

  const uint64_t world_seed = Rng(seed).fork(0x517eull).next_u64();
  sim::WorldState state = sim::create_world(world, scenario.route, world_seed);
  Control control;
  sim::ObservationFrame frame = sim::observe(state, scenario.route, world, control);
  const long max_ticks = sim::timeout_ticks(world, scenario.route);

  double max_progress = 0.0;
  std::string source = "base";
  int queries = 0;
  int hold = 0;
  bool done = false;

  for (long tick = 0; tick < max_ticks && !done; ++tick) {
    oracle.set_state(&state);
    const double hazard = sim::nearest_hazard(state, scenario.route, world).distance;

    if (tick % cfg.plan_period == 0 && hold <= 0) {
      const arb::TickDecision decision =
          agent.drive_tick(frame, hazard, Rng(seed).fork(900000 + tick).next_u64());
      control = decision.final_control;
      source = arb::source_name(decision.source);
      queries = decision.queries_used;
      hold = decision.hold_ticks;
    } else {
      // between plans the last control holds, still enveloped
      if (hold > 0) --hold;
      const auto env =
          ctrl::safety_envelope(control, hazard, state.ego_speed, arb_cfg.safety);
      if (env.violation) source = arb::source_name(arb::DecisionSource::safety_override);
      control = env.control;
    }

    const sim::StepResult sr = sim::step(state, scenario.route, world, control, world.dt);
    state = sr.state;
    frame = sr.frame;
    max_progress = std::max(max_progress, sim::route_progress(state, scenario.route));

    sim::TraceRecord rec;
    rec.tick = state.tick;
    rec.ego = state.ego;
    rec.speed = state.ego_speed;
    rec.control = control;
    rec.source = source;
    rec.queries_used = queries;
    rec.progress = max_progress;
    rec.events = sr.events;
    out.trace.records.push_back(std::move(rec));

    for (const auto& e : sr.events) {
      out.result.infractions.push_back(e);
      if (e.kind == sim::InfractionKind::route_deviation ||
          e.kind == sim::InfractionKind::timeout)
        done = true;
    }
    if (scenario.route.length - sim::project(scenario.route, state.ego.position()).s <
        cfg.done_remaining)
      done = true;
    out.result.ticks_used = state.tick;
  }
  out.result.completion = max_progress;
  return out;
}

RouteRun run_route_expert(const expert::RouteScenario& scenario, const EvalConfig& cfg,
                          uint64_t seed) {
  sim::WorldConfig world = cfg.world;
  world.scenario = scenario.scenario;

  RouteRun out;
  out.trace.route_id = scenario.id;
  out.trace.goals = scenario.route.goals;
  out.result.route_id = scenario.id;

  const uint64_t world_seed = Rng(seed).fork(0x517eull).next_u64();
  sim::WorldState state = sim::create_world(world, scenario.route, world_seed);
  const long max_ticks = sim::timeout_ticks(world, scenario.route);
  double max_progress = 0.0;
  bool done = false;

  for (long tick = 0; tick < max_ticks && !done; ++tick) {
    const ActionBundle bundle = expert::expert_control(state, scenario.route, world, cfg.expert);
    const sim::StepResult sr = sim::step(state, scenario.route, world, bundle.control, world.dt);
    state = sr.state;
    max_progress = std::max(max_progress, sim::route_progress(state, scenario.route));

    sim::TraceRecord rec;
    rec.tick = state.tick;
    rec.ego = state.ego;
    rec.speed = state.ego_speed;
    rec.control = bundle.control;
    rec.source = "expert";
    rec.progress = max_progress;
    rec.events = sr.events;
    out.trace.records.push_back(std::move(rec));

    for (const auto& e : sr.events) {
      out.result.infractions.push_back(e);
      if (e.kind == sim::InfractionKind::route_deviation ||
          e.kind == sim::InfractionKind::timeout)
        done = true;
    }
    if (scenario.route.length - sim::project(scenario.route, state.ego.position()).s <
        cfg.done_remaining)
      done = true;
    out.result.ticks_used = state.tick;
  }
  out.result.completion = max_progress;
  return out;
}

metrics::EvaluationReport evaluate(const policy::Model& model, const lang::Vocab& vocab,
                                   const std::vector<expert::RouteScenario>& routes,
                                   DriveMode mode, int runs, const EvalConfig& cfg, uint64_t seed,
                                   std::vector<sim::Trace>* traces_out) {
  metrics::EvaluationReport report;
  report.mode = mode_name(mode);
  report.seed = seed;
  report.coeffs = cfg.coeffs;
  report.runs.assign(runs, std::vector<metrics::RouteResult>(routes.size()));
  std::vector<std::vector<sim::Trace>> traces(runs, std::vector<sim::Trace>(routes.size()));

  struct Job {
    int run;
    int route;
  };
  std::vector<Job> jobs;
  for (int run = 0; run < runs; ++run)
    for (size_t r = 0; r < routes.size(); ++r) jobs.push_back({run, static_cast<int>(r)});

  std::atomic<size_t> next{0};
  auto worker = [&] {
    while (true) {
      const size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const Job job = jobs[j];
      const uint64_t job_seed =
          Rng(seed).fork(static_cast<uint64_t>(job.run) * 4096 + job.route).next_u64();
      RouteRun rr = run_route(model, vocab, routes[job.route], mode, cfg, job_seed);
      report.runs[job.run][job.route] = std::move(rr.result);
      traces[job.run][job.route] = std::move(rr.trace);
    }
  };
  const int n_threads = std::max(1, cfg.threads);
  if (n_threads > 1 && jobs.size() > 1) {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  } else {
    worker();
  }

  if (traces_out) {
    traces_out->clear();
    for (auto& run : traces)
      for (auto& t : run) traces_out->push_back(std::move(t));
  }
  return report;
}

}  // namespace tokendrive::eval
