#include "tokendrive/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tokendrive {

namespace {

struct Entry {
  const char* key;
  int kind;  // 0 double, 1 int, 2 bool
  double RunConfig::*d = nullptr;
  int64_t RunConfig::*i = nullptr;
  bool RunConfig::*b = nullptr;
};

Entry ed(const char* key, double RunConfig::*p) { return {key, 0, p, nullptr, nullptr}; }
Entry ei(const char* key, int64_t RunConfig::*p) { return {key, 1, nullptr, p, nullptr}; }
Entry eb(const char* key, bool RunConfig::*p) { return {key, 2, nullptr, nullptr, p}; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      ed("world.dt", &RunConfig::world_dt),
      ed("world.ego_radius", &RunConfig::world_ego_radius),
      ed("world.vehicle_radius", &RunConfig::world_vehicle_radius),
      ed("world.pedestrian_radius", &RunConfig::world_pedestrian_radius),
      ed("world.static_radius", &RunConfig::world_static_radius),
      ed("world.deviation_limit", &RunConfig::world_deviation_limit),
      ed("world.hazard_scan_range", &RunConfig::world_hazard_scan_range),
      ed("world.timeout_speed", &RunConfig::world_timeout_speed),
      ed("world.timeout_factor", &RunConfig::world_timeout_factor),
      ei("world.infraction_window_ticks", &RunConfig::world_infraction_window_ticks),
      ed("vehicle.wheelbase", &RunConfig::vehicle_wheelbase),
      ed("vehicle.max_steer_deg", &RunConfig::vehicle_max_steer_deg),
      ed("vehicle.accel_max", &RunConfig::vehicle_accel_max),
      ed("vehicle.brake_max", &RunConfig::vehicle_brake_max),
      ed("vehicle.drag", &RunConfig::vehicle_drag),
      ei("sensors.cam_h", &RunConfig::sensors_cam_h),
      ei("sensors.cam_w", &RunConfig::sensors_cam_w),
      ei("sensors.cam_c", &RunConfig::sensors_cam_c),
      ed("sensors.cam_fov_deg", &RunConfig::sensors_cam_fov_deg),
      ed("sensors.cam_range", &RunConfig::sensors_cam_range),
      ed("sensors.cam_near", &RunConfig::sensors_cam_near),
      ei("sensors.bev_h", &RunConfig::sensors_bev_h),
      ei("sensors.bev_w", &RunConfig::sensors_bev_w),
      ei("sensors.bev_c", &RunConfig::sensors_bev_c),
      ed("sensors.bev_extent", &RunConfig::sensors_bev_extent),
      ei("scenario.lead_vehicles", &RunConfig::scenario_lead_vehicles),
      ei("scenario.pedestrians", &RunConfig::scenario_pedestrians),
      ei("scenario.lights", &RunConfig::scenario_lights),
      ei("scenario.statics", &RunConfig::scenario_statics),
      ed("scenario.lead_speed", &RunConfig::scenario_lead_speed),
      ei("encoder.c1", &RunConfig::encoder_c1),
      ei("encoder.c2", &RunConfig::encoder_c2),
      ei("encoder.pool1", &RunConfig::encoder_pool1),
      ei("encoder.pool2", &RunConfig::encoder_pool2),
      ei("encoder.fuse_after_block", &RunConfig::encoder_fuse_after_block),
      ei("encoder.patch", &RunConfig::encoder_patch),
      ei("encoder.dim", &RunConfig::encoder_dim),
      ei("encoder.heads", &RunConfig::encoder_heads),
      ei("encoder.layers", &RunConfig::encoder_layers),
      ei("encoder.ffn_mult", &RunConfig::encoder_ffn_mult),
      ed("grammar.wp_range", &RunConfig::grammar_wp_range),
      ed("grammar.wp_step", &RunConfig::grammar_wp_step),
      ed("grammar.steer_step", &RunConfig::grammar_steer_step),
      ed("grammar.throttle_step", &RunConfig::grammar_throttle_step),
      ed("grammar.speed_max", &RunConfig::grammar_speed_max),
      ed("grammar.speed_step", &RunConfig::grammar_speed_step),
      ed("grammar.pos_range", &RunConfig::grammar_pos_range),
      ed("grammar.pos_step", &RunConfig::grammar_pos_step),
      ed("grammar.hazard_max", &RunConfig::grammar_hazard_max),
      ed("grammar.hazard_step", &RunConfig::grammar_hazard_step),
      ed("grammar.delta_max", &RunConfig::grammar_delta_max),
      ed("grammar.delta_step", &RunConfig::grammar_delta_step),
      ei("policy.embed_dim", &RunConfig::policy_embed_dim),
      ei("policy.window", &RunConfig::policy_window),
      ei("policy.max_len", &RunConfig::policy_max_len),
      ed("expert.cruise_speed", &RunConfig::expert_cruise_speed),
      ed("expert.lat_accel_max", &RunConfig::expert_lat_accel_max),
      ed("expert.brake_comfort", &RunConfig::expert_brake_comfort),
      ed("expert.stop_margin", &RunConfig::expert_stop_margin),
      ed("expert.lookahead_gain", &RunConfig::expert_lookahead_gain),
      ed("expert.lookahead_min", &RunConfig::expert_lookahead_min),
      ed("expert.lookahead_max", &RunConfig::expert_lookahead_max),
      ed("expert.throttle_gain", &RunConfig::expert_throttle_gain),
      ed("expert.brake_gain", &RunConfig::expert_brake_gain),
      ed("expert.waypoint_dt", &RunConfig::expert_waypoint_dt),
      ed("corpus.model_action_fraction", &RunConfig::corpus_model_action_fraction),
      ed("corpus.mode2_rate", &RunConfig::corpus_mode2_rate),
      ed("corpus.tau_w", &RunConfig::corpus_tau_w),
      ed("corpus.tau_s", &RunConfig::corpus_tau_s),
      ei("corpus.stride", &RunConfig::corpus_stride),
      eb("corpus.rotate_bev", &RunConfig::corpus_rotate_bev),
      ed("corpus.scripted_wp_noise", &RunConfig::corpus_scripted_wp_noise),
      ed("corpus.scripted_steer_noise", &RunConfig::corpus_scripted_steer_noise),
      ed("corpus.scripted_flip_prob", &RunConfig::corpus_scripted_flip_prob),
      ed("corpus.scripted_base_severity", &RunConfig::corpus_scripted_base_severity),
      ed("control.lat_kp", &RunConfig::control_lat_kp),
      ed("control.lat_ki", &RunConfig::control_lat_ki),
      ed("control.lat_kd", &RunConfig::control_lat_kd),
      ed("control.long_kp", &RunConfig::control_long_kp),
      ed("control.long_ki", &RunConfig::control_long_ki),
      ed("control.long_kd", &RunConfig::control_long_kd),
      ed("control.windup", &RunConfig::control_windup),
      ed("control.dt", &RunConfig::control_dt),
      ed("control.desired_speed_scale", &RunConfig::control_desired_speed_scale),
      ed("control.stop_speed", &RunConfig::control_stop_speed),
      ed("safety.margin", &RunConfig::safety_margin),
      ed("arbitration.tau_c", &RunConfig::arbitration_tau_c),
      ed("arbitration.theta_u", &RunConfig::arbitration_theta_u),
      ed("arbitration.temperature", &RunConfig::arbitration_temperature),
      ei("arbitration.plan_period", &RunConfig::arbitration_plan_period),
      ed("metrics.pedestrian", &RunConfig::metrics_pedestrian),
      ed("metrics.vehicle", &RunConfig::metrics_vehicle),
      ed("metrics.static", &RunConfig::metrics_static),
      ed("metrics.red_light", &RunConfig::metrics_red_light),
      ei("mle.steps", &RunConfig::mle_steps),
      ei("mle.batch", &RunConfig::mle_batch),
      ed("mle.step_size", &RunConfig::mle_step_size),
      eb("mle.train_perception", &RunConfig::mle_train_perception),
      ei("rl.steps", &RunConfig::rl_steps),
      ei("rl.batch", &RunConfig::rl_batch),
      ed("rl.step_size", &RunConfig::rl_step_size),
      eb("rl.adam", &RunConfig::rl_adam),
      ed("rl.lambda", &RunConfig::rl_lambda),
      ei("rl.rollouts", &RunConfig::rl_rollouts),
      ed("rl.r_fail", &RunConfig::rl_r_fail),
      ed("rl.temperature", &RunConfig::rl_temperature),
      ei("rl.mc_threads", &RunConfig::rl_mc_threads),
      eb("rl.ppo", &RunConfig::rl_ppo),
      ed("rl.ppo_clip", &RunConfig::rl_ppo_clip),
      ei("rl.ppo_epochs", &RunConfig::rl_ppo_epochs),
      ei("uncertainty.steps", &RunConfig::uncertainty_steps),
      ei("uncertainty.batch", &RunConfig::uncertainty_batch),
      ed("uncertainty.step_size", &RunConfig::uncertainty_step_size),
      ei("eval.runs", &RunConfig::eval_runs),
      ei("eval.threads", &RunConfig::eval_threads),
      ed("eval.done_remaining", &RunConfig::eval_done_remaining),
      ei("seed", &RunConfig::seed),
  };
  return table;
}

int to_centi(double v, const char* what) {
  const double scaled = v * 100.0;
  const double rounded = std::round(scaled);
  if (std::fabs(scaled - rounded) > 1e-6)
    throw ConfigError(std::string(what) + " must be a multiple of 0.01");
  return static_cast<int>(rounded);
}

lang::FieldSpec make_spec(double min, double max, double step, int decimals, const char* what) {
  lang::FieldSpec spec;
  spec.min_centi = to_centi(min, what);
  spec.step_centi = to_centi(step, what);
  if (spec.step_centi <= 0) throw ConfigError(std::string(what) + " step must be positive");
  const int span = to_centi(max, what) - spec.min_centi;
  if (span % spec.step_centi != 0)
    throw ConfigError(std::string(what) + " range must be a whole number of steps");
  spec.bins = span / spec.step_centi + 1;
  spec.decimals = decimals;
  if (decimals == 1 && (spec.step_centi % 10 != 0 || spec.min_centi % 10 != 0))
    throw ConfigError(std::string(what) + " grid needs two decimals; pick a coarser step");
  return spec;
}

std::string fmt_value(const Entry& e, const RunConfig& cfg) {
  char buf[40];
  switch (e.kind) {
    case 0: std::snprintf(buf, sizeof buf, "%g", cfg.*(e.d)); return buf;
    case 1: return std::to_string(cfg.*(e.i));
    default: return cfg.*(e.b) ? "true" : "false";
  }
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& e : entries()) {
    if (key != e.key) continue;
    try {
      switch (e.kind) {
        case 0: cfg.*(e.d) = std::stod(value); return;
        case 1: cfg.*(e.i) = std::stoll(value); return;
        default:
          if (value == "true" || value == "1") cfg.*(e.b) = true;
          else if (value == "false" || value == "0") cfg.*(e.b) = false;
          else throw ConfigError("bad boolean for " + key + ": " + value);
          return;
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("bad value for " + key + ": " + value);
    }
  }
  throw ConfigError("unknown config key: " + key);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    std::string key = line.substr(0, eq == std::string::npos ? line.size() : eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    if (key.empty()) {
      if (eq != std::string::npos)
        throw ConfigError(path + ":" + std::to_string(line_no) + ": missing key");
      continue;
    }
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    std::string value = line.substr(eq + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    value.erase(value.find_last_not_of(" \t") + 1);
    apply_override(cfg, key, value);
  }
  return cfg;
}

std::string describe_config(const RunConfig& cfg) {
  std::ostringstream out;
  for (const auto& e : entries()) out << e.key << " = " << fmt_value(e, cfg) << "\n";
  return out.str();
}

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write config file: " + path);
  out << describe_config(cfg);
}

sim::WorldConfig RunConfig::world_config() const {
  sim::WorldConfig w;
  w.dt = world_dt;
  w.ego_radius = world_ego_radius;
  w.vehicle_radius = world_vehicle_radius;
  w.pedestrian_radius = world_pedestrian_radius;
  w.static_radius = world_static_radius;
  w.deviation_limit = world_deviation_limit;
  w.hazard_scan_range = world_hazard_scan_range;
  w.timeout_speed = world_timeout_speed;
  w.timeout_factor = world_timeout_factor;
  w.infraction_window_ticks = static_cast<int>(world_infraction_window_ticks);
  w.vehicle.wheelbase = vehicle_wheelbase;
  w.vehicle.max_steer = vehicle_max_steer_deg * 3.14159265358979323846 / 180.0;
  w.vehicle.accel_max = vehicle_accel_max;
  w.vehicle.brake_max = vehicle_brake_max;
  w.vehicle.drag = vehicle_drag;
  w.sensors.cam_h = static_cast<int>(sensors_cam_h);
  w.sensors.cam_w = static_cast<int>(sensors_cam_w);
  w.sensors.cam_c = static_cast<int>(sensors_cam_c);
  w.sensors.cam_fov_deg = sensors_cam_fov_deg;
  w.sensors.cam_range = sensors_cam_range;
  w.sensors.cam_near = sensors_cam_near;
  w.sensors.bev_h = static_cast<int>(sensors_bev_h);
  w.sensors.bev_w = static_cast<int>(sensors_bev_w);
  w.sensors.bev_c = static_cast<int>(sensors_bev_c);
  w.sensors.bev_extent = sensors_bev_extent;
  w.scenario.lead_vehicles = static_cast<int>(scenario_lead_vehicles);
  w.scenario.pedestrians = static_cast<int>(scenario_pedestrians);
  w.scenario.lights = static_cast<int>(scenario_lights);
  w.scenario.statics = static_cast<int>(scenario_statics);
  w.scenario.lead_speed = scenario_lead_speed;
  return w;
}

nn::EncoderConfig RunConfig::encoder_config(uint64_t model_seed) const {
  nn::EncoderConfig e;
  e.cam_h = static_cast<int>(sensors_cam_h);
  e.cam_w = static_cast<int>(sensors_cam_w);
  e.cam_c = static_cast<int>(sensors_cam_c);
  e.bev_h = static_cast<int>(sensors_bev_h);
  e.bev_w = static_cast<int>(sensors_bev_w);
  e.bev_c = static_cast<int>(sensors_bev_c);
  e.c1 = static_cast<int>(encoder_c1);
  e.c2 = static_cast<int>(encoder_c2);
  e.pool1 = static_cast<int>(encoder_pool1);
  e.pool2 = static_cast<int>(encoder_pool2);
  e.fuse_after_block = static_cast<int>(encoder_fuse_after_block);
  e.patch = static_cast<int>(encoder_patch);
  e.dim = static_cast<int>(encoder_dim);
  e.heads = static_cast<int>(encoder_heads);
  e.layers = static_cast<int>(encoder_layers);
  e.ffn_mult = static_cast<int>(encoder_ffn_mult);
  e.seed = model_seed;
  return e;
}

lang::GrammarConfig RunConfig::grammar_config() const {
  lang::GrammarConfig g;
  g.wp = make_spec(-grammar_wp_range, grammar_wp_range, grammar_wp_step, 1, "grammar.wp");
  g.steer = make_spec(-1.0, 1.0, grammar_steer_step, 2, "grammar.steer");
  g.throttle = make_spec(0.0, 1.0, grammar_throttle_step, 2, "grammar.throttle");
  g.brake = g.throttle;
  g.speed = make_spec(0.0, grammar_speed_max, grammar_speed_step, 2, "grammar.speed");
  g.pos = make_spec(-grammar_pos_range, grammar_pos_range, grammar_pos_step, 1, "grammar.pos");
  g.hazard = make_spec(0.0, grammar_hazard_max, grammar_hazard_step, 1, "grammar.hazard");
  g.delta = make_spec(0.0, grammar_delta_max, grammar_delta_step, 2, "grammar.delta");
  return g;
}

policy::ModelConfig RunConfig::model_config() const {
  policy::ModelConfig m;
  m.encoder = encoder_config(static_cast<uint64_t>(seed));
  m.embed_dim = static_cast<int>(policy_embed_dim);
  m.window = static_cast<int>(policy_window);
  m.max_len = static_cast<int>(policy_max_len);
  m.seed = static_cast<uint64_t>(seed);
  return m;
}

expert::ExpertConfig RunConfig::expert_config() const {
  expert::ExpertConfig e;
  e.cruise_speed = expert_cruise_speed;
  e.lat_accel_max = expert_lat_accel_max;
  e.brake_comfort = expert_brake_comfort;
  e.stop_margin = expert_stop_margin;
  e.lookahead_gain = expert_lookahead_gain;
  e.lookahead_min = expert_lookahead_min;
  e.lookahead_max = expert_lookahead_max;
  e.throttle_gain = expert_throttle_gain;
  e.brake_gain = expert_brake_gain;
  e.waypoint_dt = expert_waypoint_dt;
  return e;
}

expert::CollectConfig RunConfig::collect_config() const {
  expert::CollectConfig c;
  c.model_action_fraction = corpus_model_action_fraction;
  c.mode2_rate = corpus_mode2_rate;
  c.thresholds = {corpus_tau_w, corpus_tau_s};
  c.scripted.wp_noise = corpus_scripted_wp_noise;
  c.scripted.steer_noise = corpus_scripted_steer_noise;
  c.scripted.flip_prob = corpus_scripted_flip_prob;
  c.scripted.base_severity = corpus_scripted_base_severity;
  c.control = control_config();
  c.tau_c = arbitration_tau_c;
  c.obs_tokens = obs_token_count();
  c.stride = static_cast<int>(corpus_stride);
  c.rotate_bev = corpus_rotate_bev;
  c.done_remaining = eval_done_remaining;
  return c;
}

ctrl::ControlConfig RunConfig::control_config() const {
  ctrl::ControlConfig c;
  c.lateral = {control_lat_kp, control_lat_ki, control_lat_kd};
  c.longitudinal = {control_long_kp, control_long_ki, control_long_kd};
  c.windup = control_windup;
  c.dt = control_dt;
  c.desired_speed_scale = control_desired_speed_scale;
  c.stop_speed = control_stop_speed;
  return c;
}

ctrl::SafetyConfig RunConfig::safety_config() const {
  return {vehicle_brake_max, safety_margin};
}

arb::ArbitrationConfig RunConfig::arbitration_config() const {
  arb::ArbitrationConfig a;
  a.tau_c = arbitration_tau_c;
  a.theta_u = arbitration_theta_u;
  a.temperature = arbitration_temperature;
  a.control = control_config();
  a.safety = safety_config();
  return a;
}

metrics::PenaltyCoefficients RunConfig::penalty_coeffs() const {
  return {metrics_pedestrian, metrics_vehicle, metrics_static, metrics_red_light};
}

eval::EvalConfig RunConfig::eval_config() const {
  eval::EvalConfig e;
  e.world = world_config();
  e.expert = expert_config();
  e.arbitration = arbitration_config();
  e.coeffs = penalty_coeffs();
  e.plan_period = static_cast<int>(arbitration_plan_period);
  e.done_remaining = eval_done_remaining;
  e.threads = static_cast<int>(eval_threads);
  return e;
}

train::MleOptions RunConfig::mle_options() const {
  train::MleOptions m;
  m.steps = static_cast<int>(mle_steps);
  m.batch = static_cast<int>(mle_batch);
  m.step_size = mle_step_size;
  m.seed = static_cast<uint64_t>(seed);
  m.train.train_perception = mle_train_perception;
  return m;
}

train::RlOptions RunConfig::rl_options() const {
  train::RlOptions r;
  r.steps = static_cast<int>(rl_steps);
  r.batch = static_cast<int>(rl_batch);
  r.step_size = rl_step_size;
  r.adam = rl_adam;
  r.seed = static_cast<uint64_t>(seed);
  r.rl.n_rollouts = static_cast<int>(rl_rollouts);
  r.rl.lambda = rl_lambda;
  r.rl.r_fail = rl_r_fail;
  r.rl.temperature = rl_temperature;
  r.rl.mc_threads = static_cast<int>(rl_mc_threads);
  r.rl.ppo = rl_ppo;
  r.rl.ppo_clip = rl_ppo_clip;
  r.rl.ppo_epochs = static_cast<int>(rl_ppo_epochs);
  r.rl.control_dt = control_dt;
  r.rl.accel_max = vehicle_accel_max;
  r.rl.brake_decel = vehicle_brake_max;
  r.rl.drag = vehicle_drag;
  r.rl.envelope_brake_max = vehicle_brake_max;
  r.rl.envelope_margin = safety_margin;
  return r;
}

train::UncertaintyOptions RunConfig::uncertainty_options() const {
  train::UncertaintyOptions u;
  u.steps = static_cast<int>(uncertainty_steps);
  u.batch = static_cast<int>(uncertainty_batch);
  u.step_size = uncertainty_step_size;
  u.seed = static_cast<uint64_t>(seed);
  return u;
}

int RunConfig::obs_token_count() const {
  const int p12 = static_cast<int>(encoder_pool1 * encoder_pool2);
  const int patch = static_cast<int>(encoder_patch);
  auto patches = [&](int h, int w) {
    const int fh = (static_cast<int>(h) / p12 + patch - 1) / patch;
    const int fw = (static_cast<int>(w) / p12 + patch - 1) / patch;
    return fh * fw;
  };
  return patches(static_cast<int>(sensors_cam_h), static_cast<int>(sensors_cam_w)) +
         patches(static_cast<int>(sensors_bev_h), static_cast<int>(sensors_bev_w));
}

}  // namespace tokendrive
