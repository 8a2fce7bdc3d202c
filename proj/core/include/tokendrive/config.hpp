#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokendrive/eval/runner.hpp"
#include "tokendrive/lang/grammar.hpp"
#include "tokendrive/policy/policy.hpp"
#include "tokendrive/train/train.hpp"

namespace tokendrive {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat `key = value` experiment configuration. Every tunable default lives
// here; unknown keys are a hard error so configs stay diffable and honest.
struct RunConfig {
  // world
  double world_dt = 0.1;
  double world_ego_radius = 0.9;
  double world_vehicle_radius = 0.9;
  double world_pedestrian_radius = 0.3;
  double world_static_radius = 0.6;
  double world_deviation_limit = 5.25;
  double world_hazard_scan_range = 64.0;
  double world_timeout_speed = 5.0;
  double world_timeout_factor = 3.0;
  int64_t world_infraction_window_ticks = 20;
  // vehicle
  double vehicle_wheelbase = 2.5;
  double vehicle_max_steer_deg = 35.0;
  double vehicle_accel_max = 3.0;
  double vehicle_brake_max = 8.0;
  double vehicle_drag = 0.1;
  // sensors
  int64_t sensors_cam_h = 40, sensors_cam_w = 176, sensors_cam_c = 3;
  double sensors_cam_fov_deg = 120.0;
  double sensors_cam_range = 48.0;
  double sensors_cam_near = 2.0;
  int64_t sensors_bev_h = 64, sensors_bev_w = 64, sensors_bev_c = 4;
  double sensors_bev_extent = 32.0;
  // default scenario for file-loaded routes
  int64_t scenario_lead_vehicles = 0;
  int64_t scenario_pedestrians = 0;
  int64_t scenario_lights = 0;
  int64_t scenario_statics = 0;
  double scenario_lead_speed = 3.0;
  // encoder
  int64_t encoder_c1 = 16, encoder_c2 = 32;
  int64_t encoder_pool1 = 2, encoder_pool2 = 2;
  int64_t encoder_fuse_after_block = 2;
  int64_t encoder_patch = 16;
  int64_t encoder_dim = 64;
  int64_t encoder_heads = 4;
  int64_t encoder_layers = 4;
  int64_t encoder_ffn_mult = 2;
  // grammar grids
  double grammar_wp_range = 25.6, grammar_wp_step = 0.1;
  double grammar_steer_step = 0.05;
  double grammar_throttle_step = 0.05;
  double grammar_speed_max = 25.5, grammar_speed_step = 0.1;
  double grammar_pos_range = 102.4, grammar_pos_step = 0.8;
  double grammar_hazard_max = 51.0, grammar_hazard_step = 0.2;
  double grammar_delta_max = 2.0, grammar_delta_step = 0.05;
  // policy
  int64_t policy_embed_dim = 8;
  int64_t policy_window = 8;
  int64_t policy_max_len = 192;
  // expert
  double expert_cruise_speed = 6.0;
  double expert_lat_accel_max = 2.0;
  double expert_brake_comfort = 2.0;
  double expert_stop_margin = 4.0;
  double expert_lookahead_gain = 1.0;
  double expert_lookahead_min = 4.0;
  double expert_lookahead_max = 12.0;
  double expert_throttle_gain = 0.5;
  double expert_brake_gain = 0.5;
  double expert_waypoint_dt = 0.5;
  // corpus collection
  double corpus_model_action_fraction = 0.5;
  double corpus_mode2_rate = 0.2;
  double corpus_tau_w = 0.5;
  double corpus_tau_s = 0.2;
  int64_t corpus_stride = 1;
  bool corpus_rotate_bev = false;
  double corpus_scripted_wp_noise = 1.2;
  double corpus_scripted_steer_noise = 0.35;
  double corpus_scripted_flip_prob = 0.15;
  double corpus_scripted_base_severity = 0.3;
  // waypoint-to-control PID
  double control_lat_kp = 0.9, control_lat_ki = 0.05, control_lat_kd = 0.3;
  double control_long_kp = 0.5, control_long_ki = 0.05, control_long_kd = 0.0;
  double control_windup = 2.0;
  double control_dt = 0.5;
  double control_desired_speed_scale = 0.9;
  double control_stop_speed = 0.4;
  // safety envelope
  double safety_margin = 2.0;
  // arbitration
  double arbitration_tau_c = 0.2;
  double arbitration_theta_u = 0.5;
  double arbitration_temperature = 0.5;
  int64_t arbitration_plan_period = 5;
  // metric penalty coefficients
  double metrics_pedestrian = 0.50;
  double metrics_vehicle = 0.60;
  double metrics_static = 0.65;
  double metrics_red_light = 0.70;
  // training
  int64_t mle_steps = 1500;
  int64_t mle_batch = 16;
  double mle_step_size = 2.0;
  bool mle_train_perception = false;
  int64_t rl_steps = 2000;
  int64_t rl_batch = 1;
  double rl_step_size = 0.0125;
  bool rl_adam = false;
  double rl_lambda = 0.5;
  int64_t rl_rollouts = 8;
  double rl_r_fail = 5.0;
  double rl_temperature = 0.7;
  int64_t rl_mc_threads = 2;
  bool rl_ppo = false;
  double rl_ppo_clip = 0.2;
  int64_t rl_ppo_epochs = 4;
  int64_t uncertainty_steps = 3000;
  int64_t uncertainty_batch = 32;
  double uncertainty_step_size = 0.05;
  // evaluation
  int64_t eval_runs = 3;
  int64_t eval_threads = 2;
  double eval_done_remaining = 1.0;
  // global
  int64_t seed = 7;

  // ---- derived views ----
  sim::WorldConfig world_config() const;
  nn::EncoderConfig encoder_config(uint64_t model_seed) const;
  lang::GrammarConfig grammar_config() const;
  policy::ModelConfig model_config() const;
  expert::ExpertConfig expert_config() const;
  expert::CollectConfig collect_config() const;
  ctrl::ControlConfig control_config() const;
  ctrl::SafetyConfig safety_config() const;
  arb::ArbitrationConfig arbitration_config() const;
  metrics::PenaltyCoefficients penalty_coeffs() const;
  eval::EvalConfig eval_config() const;
  train::MleOptions mle_options() const;
  train::RlOptions rl_options() const;
  train::UncertaintyOptions uncertainty_options() const;
  int obs_token_count() const;  // joint tokens announced in prompts
};

// `key = value` per line, '#' comments. Unknown keys and malformed values
// throw ConfigError.
RunConfig load_config(const std::string& path);
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);
// Full schema with current values, one "key = value" per line.
std::string describe_config(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::string& path);

}  // namespace tokendrive
