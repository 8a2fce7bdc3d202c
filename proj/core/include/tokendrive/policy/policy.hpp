#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tokendrive/lang/grammar.hpp"
#include "tokendrive/lang/serialize.hpp"
#include "tokendrive/nn/encoder.hpp"
#include "tokendrive/policy/core.hpp"
#include "tokendrive/types.hpp"

namespace tokendrive::policy {

// Policy head plus the uncertainty head and the REINFORCE running baselines
// (checkpointed but not trainable).
struct PolicyParams {
  PolicyCore core;
  std::vector<double> unc_w;          // pooled_dim
  std::vector<double> unc_b;          // 1
  std::vector<double> baseline_mean;  // per field category: wp steer throttle brake
  std::vector<double> baseline_count;
};

struct Model {
  nn::EncoderParams encoder;
  PolicyParams policy;
};

struct ModelConfig {
  nn::EncoderConfig encoder;
  int embed_dim = 8;
  int window = 8;
  int max_len = 192;
  uint64_t seed = 1;
};

Model make_model(const ModelConfig& cfg, const lang::Vocab& vocab);
Model make_like(const Model& m);
std::vector<nn::ParamRef> collect_params(Model& m);
void save_model(const std::string& path, Model& m);
void load_model(const std::string& path, Model& m);

// Seven status features: speed/10, throttle, brake, x/100, y/100, sin h, cos h.
std::vector<double> status_features(const DriveStatus& s);
constexpr int kStatusFeatures = 7;

// Field category for the reward baselines.
int reward_category(lang::Field f);

// One corpus record prepared for training: tokenized sentence, cached pooled
// encoding, reward context. The raw tensors are kept only when the encoder is
// trained end to end.
struct PreparedRecord {
  lang::DrivingSentence sentence;
  std::vector<double> pooled;
  std::vector<double> status_feats;
  DriveStatus status;
  ActionBundle expert;
  double hazard_dist = std::numeric_limits<double>::infinity();
  int label = 0;
  bool has_model_action = false;
  int task_mode = 1;
  Tensor3 camera, bev;

  bool has_tensors() const { return camera.size() > 0 && bev.size() > 0; }
};

struct TrainOptions {
  bool train_perception = false;
};

struct RlConfig {
  int n_rollouts = 8;
  double lambda = 0.5;
  double r_fail = 5.0;
  double temperature = 0.7;  // on-policy sampling and MC rollouts
  int mc_threads = 1;
  // clipped-ratio variant: extra surrogate epochs on the sampled batch with
  // the ratio clipped to [1 - eps, 1 + eps]; plain REINFORCE when off
  bool ppo = false;
  double ppo_clip = 0.2;
  int ppo_epochs = 4;
  // one-interval speed propagation for the safety branch
  double control_dt = 0.5;
  double accel_max = 3.0;
  double brake_decel = 8.0;
  double drag = 0.1;
  double envelope_brake_max = 8.0;
  double envelope_margin = 2.0;
  TrainOptions train;
};

// Autoregressive generation: prompt plus sampled completion, stopping at the
// end token or the sentence length cap (flagged as truncated).
lang::DrivingSentence sample_sequence(const Model& model, const lang::Vocab& vocab,
                                      const std::vector<double>& pooled,
                                      const std::vector<double>& status_feats,
                                      const lang::DrivingSentence& prompt, double temperature,
                                      uint64_t seed);

struct TrainStats {
  double nll = 0.0;
  double l_rl = 0.0;
  double mean_reward = 0.0;
  double grad_norm = 0.0;
};

// One step of teacher-forced NLL descent on the supervision tokens. Returns
// the mean NLL per token before the update.
double mle_step(Model& model, const lang::Vocab& vocab,
                const std::vector<const PreparedRecord*>& batch, double step_size,
                const TrainOptions& opts);

// Eq.-3 style Monte Carlo reward of the prefix sentence.tokens[0..position]:
// the unknown suffix is sampled n_rollouts times, each completion is parsed,
// and the rewards averaged (pairwise, so identical rollouts average exactly).
// Waypoint tokens score -mean waypoint L1 against the expert; control tokens
// score -safety loss; unparseable completions contribute -r_fail.
double mc_reward(const Model& model, const lang::Vocab& vocab, const std::vector<double>& pooled,
                 const std::vector<double>& status_feats, const lang::DrivingSentence& sentence,
                 int position, const ActionBundle& expert, int n_rollouts, uint64_t seed,
                 const RlConfig& rl);

// Masked policy-gradient step: REINFORCE with a per-field running-mean
// baseline on the parameter tokens of an on-policy sample, combined with the
// concurrent MLE term. lambda == 0 reproduces mle_step bit for bit.
TrainStats rl_step(Model& model, const lang::Vocab& vocab,
                   const std::vector<const PreparedRecord*>& batch, const RlConfig& rl,
                   double step_size, uint64_t seed, nn::AdamState* adam = nullptr);

double uncertainty(const Model& model, const std::vector<double>& pooled);

struct UncertaintySample {
  std::vector<double> pooled;
  int label = 0;
};

// One binary cross-entropy step on the uncertainty head; returns the mean BCE
// before the update.
double uncertainty_train_step(Model& model, const std::vector<const UncertaintySample*>& batch,
                              double step_size);

// Exact mean of `values` under pairwise combination (sums of 2^k identical
// values stay exact).
double pairwise_mean(std::vector<double> values);

}  // namespace tokendrive::policy
