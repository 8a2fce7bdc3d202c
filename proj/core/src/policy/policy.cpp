#include "tokendrive/policy/policy.hpp"

#include <cmath>
#include <thread>

#include "tokendrive/lang/parse.hpp"
#include "tokendrive/nn/checkpoint.hpp"

namespace tokendrive::policy {

Model make_model(const ModelConfig& cfg, const lang::Vocab& vocab) {
  Model m;
  m.encoder = nn::make_encoder(cfg.encoder);
  PolicyConfig pc;
  pc.vocab_size = vocab.size();
  pc.embed_dim = cfg.embed_dim;
  pc.window = cfg.window;
  pc.pooled_dim = cfg.encoder.dim;
  pc.status_dim = kStatusFeatures;
  pc.max_len = cfg.max_len;
  m.policy.core = make_policy_core(pc, cfg.seed ^ 0x94d049bb133111ebull);
  m.policy.unc_w.assign(pc.pooled_dim, 0.0);
  m.policy.unc_b.assign(1, 0.0);
  m.policy.baseline_mean.assign(4, 0.0);
  m.policy.baseline_count.assign(4, 0.0);
  return m;
}

Model make_like(const Model& src) {
  Model m = src;
  auto refs = collect_params(m);
  nn::zero_grads(refs);
  return m;
}

std::vector<nn::ParamRef> collect_params(Model& m) {
  std::vector<nn::ParamRef> refs = nn::collect_params(m.encoder);
  auto policy_refs = collect_params(m.policy.core);
  refs.insert(refs.end(), policy_refs.begin(), policy_refs.end());
  refs.push_back({"policy.unc_w", &m.policy.unc_w, {static_cast<int>(m.policy.unc_w.size())}, true});
  refs.push_back({"policy.unc_b", &m.policy.unc_b, {1}, true});
  refs.push_back({"policy.baseline_mean", &m.policy.baseline_mean, {4}, false});
  refs.push_back({"policy.baseline_count", &m.policy.baseline_count, {4}, false});
  return refs;
}

void save_model(const std::string& path, Model& m) {
  nn::save_checkpoint(path, collect_params(m));
}

void load_model(const std::string& path, Model& m) {
  nn::load_checkpoint(path, collect_params(m));
}

std::vector<double> status_features(const DriveStatus& s) {
  return {s.speed / 10.0,      s.throttle,
          s.brake,             s.position.x / 100.0,
          s.position.y / 100.0, std::sin(s.heading),
          std::cos(s.heading)};
}

int reward_category(lang::Field f) {
  switch (f) {
    case lang::Field::wp: return 0;
    case lang::Field::steer: return 1;
    case lang::Field::throttle: return 2;
    case lang::Field::brake: return 3;
    default: return 0;
  }
}

lang::DrivingSentence sample_sequence(const Model& model, const lang::Vocab& vocab,
                                      const std::vector<double>& pooled,
                                      const std::vector<double>& status_feats,
                                      const lang::DrivingSentence& prompt, double temperature,
                                      uint64_t seed) {
  Rng rng(seed);
  const int max_new = std::max(1, model.policy.core.cfg.max_len - prompt.size());
  const SampledTokens sampled =
      sample_tokens(model.policy.core, pooled, status_feats, prompt.tokens, vocab.pad(),
                    vocab.end(), temperature, max_new, rng);
  return lang::join_sentence(prompt, sampled.tokens, vocab, sampled.truncated);
}

namespace {

// Shared MLE accumulation so rl_step(lambda = 0) matches mle_step exactly.
double accumulate_mle(Model& model, const std::vector<const PreparedRecord*>& batch,
                      Model& grads, const TrainOptions& opts) {
  long total_tokens = 0;
  for (const auto* rec : batch)
    total_tokens += std::max(0, rec->sentence.size() - rec->sentence.prompt_len);
  if (total_tokens == 0) return 0.0;
  const double coeff = 1.0 / static_cast<double>(total_tokens);

  double nll = 0.0;
  for (const auto* rec : batch) {
    const lang::DrivingSentence& s = rec->sentence;
    nn::EncodeCache cache;
    std::vector<double> pooled = rec->pooled;
    std::vector<double> dpooled;
    const bool through_encoder = opts.train_perception && rec->has_tensors();
    if (through_encoder) {
      const nn::FrameEncoding enc = nn::encode_frame(model.encoder, rec->camera, rec->bev, &cache);
      pooled = enc.pooled;
      dpooled.assign(pooled.size(), 0.0);
    }
    for (int t = s.prompt_len; t < s.size(); ++t) {
      const auto window = trailing_window(model.policy.core.cfg, s.tokens, t, 0);
      const auto features = assemble_features(model.policy.core, pooled, rec->status_feats, window);
      const double logp =
          accumulate_logprob_grad(model.policy.core, features, window, s.tokens[t], coeff,
                                  grads.policy.core, through_encoder ? &dpooled : nullptr);
      nll -= logp * coeff;
    }
    if (through_encoder)
      nn::encode_frame_backward(model.encoder, cache, dpooled, nullptr, grads.encoder);
  }
  return nll;
}

struct SafetyContext {
  double speed = 0.0;
  double hazard = std::numeric_limits<double>::infinity();
};

SafetyContext safety_context(const std::string& text) {
  SafetyContext ctx;
  if (const auto v = lang::parse_status_speed(text)) ctx.speed = *v;
  if (const auto h = lang::parse_hazard_dist(text)) ctx.hazard = *h;
  return ctx;
}

double rollout_reward(const Model& model, const lang::Vocab& vocab,
                      const std::vector<double>& pooled, const std::vector<double>& status_feats,
                      const std::vector<int>& prefix, lang::Field field,
                      const ActionBundle& expert, uint64_t seed, const RlConfig& rl) {
  Rng rng(seed);
  const int max_new = std::max(1, model.policy.core.cfg.max_len - static_cast<int>(prefix.size()));
  const SampledTokens sampled = sample_tokens(model.policy.core, pooled, status_feats, prefix,
                                              vocab.pad(), vocab.end(), rl.temperature, max_new, rng);
  std::vector<int> all = prefix;
  all.insert(all.end(), sampled.tokens.begin(), sampled.tokens.end());
  const std::string text = vocab.detokenize(all);
  const lang::ParseResult parsed = lang::parse_action(text, vocab);
  if (!parsed.ok()) return -rl.r_fail;

  if (field == lang::Field::wp) {
    double l1 = 0.0;
    for (int i = 0; i < 4; ++i) l1 += (parsed.action.waypoints[i] - expert.waypoints[i]).l1();
    return -l1 / 4.0;
  }
  // Safety branch: apply the parsed control for one control interval from the
  // sentence's own status speed and hazard distance, then score the envelope
  // excess.
  const SafetyContext ctx = safety_context(text);
  const Control& c = parsed.action.control;
  const double v1 = std::max(
      0.0, ctx.speed + (rl.accel_max * c.throttle - rl.brake_decel * c.brake - rl.drag * ctx.speed) *
                           rl.control_dt);
  if (std::isinf(ctx.hazard)) return 0.0;
  const double v_safe =
      std::sqrt(2.0 * rl.envelope_brake_max * std::max(ctx.hazard - rl.envelope_margin, 0.0));
  const double over = std::max(0.0, v1 - v_safe);
  return -(over * over);
}

}  // namespace

double pairwise_mean(std::vector<double> values) {
  const size_t n = values.size();
  if (n == 0) return 0.0;
  size_t count = n;
  while (count > 1) {
    size_t half = count / 2;
    for (size_t i = 0; i < half; ++i) values[i] = values[2 * i] + values[2 * i + 1];
    if (count % 2) {
      values[half] = values[count - 1];
      count = half + 1;
    } else {
      count = half;
    }
  }
  return values[0] / static_cast<double>(n);
}

double mc_reward(const Model& model, const lang::Vocab& vocab, const std::vector<double>& pooled,
                 const std::vector<double>& status_feats, const lang::DrivingSentence& sentence,
                 int position, const ActionBundle& expert, int n_rollouts, uint64_t seed,
                 const RlConfig& rl) {
  if (position < 0 || position >= sentence.size() || !sentence.parameter_mask[position])
    throw std::logic_error("mc_reward: position is not a parameter token");
  if (n_rollouts < 1) throw std::logic_error("mc_reward: need at least one rollout");
  const lang::Field field = vocab.info(sentence.tokens[position]).field;
  const std::vector<int> prefix(sentence.tokens.begin(), sentence.tokens.begin() + position + 1);

  std::vector<double> rewards(n_rollouts, 0.0);
  const Rng base(seed);
  auto run = [&](int lo, int hi) {
    for (int n = lo; n < hi; ++n)
      rewards[n] = rollout_reward(model, vocab, pooled, status_feats, prefix, field, expert,
                                  base.fork(n).next_u64(), rl);
  };
  if (rl.mc_threads > 1 && n_rollouts > 1) {
    const int workers = std::min(rl.mc_threads, n_rollouts);
    std::vector<std::thread> pool;
    const int chunk = (n_rollouts + workers - 1) / workers;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back(run, w * chunk, std::min(n_rollouts, (w + 1) * chunk));
    for (auto& t : pool) t.join();
  } else {
    run(0, n_rollouts);
  }
  return pairwise_mean(std::move(rewards));
}

double mle_step(Model& model, const lang::Vocab& vocab,
                const std::vector<const PreparedRecord*>& batch, double step_size,
                const TrainOptions& opts) {
  (void)vocab;
  Model grads = make_like(model);
  const double nll = accumulate_mle(model, batch, grads, opts);
  if (!std::isfinite(nll)) throw NonFinite("mle_step: loss is not finite");
  nn::sgd_update(collect_params(model), collect_params(grads), step_size);
  return nll;
}

namespace {

// one masked position of an on-policy sample, kept for the gradient passes
struct PgItem {
  const PreparedRecord* rec;
  std::vector<int> window;
  int token;
  double advantage;
  double norm;      // batch * masked-position normalizer
  double old_logp;  // log-probability under the sampling policy
};

}  // namespace

TrainStats rl_step(Model& model, const lang::Vocab& vocab,
                   const std::vector<const PreparedRecord*>& batch, const RlConfig& rl,
                   double step_size, uint64_t seed, nn::AdamState* adam) {
  TrainStats stats;
  Model grads = make_like(model);
  stats.nll = accumulate_mle(model, batch, grads, rl.train);

  if (rl.lambda != 0.0) {
    const Rng base(seed);
    double reward_sum = 0.0;
    std::vector<PgItem> items;
    for (size_t i = 0; i < batch.size(); ++i) {
      const PreparedRecord& rec = *batch[i];
      lang::DrivingSentence prompt = rec.sentence;
      prompt.tokens.resize(rec.sentence.prompt_len);
      prompt.prompt_len = rec.sentence.prompt_len;
      const lang::DrivingSentence sampled =
          sample_sequence(model, vocab, rec.pooled, rec.status_feats, prompt, rl.temperature,
                          base.fork(i * 2 + 1).next_u64());

      std::vector<int> masked;
      for (int t = sampled.prompt_len; t < sampled.size(); ++t)
        if (sampled.parameter_mask[t]) masked.push_back(t);
      if (masked.empty()) continue;

      const double norm = static_cast<double>(batch.size()) * static_cast<double>(masked.size());
      for (size_t m = 0; m < masked.size(); ++m) {
        const int t = masked[m];
        const double reward =
            mc_reward(model, vocab, rec.pooled, rec.status_feats, sampled, t, rec.expert,
                      rl.n_rollouts, base.fork(i * 1000003 + m * 7919).next_u64(), rl);
        const int cat = reward_category(vocab.info(sampled.tokens[t]).field);
        const double baseline = model.policy.baseline_mean[cat];
        model.policy.baseline_count[cat] += 1.0;
        model.policy.baseline_mean[cat] +=
            (reward - model.policy.baseline_mean[cat]) / model.policy.baseline_count[cat];

        PgItem item;
        item.rec = &rec;
        item.window = trailing_window(model.policy.core.cfg, sampled.tokens, t, 0);
        item.token = sampled.tokens[t];
        item.advantage = reward - baseline;
        item.norm = norm;
        const auto features =
            assemble_features(model.policy.core, rec.pooled, rec.status_feats, item.window);
        item.old_logp =
            log_softmax_at(next_token_logits(model.policy.core, features), item.token);
        items.push_back(std::move(item));
        reward_sum += reward;
      }
    }
    if (!items.empty()) stats.mean_reward = reward_sum / static_cast<double>(items.size());

    if (!rl.ppo) {
      for (const auto& item : items) {
        const auto features = assemble_features(model.policy.core, item.rec->pooled,
                                                item.rec->status_feats, item.window);
        const double coeff = rl.lambda * item.advantage / item.norm;
        const double logp = accumulate_logprob_grad(model.policy.core, features, item.window,
                                                    item.token, coeff, grads.policy.core, nullptr);
        stats.l_rl -= logp * item.advantage / item.norm;
      }
    } else {
      // clipped-ratio surrogate: several passes over the same sample, each
      // applying a fraction of the step; the MLE term rides the first pass
      const int epochs = std::max(1, rl.ppo_epochs);
      for (int epoch = 0; epoch < epochs; ++epoch) {
        Model pass_grads = epoch == 0 ? std::move(grads) : make_like(model);
        for (const auto& item : items) {
          const auto features = assemble_features(model.policy.core, item.rec->pooled,
                                                  item.rec->status_feats, item.window);
          const auto logits = next_token_logits(model.policy.core, features);
          const double logp = log_softmax_at(logits, item.token);
          const double ratio = std::exp(logp - item.old_logp);
          const bool clipped = (item.advantage >= 0.0 && ratio > 1.0 + rl.ppo_clip) ||
                               (item.advantage < 0.0 && ratio < 1.0 - rl.ppo_clip);
          if (epoch == 0) stats.l_rl -= logp * item.advantage / item.norm;
          if (clipped) continue;
          const double coeff = rl.lambda * item.advantage * ratio / item.norm;
          accumulate_logprob_grad(model.policy.core, features, item.window, item.token, coeff,
                                  pass_grads.policy.core, nullptr);
        }
        auto refs = collect_params(pass_grads);
        if (epoch == 0) stats.grad_norm = nn::grad_norm(refs);
        auto params = collect_params(model);
        if (adam) adam->update(params, refs, step_size / epochs);
        else nn::sgd_update(params, refs, step_size / epochs);
      }
      if (!std::isfinite(stats.nll) || !std::isfinite(stats.l_rl))
        throw NonFinite("rl_step: loss is not finite");
      return stats;
    }
  }

  if (!std::isfinite(stats.nll) || !std::isfinite(stats.l_rl))
    throw NonFinite("rl_step: loss is not finite");
  auto grad_refs = collect_params(grads);
  stats.grad_norm = nn::grad_norm(grad_refs);
  auto params = collect_params(model);
  if (adam) adam->update(params, grad_refs, step_size);
  else nn::sgd_update(params, grad_refs, step_size);
  return stats;
}

double uncertainty(const Model& model, const std::vector<double>& pooled) {
  double z = model.policy.unc_b[0];
  for (size_t i = 0; i < model.policy.unc_w.size(); ++i) z += model.policy.unc_w[i] * pooled[i];
  return 1.0 / (1.0 + std::exp(-z));
}

double uncertainty_train_step(Model& model, const std::vector<const UncertaintySample*>& batch,
                              double step_size) {
  if (batch.empty()) return 0.0;
  std::vector<double> gw(model.policy.unc_w.size(), 0.0);
  double gb = 0.0;
  double loss = 0.0;
  const double coeff = 1.0 / static_cast<double>(batch.size());
  for (const auto* s : batch) {
    double z = model.policy.unc_b[0];
    for (size_t i = 0; i < gw.size(); ++i) z += model.policy.unc_w[i] * s->pooled[i];
    const double y = static_cast<double>(s->label);
    // stable BCE on the logit
    loss += coeff * (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z))));
    const double sig = 1.0 / (1.0 + std::exp(-z));
    const double dz = coeff * (sig - y);
    for (size_t i = 0; i < gw.size(); ++i) gw[i] += dz * s->pooled[i];
    gb += dz;
  }
  if (!std::isfinite(loss)) throw NonFinite("uncertainty_train_step: loss is not finite");
  for (size_t i = 0; i < gw.size(); ++i) model.policy.unc_w[i] -= step_size * gw[i];
  model.policy.unc_b[0] -= step_size * gb;
  return loss;
}

}  // namespace tokendrive::policy
