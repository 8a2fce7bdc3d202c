#include "tokendrive/train/train.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "tokendrive/lang/parse.hpp"

namespace tokendrive::train {

std::vector<policy::PreparedRecord> prepare_records(const expert::Corpus& corpus,
                                                    const nn::EncoderParams& encoder,
                                                    const lang::Vocab& vocab,
                                                    const PrepareOptions& opts) {
  std::vector<policy::PreparedRecord> out(corpus.records.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= corpus.records.size()) return;
      const expert::CorpusRecord& rec = corpus.records[i];
      policy::PreparedRecord& p = out[i];
      const Tensor3 cam = corpus.load_camera(rec);
      const Tensor3 bev = corpus.load_bev(rec);
      const nn::FrameEncoding enc = nn::encode_frame(encoder, cam, bev, nullptr);
      p.pooled = enc.pooled;
      if (opts.keep_tensors) {
        p.camera = cam;
        p.bev = bev;
      }
      p.status = rec.status;
      p.status_feats = policy::status_features(rec.status);
      p.expert = rec.expert_action;
      p.hazard_dist = rec.hazard_dist;
      p.label = rec.uncertainty_label;
      p.has_model_action = rec.model_action.has_value();
      p.task_mode = rec.task_mode;

      lang::DrivingSentence prompt;
      prompt.tokens = vocab.encode(rec.prompt_text);
      prompt.prompt_len = static_cast<int>(prompt.tokens.size());
      const std::vector<int> completion = vocab.encode(rec.supervision_text);
      p.sentence = lang::join_sentence(prompt, completion, vocab);
    }
  };
  const int n_threads = std::max(1, opts.threads);
  if (n_threads > 1 && corpus.records.size() > 1) {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  } else {
    worker();
  }
  return out;
}

void split_records(const std::vector<policy::PreparedRecord>& all,
                   std::vector<const policy::PreparedRecord*>& train,
                   std::vector<const policy::PreparedRecord*>& heldout) {
  train.clear();
  heldout.clear();
  for (size_t i = 0; i < all.size(); ++i) {
    if (i % 5 == 4) heldout.push_back(&all[i]);
    else train.push_back(&all[i]);
  }
}

namespace {

std::vector<const policy::PreparedRecord*> draw_batch(
    const std::vector<const policy::PreparedRecord*>& records, int batch, Rng& rng) {
  std::vector<const policy::PreparedRecord*> out;
  for (int i = 0; i < batch; ++i)
    out.push_back(records[rng.uniform_index(records.size())]);
  return out;
}

}  // namespace

double train_mle(policy::Model& model, const lang::Vocab& vocab,
                 const std::vector<const policy::PreparedRecord*>& records,
                 const MleOptions& opts, std::ostream* log) {
  if (records.empty()) return 0.0;
  Rng rng(opts.seed ^ 0x3314ull);
  double nll = 0.0;
  for (int step = 0; step < opts.steps; ++step) {
    Rng step_rng = rng.fork(step);
    const auto batch = draw_batch(records, opts.batch, step_rng);
    nll = policy::mle_step(model, vocab, batch, opts.step_size, opts.train);
    if (log && (step % opts.log_every == 0 || step + 1 == opts.steps))
      (*log) << "step " << step << " loss " << nll << " reward 0 grad_norm -\n";
  }
  return nll;
}

void tune_rl(policy::Model& model, const lang::Vocab& vocab,
             const std::vector<const policy::PreparedRecord*>& records, const RlOptions& opts,
             std::ostream* log) {
  if (records.empty()) return;
  Rng rng(opts.seed ^ 0x91ull);
  nn::AdamState adam;
  for (int step = 0; step < opts.steps; ++step) {
    Rng step_rng = rng.fork(step);
    const auto batch = draw_batch(records, opts.batch, step_rng);
    const policy::TrainStats stats =
        policy::rl_step(model, vocab, batch, opts.rl, opts.step_size, step_rng.next_u64(),
                        opts.adam ? &adam : nullptr);
    if (log && (step % opts.log_every == 0 || step + 1 == opts.steps))
      (*log) << "step " << step << " loss " << stats.nll + opts.rl.lambda * stats.l_rl
             << " reward " << stats.mean_reward << " grad_norm " << stats.grad_norm << "\n";
  }
}

double train_uncertainty(policy::Model& model,
                         const std::vector<const policy::PreparedRecord*>& records,
                         const UncertaintyOptions& opts, std::ostream* log) {
  std::vector<policy::UncertaintySample> samples;
  std::vector<size_t> positive, negative;
  for (const auto* rec : records) {
    if (!rec->has_model_action) continue;
    samples.push_back({rec->pooled, rec->label});
    (rec->label ? positive : negative).push_back(samples.size() - 1);
  }
  if (samples.empty()) return 0.0;

  // Standardize the pooled features for the optimization and fold the
  // transform back into the affine head afterwards; the trained function
  // class is unchanged, the conditioning is not.
  const size_t dim = samples[0].pooled.size();
  std::vector<double> mu(dim, 0.0), sd(dim, 0.0);
  for (const auto& s : samples)
    for (size_t j = 0; j < dim; ++j) mu[j] += s.pooled[j];
  for (auto& v : mu) v /= static_cast<double>(samples.size());
  for (const auto& s : samples)
    for (size_t j = 0; j < dim; ++j) sd[j] += (s.pooled[j] - mu[j]) * (s.pooled[j] - mu[j]);
  for (auto& v : sd) v = std::max(1e-6, std::sqrt(v / static_cast<double>(samples.size())));
  for (auto& s : samples)
    for (size_t j = 0; j < dim; ++j) s.pooled[j] = (s.pooled[j] - mu[j]) / sd[j];

  // start from the equivalent standardized weights so repeated training is
  // well defined
  std::vector<double> w0 = model.policy.unc_w;
  model.policy.unc_b[0] += [&] {
    double shift = 0.0;
    for (size_t j = 0; j < dim; ++j) {
      model.policy.unc_w[j] = w0[j] * sd[j];
      shift += w0[j] * mu[j];
    }
    return shift;
  }();

  Rng rng(opts.seed ^ 0x0bce11ull);
  double bce = 0.0;
  for (int step = 0; step < opts.steps; ++step) {
    Rng step_rng = rng.fork(step);
    std::vector<const policy::UncertaintySample*> batch;
    for (int i = 0; i < opts.batch; ++i) {
      // label-balanced draw so the head's scores straddle the gate even on
      // skewed corpora
      const bool want_pos = !positive.empty() && (negative.empty() || (i % 2 == 0));
      const auto& pool = want_pos ? positive : negative;
      batch.push_back(&samples[pool[step_rng.uniform_index(pool.size())]]);
    }
    bce = policy::uncertainty_train_step(model, batch, opts.step_size);
    if (log && (step % opts.log_every == 0 || step + 1 == opts.steps))
      (*log) << "step " << step << " loss " << bce << " reward 0 grad_norm -\n";
  }

  // fold the standardization into the stored affine head
  double shift = 0.0;
  for (size_t j = 0; j < dim; ++j) {
    const double wj = model.policy.unc_w[j];
    model.policy.unc_w[j] = wj / sd[j];
    shift += wj * mu[j] / sd[j];
  }
  model.policy.unc_b[0] -= shift;
  return bce;
}

double heldout_waypoint_l1(const policy::Model& model, const lang::Vocab& vocab,
                           const std::vector<const policy::PreparedRecord*>& records,
                           double fail_penalty) {
  if (records.empty()) return 0.0;
  double total = 0.0;
  for (const auto* rec : records) {
    lang::DrivingSentence prompt = rec->sentence;
    prompt.tokens.resize(rec->sentence.prompt_len);
    prompt.prompt_len = rec->sentence.prompt_len;
    const lang::DrivingSentence out = policy::sample_sequence(
        model, vocab, rec->pooled, rec->status_feats, prompt, 0.0, 1);
    const std::vector<int> tail(out.tokens.begin() + out.prompt_len, out.tokens.end());
    const lang::ParseResult parsed = lang::parse_action(vocab.detokenize(tail), vocab);
    if (!parsed.ok()) {
      total += fail_penalty;
      continue;
    }
    double l1 = 0.0;
    for (int i = 0; i < 4; ++i) l1 += (parsed.action.waypoints[i] - rec->expert.waypoints[i]).l1();
    total += l1 / 4.0;
  }
  return total / static_cast<double>(records.size());
}

}  // namespace tokendrive::train
