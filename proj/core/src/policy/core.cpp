#include "tokendrive/policy/core.hpp"

#include <cmath>

namespace tokendrive::policy {

PolicyCore make_policy_core(const PolicyConfig& cfg, uint64_t seed) {
  PolicyCore p;
  p.cfg = cfg;
  Rng rng(seed ^ 0x2545f4914f6cdd1dull);
  p.embed = Mat(cfg.vocab_size, cfg.embed_dim);
  const double be = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
  for (auto& v : p.embed.a) v = rng.uniform(-be, be);
  p.w = Mat(cfg.feature_dim(), cfg.vocab_size);
  const double bw = 1.0 / std::sqrt(static_cast<double>(cfg.feature_dim()));
  for (auto& v : p.w.a) v = rng.uniform(-bw, bw);
  p.b.assign(cfg.vocab_size, 0.0);
  return p;
}

PolicyCore make_like(const PolicyCore& src) {
  PolicyCore p = src;
  p.embed.zero();
  p.w.zero();
  std::fill(p.b.begin(), p.b.end(), 0.0);
  return p;
}

std::vector<nn::ParamRef> collect_params(PolicyCore& p) {
  std::vector<nn::ParamRef> refs;
  refs.push_back({"policy.embed", &p.embed.a, {p.embed.rows, p.embed.cols}, true});
  refs.push_back({"policy.w", &p.w.a, {p.w.rows, p.w.cols}, true});
  refs.push_back({"policy.b", &p.b, {static_cast<int>(p.b.size())}, true});
  return refs;
}

std::vector<int> trailing_window(const PolicyConfig& cfg, const std::vector<int>& tokens, int t,
                                 int pad_id) {
  std::vector<int> window(cfg.window, pad_id);
  for (int k = 0; k < cfg.window; ++k) {
    const int idx = t - cfg.window + k;
    if (idx >= 0 && idx < static_cast<int>(tokens.size())) window[k] = tokens[idx];
  }
  return window;
}

std::vector<double> assemble_features(const PolicyCore& p, const std::vector<double>& pooled,
                                      const std::vector<double>& status,
                                      const std::vector<int>& window) {
  const PolicyConfig& cfg = p.cfg;
  if (static_cast<int>(pooled.size()) != cfg.pooled_dim ||
      static_cast<int>(status.size()) != cfg.status_dim ||
      static_cast<int>(window.size()) != cfg.window)
    throw ShapeMismatch("policy features: bad input sizes");
  std::vector<double> f(cfg.feature_dim());
  std::copy(pooled.begin(), pooled.end(), f.begin());
  std::copy(status.begin(), status.end(), f.begin() + cfg.pooled_dim);
  double* slot = f.data() + cfg.pooled_dim + cfg.status_dim;
  for (int k = 0; k < cfg.window; ++k, slot += cfg.embed_dim) {
    const double* row = p.embed.row(window[k]);
    std::copy(row, row + cfg.embed_dim, slot);
  }
  return f;
}

std::vector<double> next_token_logits(const PolicyCore& p, const std::vector<double>& features) {
  const int v = p.cfg.vocab_size;
  std::vector<double> z(p.b.begin(), p.b.end());
  for (int f = 0; f < p.w.rows; ++f) {
    const double x = features[f];
    if (x == 0.0) continue;
    const double* row = p.w.row(f);
    for (int j = 0; j < v; ++j) z[j] += x * row[j];
  }
  check_finite(z, "next_token_logits");
  return z;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  std::vector<double> p(logits.size());
  double mx = logits[0];
  for (double z : logits) mx = std::max(mx, z);
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  const double inv = 1.0 / sum;
  for (auto& v : p) v *= inv;
  return p;
}

double log_softmax_at(const std::vector<double>& logits, int index) {
  double mx = logits[0];
  for (double z : logits) mx = std::max(mx, z);
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  return logits[index] - mx - std::log(sum);
}

int sample_from_logits(const std::vector<double>& logits, double temperature, Rng& rng) {
  if (temperature <= 0.0) {
    int best = 0;
    for (size_t i = 1; i < logits.size(); ++i)
      if (logits[i] > logits[best]) best = static_cast<int>(i);
    return best;
  }
  std::vector<double> scaled(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / temperature;
  const std::vector<double> p = softmax(scaled);
  const double u = rng.uniform();
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

double accumulate_logprob_grad(const PolicyCore& p, const std::vector<double>& features,
                               const std::vector<int>& window, int target, double coeff,
                               PolicyCore& grad, std::vector<double>* dpooled) {
  const PolicyConfig& cfg = p.cfg;
  const std::vector<double> z = next_token_logits(p, features);
  const std::vector<double> probs = softmax(z);
  const double logp = log_softmax_at(z, target);

  // dlogits = coeff * (softmax - onehot)
  std::vector<double> dz = probs;
  for (auto& v : dz) v *= coeff;
  dz[target] -= coeff;

  for (size_t j = 0; j < dz.size(); ++j) grad.b[j] += dz[j];
  std::vector<double> dfeat(cfg.feature_dim(), 0.0);
  for (int f = 0; f < p.w.rows; ++f) {
    const double x = features[f];
    double* gw = grad.w.row(f);
    const double* w = p.w.row(f);
    double acc = 0.0;
    for (size_t j = 0; j < dz.size(); ++j) {
      gw[j] += x * dz[j];
      acc += w[j] * dz[j];
    }
    dfeat[f] = acc;
  }
  if (dpooled) {
    for (int j = 0; j < cfg.pooled_dim; ++j) (*dpooled)[j] += dfeat[j];
  }
  const double* slot = dfeat.data() + cfg.pooled_dim + cfg.status_dim;
  for (int k = 0; k < cfg.window; ++k, slot += cfg.embed_dim) {
    double* row = grad.embed.row(window[k]);
    for (int e = 0; e < cfg.embed_dim; ++e) row[e] += slot[e];
  }
  return logp;
}

SampledTokens sample_tokens(const PolicyCore& p, const std::vector<double>& pooled,
                            const std::vector<double>& status, const std::vector<int>& prefix,
                            int pad_id, int end_id, double temperature, int max_new, Rng& rng) {
  SampledTokens out;
  std::vector<int> seq = prefix;
  for (int step = 0; step < max_new; ++step) {
    const auto window = trailing_window(p.cfg, seq, static_cast<int>(seq.size()), pad_id);
    const auto features = assemble_features(p, pooled, status, window);
    const auto logits = next_token_logits(p, features);
    const int tok = sample_from_logits(logits, temperature, rng);
    seq.push_back(tok);
    out.tokens.push_back(tok);
    if (tok == end_id) return out;
  }
  out.truncated = true;
  return out;
}

}  // namespace tokendrive::policy
