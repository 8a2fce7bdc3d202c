#pragma once

#include <cstdint>
#include <vector>

#include "tokendrive/nn/params.hpp"
#include "tokendrive/rng.hpp"
#include "tokendrive/tensor.hpp"

namespace tokendrive::policy {

// Linear-softmax autoregressive head over a fixed feature map: pooled encoder
// output, status features, and the embeddings of the trailing window of
// previously emitted tokens. Kept vocabulary-agnostic so toy instances remain
// exactly enumerable in tests.
struct PolicyConfig {
  int vocab_size = 0;
  int embed_dim = 8;
  int window = 8;
  int pooled_dim = 64;
  int status_dim = 7;
  int max_len = 192;

  int feature_dim() const { return pooled_dim + status_dim + window * embed_dim; }
};

struct PolicyCore {
  PolicyConfig cfg;
  Mat embed;               // vocab x embed_dim
  Mat w;                   // feature_dim x vocab
  std::vector<double> b;   // vocab
};

PolicyCore make_policy_core(const PolicyConfig& cfg, uint64_t seed);
PolicyCore make_like(const PolicyCore& p);
std::vector<nn::ParamRef> collect_params(PolicyCore& p);

// The trailing window of ids before position t of `tokens`, left-padded with
// pad_id. Always exactly cfg.window entries.
std::vector<int> trailing_window(const PolicyConfig& cfg, const std::vector<int>& tokens,
                                 int t, int pad_id);

std::vector<double> assemble_features(const PolicyCore& p, const std::vector<double>& pooled,
                                      const std::vector<double>& status,
                                      const std::vector<int>& window);

// Deterministic logits; softmax of these is the sampling distribution.
std::vector<double> next_token_logits(const PolicyCore& p, const std::vector<double>& features);

std::vector<double> softmax(const std::vector<double>& logits);
double log_softmax_at(const std::vector<double>& logits, int index);

// Temperature 0 is argmax with lowest-index tie break; otherwise a seeded
// CDF walk in index order.
int sample_from_logits(const std::vector<double>& logits, double temperature, Rng& rng);

// Accumulates coeff * d(-log p(target))/d(params). Embedding gradients flow to
// the rows named in `window`; the pooled slice of the feature gradient is
// added to *dpooled when given. Returns log p(target).
double accumulate_logprob_grad(const PolicyCore& p, const std::vector<double>& features,
                               const std::vector<int>& window, int target, double coeff,
                               PolicyCore& grad, std::vector<double>* dpooled);

struct SampledTokens {
  std::vector<int> tokens;  // newly generated ids (prompt not included)
  bool truncated = false;
};

// Samples until end_id or max_new tokens. Fully determined by `rng`.
SampledTokens sample_tokens(const PolicyCore& p, const std::vector<double>& pooled,
                            const std::vector<double>& status, const std::vector<int>& prefix,
                            int pad_id, int end_id, double temperature, int max_new, Rng& rng);

}  // namespace tokendrive::policy
