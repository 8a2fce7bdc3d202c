#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "tokendrive/expert/corpus.hpp"
#include "tokendrive/policy/policy.hpp"

namespace tokendrive::train {

struct PrepareOptions {
  bool keep_tensors = false;  // retain raw grids (needed to train the encoder)
  int threads = 2;
};

// Tokenizes every corpus record and caches its pooled encoding under the
// given (frozen) encoder. Deterministic; parallelizes across records.
std::vector<policy::PreparedRecord> prepare_records(const expert::Corpus& corpus,
                                                    const nn::EncoderParams& encoder,
                                                    const lang::Vocab& vocab,
                                                    const PrepareOptions& opts);

// Deterministic 80/20 split: every fifth record is held out.
void split_records(const std::vector<policy::PreparedRecord>& all,
                   std::vector<const policy::PreparedRecord*>& train,
                   std::vector<const policy::PreparedRecord*>& heldout);

struct MleOptions {
  int steps = 1500;
  int batch = 16;
  double step_size = 2.0;
  uint64_t seed = 1;
  policy::TrainOptions train;
  int log_every = 50;
};

// Seeded batches with replacement; one structured log line per step. Returns
// the final-step mean NLL.
double train_mle(policy::Model& model, const lang::Vocab& vocab,
                 const std::vector<const policy::PreparedRecord*>& records,
                 const MleOptions& opts, std::ostream* log);

struct RlOptions {
  int steps = 2000;
  int batch = 1;
  double step_size = 0.0125;
  bool adam = false;  // adaptive-moment updates; plain descent when false
  uint64_t seed = 1;
  policy::RlConfig rl;
  int log_every = 50;
};

void tune_rl(policy::Model& model, const lang::Vocab& vocab,
             const std::vector<const policy::PreparedRecord*>& records, const RlOptions& opts,
             std::ostream* log);

struct UncertaintyOptions {
  int steps = 2000;
  int batch = 32;
  double step_size = 1.0;
  uint64_t seed = 1;
  int log_every = 100;
};

// Trains the uncertainty head on the records that carry a model action,
// drawing label-balanced batches. Returns the final mean BCE.
double train_uncertainty(policy::Model& model,
                         const std::vector<const policy::PreparedRecord*>& records,
                         const UncertaintyOptions& opts, std::ostream* log);

// Mean waypoint L1 of greedy generations against the expert actions;
// unparseable generations contribute `fail_penalty`.
double heldout_waypoint_l1(const policy::Model& model, const lang::Vocab& vocab,
                           const std::vector<const policy::PreparedRecord*>& records,
                           double fail_penalty);

}  // namespace tokendrive::train
