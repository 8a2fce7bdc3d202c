#pragma once

#include <string>
#include <vector>

namespace tokendrive::nn {

// Named view of one parameter tensor. Modules expose their trainable state as
// a flat list of these so the optimizer, the checkpoint codec and the
// finite-difference checker never need to know the concrete structs.
struct ParamRef {
  std::string name;
  std::vector<double>* data = nullptr;
  std::vector<int> shape;
  bool trainable = true;
};

inline size_t total_size(const std::vector<ParamRef>& refs) {
  size_t n = 0;
  for (const auto& r : refs) n += r.data->size();
  return n;
}

// p -= step * g, matching ref lists (plain gradient descent).
void sgd_update(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
                double step);

// Adam-style adaptive update; moment buffers live in the optimizer.
class AdamState {
 public:
  AdamState(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void update(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
              double step);

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

double grad_norm(const std::vector<ParamRef>& grads);
void zero_grads(const std::vector<ParamRef>& grads);

}  // namespace tokendrive::nn
