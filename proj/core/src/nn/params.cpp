#include "tokendrive/nn/params.hpp"

#include <cmath>
#include <stdexcept>

namespace tokendrive::nn {

void sgd_update(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
                double step) {
  if (params.size() != grads.size()) throw std::logic_error("sgd_update: ref lists differ");
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    auto& p = *params[i].data;
    const auto& g = *grads[i].data;
    if (p.size() != g.size()) throw std::logic_error("sgd_update: size mismatch " + params[i].name);
    for (size_t j = 0; j < p.size(); ++j) p[j] -= step * g[j];
  }
}

void AdamState::update(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
                       double step) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].data->size(), 0.0);
      v_[i].assign(params[i].data->size(), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    auto& p = *params[i].data;
    const auto& g = *grads[i].data;
    for (size_t j = 0; j < p.size(); ++j) {
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
      p[j] -= step * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_);
    }
  }
}

double grad_norm(const std::vector<ParamRef>& grads) {
  double s = 0.0;
  for (const auto& r : grads)
    for (double v : *r.data) s += v * v;
  return std::sqrt(s);
}

void zero_grads(const std::vector<ParamRef>& grads) {
  for (const auto& r : grads) std::fill(r.data->begin(), r.data->end(), 0.0);
}

}  // namespace tokendrive::nn
