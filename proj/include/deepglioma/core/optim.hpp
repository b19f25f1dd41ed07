#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepglioma/core/tape.hpp"

namespace deepglioma::ad {

/// lr_min + (lr_max - lr_min) * (1 + cos(pi * step / total)) / 2
inline double cosine_lr(std::size_t step, std::size_t total, double lr_max, double lr_min = 0.0) {
  if (total == 0) throw std::invalid_argument("cosine_lr: total must be positive");
  if (step > total) {
    throw std::invalid_argument("cosine_lr: step " + std::to_string(step) + " beyond total " +
                                std::to_string(total));
  }
  if (lr_min > lr_max) throw std::invalid_argument("cosine_lr: lr_min exceeds lr_max");
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Cosine annealing over `total_steps` when non-zero; constant lr otherwise.
  std::size_t total_steps = 0;
  double lr_min = 0.0;
};

struct OptimizerState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<Array> first_moment;
  std::vector<Array> second_moment;

  double current_lr() const {
    if (config.total_steps == 0) return config.lr;
    return cosine_lr(std::min(step, config.total_steps), config.total_steps, config.lr, config.lr_min);
  }
};

inline OptimizerState make_adam(const std::vector<Parameter*>& params, AdamConfig config = {}) {
  OptimizerState s;
  s.config = config;
  for (const Parameter* p : params) {
    s.first_moment.push_back(Array::zeros_like(p->value));
    s.second_moment.push_back(Array::zeros_like(p->value));
  }
  return s;
}

/// One bias-corrected Adam update applied in place. Returns the learning rate used.
inline double adam_step(OptimizerState& state, std::span<Parameter* const> params, std::span<const Array> grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  }
  const double lr = state.current_lr();
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Array& w = params[k]->value;
    const Array& g = grads[k];
    Array& m = state.first_moment[k];
    Array& v = state.second_moment[k];
    if (g.shape() != w.shape() || m.shape() != w.shape()) {
      throw std::invalid_argument("adam_step: shape mismatch for '" + params[k]->name + "'");
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
  ++state.step;
  return lr;
}

inline double adam_step(OptimizerState& state, const std::vector<Parameter*>& params,
                        const std::vector<Array>& grads) {
  return adam_step(state, std::span<Parameter* const>(params.data(), params.size()),
                   std::span<const Array>(grads.data(), grads.size()));
}

}  // namespace deepglioma::ad
