#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "deepglioma/core/ops.hpp"

namespace deepglioma::classifier {

inline constexpr double kProbClamp = 1e-12;

/// -sum coef * [y log p + (1 - y) log(1 - p)] for one example, with p clamped
/// to [1e-12, 1 - 1e-12]. coef_l = weight_l when the label is active, else 0.
inline double weighted_bce(const std::vector<double>& y, const std::vector<double>& p, const std::vector<double>& weights,
                           const std::vector<bool>& active) {
  if (p.size() != y.size() || weights.size() != y.size() || active.size() != y.size()) {
    throw std::invalid_argument("weighted_bce: label, probability, weight and mask lengths differ");
  }
  double loss = 0.0;
  for (std::size_t l = 0; l < y.size(); ++l) {
    if (!active[l]) continue;
    const double q = std::clamp(p[l], kProbClamp, 1.0 - kProbClamp);
    loss -= weights[l] * (y[l] * std::log(q) + (1.0 - y[l]) * std::log(1.0 - q));
  }
  return loss;
}

/// Tape version over a batch: probs, targets and coefficients all [B, n].
inline ad::Var weighted_bce(ad::Var probs, const ad::Array& targets, const ad::Array& coefficients) {
  if (probs.shape() != targets.shape() || probs.shape() != coefficients.shape()) {
    throw std::invalid_argument("weighted_bce: shape mismatch " + ad::shape_string(probs.shape()) + " vs " +
                                ad::shape_string(targets.shape()) + " / " + ad::shape_string(coefficients.shape()));
  }
  ad::Array pos(targets.shape()), neg(targets.shape());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    pos[i] = coefficients[i] * targets[i];
    neg[i] = coefficients[i] * (1.0 - targets[i]);
  }
  ad::Var q = ad::clamp(probs, kProbClamp, 1.0 - kProbClamp);
  ad::Var ll = ad::add(ad::mul_const(ad::log(q), pos), ad::mul_const(ad::log(ad::affine(q, -1.0, 1.0)), neg));
  return ad::scale(ad::sum(ll), -1.0);
}

}  // namespace deepglioma::classifier
