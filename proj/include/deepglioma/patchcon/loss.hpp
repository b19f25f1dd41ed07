#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepglioma/core/layers.hpp"
#include "deepglioma/genomics/labels.hpp"

namespace deepglioma::patchcon {

using genomics::LabelState;
using genomics::LabelVector;

/// Patches of one minibatch; each carries its patient's labels.
struct ContrastiveBatch {
  std::vector<std::string> patient_ids;
  std::vector<LabelVector> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t label_count() const { return labels.empty() ? 0 : labels.front().size(); }

  void validate() const {
    if (!patient_ids.empty() && patient_ids.size() != labels.size()) {
      throw std::invalid_argument("ContrastiveBatch: patient ids and labels differ in length");
    }
    for (const auto& l : labels) {
      if (l.size() != label_count()) throw std::invalid_argument("ContrastiveBatch: label vectors differ in length");
    }
  }
};

/// Other batch items sharing the anchor's (unmasked) state for `label`.
inline std::vector<std::size_t> positives_for_label(std::size_t anchor, const ContrastiveBatch& batch, std::size_t label) {
  if (anchor >= batch.size()) throw std::out_of_range("positives_for_label: anchor outside batch");
  if (label >= batch.label_count()) throw std::out_of_range("positives_for_label: label outside panel");
  std::vector<std::size_t> out;
  const LabelState s = batch.labels[anchor].states[label];
  if (s == LabelState::masked) return out;
  for (std::size_t j = 0; j < batch.size(); ++j)
    if (j != anchor && batch.labels[j].states[label] == s) out.push_back(j);
  return out;
}

/// Coefficients M[i, p] = 1/|P(i)| for p in P(i), 0 elsewhere.
inline ad::Array positive_weights(const ContrastiveBatch& batch, std::size_t label) {
  const std::size_t n = batch.size();
  ad::Array m(ad::Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) {
    const auto pos = positives_for_label(i, batch, label);
    for (std::size_t p : pos) m[i * n + p] = 1.0 / static_cast<double>(pos.size());
  }
  return m;
}

/// Supervised contrastive loss of one label over projected rows [B, k],
/// summed over anchors. Anchors without positives add nothing.
inline ad::Var supcon_label_loss(ad::Var projected, const ContrastiveBatch& batch, std::size_t label, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("supcon_label_loss: temperature must be positive");
  batch.validate();
  if (projected.shape().size() != 2 || projected.shape()[0] != batch.size()) {
    throw std::invalid_argument("supcon_label_loss: expected " + std::to_string(batch.size()) + " projected rows, got " +
                                ad::shape_string(projected.shape()));
  }
  const ad::Array m = positive_weights(batch, label);
  bool any = false;
  for (double v : m.values()) any = any || v != 0.0;
  if (!any) return ad::scale(ad::sum(projected), 0.0);
  ad::Var u = ad::l2_normalize_rows(projected);
  ad::Var logits = ad::scale(ad::matmul_nt(u, u), 1.0 / temperature);
  return ad::scale(ad::sum(ad::mul_const(ad::log_softmax_offdiag(logits), m)), -1.0);
}

/// One linear map g_l: R^d -> R^k per label.
struct ProjectionHeads {
  std::vector<ad::Linear> heads;

  ProjectionHeads() = default;
  ProjectionHeads(std::size_t labels, std::size_t in, std::size_t out, ad::Rng& rng) {
    for (std::size_t l = 0; l < labels; ++l) heads.emplace_back("proj" + std::to_string(l), in, out, rng);
  }

  std::size_t size() const noexcept { return heads.size(); }

  std::vector<ad::Parameter*> parameters() {
    std::vector<ad::Parameter*> ps;
    for (auto& h : heads)
      for (auto* p : h.parameters()) ps.push_back(p);
    return ps;
  }
};

/// Sum over labels of weight_l * supcon_label_loss(g_l(features)).
inline ad::Var multilabel_supcon_loss(ad::Tape& t, ad::Var features, const ContrastiveBatch& batch,
                                      ProjectionHeads& heads, const std::vector<double>& weights, double temperature) {
  batch.validate();
  const std::size_t n = batch.label_count();
  if (heads.size() != n) {
    throw std::invalid_argument("multilabel_supcon_loss: " + std::to_string(n) + " labels but " +
                                std::to_string(heads.size()) + " projection heads");
  }
  if (weights.size() != n) throw std::invalid_argument("multilabel_supcon_loss: one weight per label required");
  ad::Var total = ad::scale(ad::sum(features), 0.0);
  for (std::size_t l = 0; l < n; ++l) {
    if (weights[l] < 0.0) throw std::invalid_argument("multilabel_supcon_loss: negative label weight");
    if (weights[l] == 0.0) continue;
    ad::Var z = heads.heads[l](t, features);
    total = ad::add(total, ad::scale(supcon_label_loss(z, batch, l, temperature), weights[l]));
  }
  return total;
}

}  // namespace deepglioma::patchcon
