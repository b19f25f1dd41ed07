#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepglioma/core/array_io.hpp"
#include "deepglioma/core/layers.hpp"
#include "deepglioma/genomics/glove.hpp"
#include "deepglioma/genomics/labels.hpp"

namespace deepglioma::classifier {

using genomics::LabelState;

// ---------------------------------------------------------------------------
// Label masking

/// provided[l] is true when label l is shown to the model as input.
struct MaskSample {
  std::vector<bool> provided;

  std::size_t size() const noexcept { return provided.size(); }
  std::size_t provided_count() const { return static_cast<std::size_t>(std::count(provided.begin(), provided.end(), true)); }
  bool masked(std::size_t l) const { return !provided.at(l); }
};

/// Number of provided labels: round(fraction * n), kept below n so at least
/// one label is always masked.
inline std::size_t provided_label_count(std::size_t n_labels, double provided_fraction) {
  if (!(provided_fraction >= 0.0 && provided_fraction < 1.0)) {
    throw std::invalid_argument("provided_fraction must lie in [0, 1), got " + std::to_string(provided_fraction));
  }
  if (n_labels == 0) return 0;
  const auto k = static_cast<std::size_t>(std::llround(provided_fraction * static_cast<double>(n_labels)));
  return std::min(k, n_labels - 1);
}

template <class Rng>
MaskSample sample_label_mask(std::size_t n_labels, double provided_fraction, Rng& rng) {
  const std::size_t k = provided_label_count(n_labels, provided_fraction);
  std::vector<std::size_t> order(n_labels);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates with explicit draws keeps the result library independent.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_labels - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  MaskSample m{std::vector<bool>(n_labels, false)};
  for (std::size_t i = 0; i < k; ++i) m.provided[order[i]] = true;
  return m;
}

inline MaskSample sample_label_mask(std::size_t n_labels, double provided_fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_label_mask(n_labels, provided_fraction, rng);
}

/// Input states: true state where provided, masked elsewhere.
inline std::vector<LabelState> masked_states(const genomics::LabelVector& labels, const MaskSample& mask) {
  if (labels.size() != mask.size()) throw std::invalid_argument("masked_states: label and mask lengths differ");
  std::vector<LabelState> s(labels.size(), LabelState::masked);
  for (std::size_t l = 0; l < s.size(); ++l)
    if (mask.provided[l]) s[l] = labels.states[l];
  return s;
}

// ---------------------------------------------------------------------------
// Binary relevance

/// One logistic unit per label over the frozen feature vector.
struct LinearHead {
  ad::Linear logits;

  LinearHead(std::size_t feature_dim, std::size_t labels, ad::Rng& rng) : logits("linear_head", feature_dim, labels, rng) {}

  std::size_t feature_dim() const { return logits.in_features(); }
  std::size_t labels() const { return logits.out_features(); }

  /// z: [B, d] -> probabilities [B, n].
  ad::Var probabilities(ad::Tape& t, ad::Var z) {
    if (z.shape().size() != 2 || z.shape()[1] != feature_dim()) {
      throw std::invalid_argument("LinearHead: expected features [B, " + std::to_string(feature_dim()) + "], got " +
                                  ad::shape_string(z.shape()));
    }
    return ad::sigmoid(logits(t, z));
  }

  std::vector<ad::Parameter*> parameters() { return logits.parameters(); }
};

// ---------------------------------------------------------------------------
// Transformer over [image token, label tokens]

struct TransformerConfig {
  std::size_t heads = 4;
  std::size_t layers = 3;
  std::size_t ffn_multiplier = 2;
};

/// logits[b * n + l] = <H[b * n + l], W[l]>: the diagonal of H_b W^T for every block b.
inline ad::Var tied_logits(ad::Var h, ad::Var w) {
  const std::size_t n = w.shape().at(0);
  if (h.shape().size() != 2 || h.shape()[1] != w.shape().at(1) || h.shape()[0] % n != 0) {
    throw std::invalid_argument("tied_logits: outputs " + ad::shape_string(h.shape()) + " do not match embedding " +
                                ad::shape_string(w.shape()));
  }
  std::vector<std::size_t> rows(h.shape()[0]);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i % n;
  return ad::rowwise_dot(h, ad::gather_rows(w, rows));
}

class TransformerHead {
 public:
  /// `embedding`: one d_e-dimensional row per label (the mutant token rows).
  TransformerHead(std::size_t feature_dim, const ad::Array& embedding, TransformerConfig cfg, ad::Rng& rng,
                  bool train_embedding = false)
      : cfg_(cfg), train_embedding_(train_embedding), embedding_("label_embedding", embedding) {
    if (embedding.rank() != 2 || embedding.rows() == 0) throw std::invalid_argument("TransformerHead: embedding must be [n, d_e]");
    const std::size_t de = embedding.cols();
    width_ = std::max(feature_dim, de);
    feature_dim_ = feature_dim;
    if (width_ % cfg.heads != 0) {
      width_ = (width_ + cfg.heads - 1) / cfg.heads * cfg.heads;
    }
    state_embedding_ = ad::Parameter("state_embedding", ad::random_normal({3, de}, 0.1, rng));
    if (feature_dim != width_) image_proj_ = std::make_unique<ad::Linear>("image_proj", feature_dim, width_, rng);
    if (de != width_) label_proj_ = std::make_unique<ad::Linear>("label_proj", de, width_, rng);
    for (std::size_t i = 0; i < cfg.layers; ++i) {
      const std::string p = "layer" + std::to_string(i);
      auto layer = std::make_unique<Layer>();
      layer->attn = ad::MultiHeadAttention(p + ".attn", width_, cfg.heads, rng);
      layer->norm1 = ad::LayerNorm(p + ".norm1", width_);
      layer->ff1 = ad::Linear(p + ".ff1", width_, cfg.ffn_multiplier * width_, rng);
      layer->ff2 = ad::Linear(p + ".ff2", cfg.ffn_multiplier * width_, width_, rng);
      layer->norm2 = ad::LayerNorm(p + ".norm2", width_);
      layers_.push_back(std::move(layer));
    }
    out_proj_ = ad::Linear("out_proj", width_, de, rng);
  }

  std::size_t labels() const { return embedding_.value.rows(); }
  std::size_t embedding_dim() const { return embedding_.value.cols(); }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t width() const { return width_; }
  const TransformerConfig& config() const { return cfg_; }
  bool trains_embedding() const { return train_embedding_; }
  const ad::Array& embedding() const { return embedding_.value; }

  /// Output latents H for the label tokens, [B * n, d_e], image-token rows dropped.
  ad::Var label_outputs(ad::Tape& t, ad::Var z, const std::vector<LabelState>& states,
                        ad::AttentionWeights* last_attention = nullptr) {
    const std::size_t n = labels();
    if (z.shape().size() != 2 || z.shape()[1] != feature_dim_) {
      throw std::invalid_argument("TransformerHead: expected features [B, " + std::to_string(feature_dim_) + "], got " +
                                  ad::shape_string(z.shape()));
    }
    const std::size_t b = z.shape()[0];
    if (states.size() != b * n) throw std::invalid_argument("TransformerHead: need one state per label per example");
    ad::Var w = t.param(embedding_);
    std::vector<std::size_t> gene_rows(b * n), state_rows(b * n);
    for (std::size_t i = 0; i < b * n; ++i) {
      gene_rows[i] = i % n;
      state_rows[i] = static_cast<std::size_t>(states[i]);
    }
    ad::Var label_tokens = ad::add(ad::gather_rows(w, gene_rows), ad::gather_rows(t.param(state_embedding_), state_rows));
    if (label_proj_) label_tokens = (*label_proj_)(t, label_tokens);
    ad::Var image_tokens = image_proj_ ? (*image_proj_)(t, z) : z;
    // Interleave into blocks [z_b, e_b1, ..., e_bn].
    const std::size_t block = n + 1;
    std::vector<std::size_t> order(b * block), label_rows(b * n);
    for (std::size_t s = 0; s < b; ++s) {
      order[s * block] = s;
      for (std::size_t l = 0; l < n; ++l) {
        order[s * block + 1 + l] = b + s * n + l;
        label_rows[s * n + l] = s * block + 1 + l;
      }
    }
    const std::vector<ad::Var> parts{image_tokens, label_tokens};
    ad::Var h = ad::gather_rows(ad::concat_rows(parts), order);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Layer& L = *layers_[i];
      ad::AttentionWeights* aw = i + 1 == layers_.size() ? last_attention : nullptr;
      h = L.norm1(t, ad::add(h, L.attn(t, h, block, aw)));
      h = L.norm2(t, ad::add(h, L.ff2(t, ad::relu(L.ff1(t, h)))));
    }
    return out_proj_(t, ad::gather_rows(h, label_rows));
  }

  /// Probabilities [B, n] = sigmoid(diag(H_b W^T)).
  ad::Var probabilities(ad::Tape& t, ad::Var z, const std::vector<LabelState>& states) {
    ad::Var logits = tied_logits(label_outputs(t, z, states), t.param(embedding_));
    return ad::sigmoid(ad::reshape(logits, {z.shape()[0], labels()}));
  }

  /// Trainable parameters; the label embedding only when it is not frozen.
  std::vector<ad::Parameter*> parameters() {
    std::vector<ad::Parameter*> ps{&state_embedding_};
    if (image_proj_)
      for (auto* p : image_proj_->parameters()) ps.push_back(p);
    if (label_proj_)
      for (auto* p : label_proj_->parameters()) ps.push_back(p);
    for (auto& L : layers_) {
      for (auto* p : L->attn.parameters()) ps.push_back(p);
      for (auto* p : ad::concat_params(L->norm1.parameters(), L->ff1.parameters(), L->ff2.parameters(),
                                       L->norm2.parameters()))
        ps.push_back(p);
    }
    for (auto* p : out_proj_.parameters()) ps.push_back(p);
    if (train_embedding_) ps.push_back(&embedding_);
    return ps;
  }

  /// Everything a checkpoint must hold.
  std::vector<ad::Parameter*> all_parameters() {
    auto ps = parameters();
    if (!train_embedding_) ps.push_back(&embedding_);
    return ps;
  }

  ad::Parameter& embedding_parameter() { return embedding_; }

 private:
  struct Layer {
    ad::MultiHeadAttention attn;
    ad::LayerNorm norm1;
    ad::Linear ff1, ff2;
    ad::LayerNorm norm2;
  };

  TransformerConfig cfg_;
  bool train_embedding_;
  std::size_t feature_dim_ = 0, width_ = 0;
  ad::Parameter embedding_;
  ad::Parameter state_embedding_;
  std::unique_ptr<ad::Linear> image_proj_, label_proj_;
  std::vector<std::unique_ptr<Layer>> layers_;
  ad::Linear out_proj_;
};

}  // namespace deepglioma::classifier
