#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepglioma/classifier/bce.hpp"
#include "deepglioma/core/optim.hpp"
#include "deepglioma/patchcon/loss.hpp"
#include "deepglioma/srh/augment.hpp"
#include "deepglioma/srh/dataset.hpp"
#include "deepglioma/srh/encoder.hpp"

namespace deepglioma::patchcon {

enum class Objective { patchcon, cross_entropy };

inline std::string to_string(Objective o) { return o == Objective::patchcon ? "patchcon" : "cross_entropy"; }

inline Objective parse_objective(const std::string& s) {
  if (s == "patchcon") return Objective::patchcon;
  if (s == "cross_entropy" || s == "ce") return Objective::cross_entropy;
  throw std::invalid_argument("unknown pretraining objective '" + s + "'");
}

struct PretrainConfig {
  Objective objective = Objective::patchcon;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::size_t projection_dim = 128;
  double temperature = 0.07;
  double lr = 1e-3, lr_min = 0.0;
  std::vector<double> label_weights;  // empty: 1 per label
  srh::AugmentConfig augment;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs == 0) throw std::invalid_argument("pretrain: epochs must be positive");
    if (batch_size < 2) throw std::invalid_argument("pretrain: batch size must be at least 2");
    if (!(temperature > 0.0)) throw std::invalid_argument("pretrain: temperature must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("pretrain: learning rate must be positive");
  }

  std::vector<double> weights_for(std::size_t labels) const {
    if (label_weights.empty()) return std::vector<double>(labels, 1.0);
    if (label_weights.size() != labels) throw std::invalid_argument("pretrain: one label weight per gene required");
    return label_weights;
  }
};

inline void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = {{"objective", to_string(c.objective)},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"projection_dim", c.projection_dim},
       {"temperature", c.temperature},
       {"lr", c.lr},
       {"lr_min", c.lr_min},
       {"label_weights", c.label_weights},
       {"augment", c.augment.enabled},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, PretrainConfig& c) {
  PretrainConfig d;
  c.objective = parse_objective(j.value("objective", to_string(d.objective)));
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.projection_dim = j.value("projection_dim", d.projection_dim);
  c.temperature = j.value("temperature", d.temperature);
  c.lr = j.value("lr", d.lr);
  c.lr_min = j.value("lr_min", d.lr_min);
  c.label_weights = j.value("label_weights", d.label_weights);
  c.augment = d.augment;
  c.augment.enabled = j.value("augment", d.augment.enabled);
  c.seed = j.value("seed", d.seed);
}

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

inline void to_json(nlohmann::json& j, const EpochLog& e) { j = {{"epoch", e.epoch}, {"loss", e.loss}, {"lr", e.lr}}; }

struct PretrainResult {
  double initial_loss = 0.0;  // per-patch loss on the unaugmented training patches
  double final_loss = 0.0;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

inline ContrastiveBatch make_batch(const srh::PatchDataset& ds, const std::vector<std::size_t>& patches) {
  ContrastiveBatch b;
  for (std::size_t i : patches) {
    const std::size_t p = ds.patches.at(i).patient;
    b.patient_ids.push_back(ds.patients[p].id);
    b.labels.push_back(ds.patient_labels(p));
  }
  return b;
}

/// Stacks pooled inputs into [B, 3, e, e], augmenting each when `rng` is given.
inline ad::Array batch_inputs(const srh::PatchDataset& ds, const std::vector<std::size_t>& patches,
                              const srh::AugmentConfig* augment = nullptr, ad::Rng* rng = nullptr) {
  const std::size_t e = ds.extent, per = ds.input_size();
  ad::Array x(ad::Shape{patches.size(), 3, e, e});
  for (std::size_t k = 0; k < patches.size(); ++k) {
    const float* src = ds.input(patches[k]);
    if (augment && rng && augment->enabled) {
      srh::ImageF img(e, e, 3);
      std::copy(src, src + per, img.data.begin());
      img = srh::augment(img, *augment, *rng);
      std::copy(img.data.begin(), img.data.end(), x.data() + k * per);
    } else {
      std::copy(src, src + per, x.data() + k * per);
    }
  }
  return x;
}

/// Throws unless at least one label has two patches sharing a state.
inline void require_positive_pairs(const srh::PatchDataset& ds, const std::vector<std::size_t>& patches) {
  for (std::size_t l = 0; l < ds.panel.size(); ++l) {
    std::size_t pos = 0, neg = 0;
    for (std::size_t i : patches) {
      const auto s = ds.patient_labels(ds.patches.at(i).patient).states[l];
      pos += s == LabelState::positive;
      neg += s == LabelState::negative;
    }
    if (pos >= 2 || neg >= 2) return;
  }
  throw std::invalid_argument("pretrain: no label has a positive pair among the " + std::to_string(patches.size()) +
                              " training patches");
}

namespace detail {

/// Objective-specific trainable head on top of the encoder.
struct PretrainHead {
  Objective objective;
  ProjectionHeads projection;
  ad::Linear logits;
  std::vector<double> weights;
  double temperature;

  PretrainHead(const PretrainConfig& cfg, std::size_t labels, std::size_t d, ad::Rng& rng)
      : objective(cfg.objective), weights(cfg.weights_for(labels)), temperature(cfg.temperature) {
    if (objective == Objective::patchcon) {
      projection = ProjectionHeads(labels, d, cfg.projection_dim, rng);
    } else {
      logits = ad::Linear("ce_head", d, labels, rng);
    }
  }

  std::vector<ad::Parameter*> parameters() {
    return objective == Objective::patchcon ? projection.parameters() : logits.parameters();
  }

  /// Summed (not averaged) loss of a batch.
  ad::Var loss(ad::Tape& t, ad::Var z, const ContrastiveBatch& batch) {
    if (objective == Objective::patchcon) return multilabel_supcon_loss(t, z, batch, projection, weights, temperature);
    const std::size_t n = batch.size(), m = batch.label_count();
    ad::Array y(ad::Shape{n, m}), coef(ad::Shape{n, m});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < m; ++l) {
        const auto s = batch.labels[i].states[l];
        y[i * m + l] = genomics::binary_target(s);
        coef[i * m + l] = s == LabelState::masked ? 0.0 : weights[l];
      }
    return classifier::weighted_bce(ad::sigmoid(logits(t, z)), y, coef);
  }
};

inline std::vector<std::vector<std::size_t>> chunks(const std::vector<std::size_t>& order, std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s + 2 <= order.size(); s += size) {
    out.emplace_back(order.begin() + static_cast<long>(s),
                     order.begin() + static_cast<long>(std::min(order.size(), s + size)));
    if (out.back().size() < 2) out.pop_back();
  }
  return out;
}

inline double mean_loss(srh::PatchEncoder& enc, PretrainHead& head, const srh::PatchDataset& ds,
                        const std::vector<std::size_t>& patches, std::size_t batch_size) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& b : chunks(patches, batch_size)) {
    ad::Tape t;
    ad::Var z = enc(t, t.constant(batch_inputs(ds, b)));
    total += head.loss(t, z, make_batch(ds, b)).value()[0];
    count += b.size();
  }
  return total / static_cast<double>(count);
}

}  // namespace detail

/// Trains `encoder` in place on the given patches; the auxiliary heads are discarded.
inline PretrainResult pretrain_encoder(srh::PatchEncoder& encoder, const srh::PatchDataset& ds,
                                       std::vector<std::size_t> patches, const PretrainConfig& cfg,
                                       const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (patches.size() < 2) throw std::invalid_argument("pretrain: need at least two training patches");
  if (ds.extent != encoder.config().input_extent()) {
    throw std::invalid_argument("pretrain: dataset extent " + std::to_string(ds.extent) + " does not match encoder input " +
                                std::to_string(encoder.config().input_extent()));
  }
  std::sort(patches.begin(), patches.end());
  require_positive_pairs(ds, patches);

  ad::Rng rng(cfg.seed);
  detail::PretrainHead head(cfg, ds.panel.size(), encoder.feature_dim(), rng);
  auto params = ad::concat_params(encoder.parameters(), head.parameters());
  const std::size_t steps_per_epoch = detail::chunks(patches, cfg.batch_size).size();
  auto opt = ad::make_adam(params, {.lr = cfg.lr, .total_steps = cfg.epochs * steps_per_epoch, .lr_min = cfg.lr_min});

  PretrainResult result;
  result.initial_loss = detail::mean_loss(encoder, head, ds, patches, cfg.batch_size);
  std::vector<std::size_t> order = patches;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0, lr = 0.0;
    std::size_t seen = 0;
    for (const auto& b : detail::chunks(order, cfg.batch_size)) {
      ad::Tape t;
      ad::Var z = encoder(t, t.constant(batch_inputs(ds, b, &cfg.augment, &rng)));
      ad::Var loss = ad::scale(head.loss(t, z, make_batch(ds, b)), 1.0 / static_cast<double>(b.size()));
      for (auto* p : params) t.param(*p);  // zero-weight heads stay off the graph
      lr = ad::adam_step(opt, params, t.gradients(loss, params));
      total += loss.value()[0] * static_cast<double>(b.size());
      seen += b.size();
    }
    result.log.push_back({epoch + 1, total / static_cast<double>(seen), lr});
    if (on_epoch) on_epoch(result.log.back());
  }
  result.final_loss = detail::mean_loss(encoder, head, ds, patches, cfg.batch_size);
  return result;
}

inline PretrainResult train_patchcon(srh::PatchEncoder& encoder, const srh::PatchDataset& ds,
                                     std::vector<std::size_t> patches, PretrainConfig cfg,
                                     const EpochCallback& on_epoch = {}) {
  cfg.objective = Objective::patchcon;
  return pretrain_encoder(encoder, ds, std::move(patches), cfg, on_epoch);
}

}  // namespace deepglioma::patchcon
