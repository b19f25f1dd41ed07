#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepglioma/classifier/bce.hpp"
#include "deepglioma/classifier/heads.hpp"
#include "deepglioma/core/optim.hpp"

namespace deepglioma::classifier {

enum class Strategy { linear, transformer };

inline std::string to_string(Strategy s) { return s == Strategy::linear ? "linear" : "transformer"; }

inline Strategy parse_strategy(const std::string& s) {
  if (s == "linear") return Strategy::linear;
  if (s == "transformer") return Strategy::transformer;
  throw std::invalid_argument("unknown classifier strategy '" + s + "'");
}

struct ClassifierConfig {
  Strategy strategy = Strategy::transformer;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 1e-3, lr_min = 0.0;
  double provided_fraction = 1.0 / 3.0;  // transformer training only; inference shows no labels
  std::vector<double> label_weights;     // empty: 1 per label
  TransformerConfig transformer;
  bool train_embedding = false;  // the label embedding is frozen unless set
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs == 0 || batch_size == 0) throw std::invalid_argument("classifier: epochs and batch size must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("classifier: learning rate must be positive");
    provided_label_count(1, provided_fraction);
  }
};

inline void to_json(nlohmann::json& j, const ClassifierConfig& c) {
  j = {{"strategy", to_string(c.strategy)},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"lr_min", c.lr_min},
       {"provided_fraction", c.provided_fraction},
       {"label_weights", c.label_weights},
       {"heads", c.transformer.heads},
       {"layers", c.transformer.layers},
       {"ffn_multiplier", c.transformer.ffn_multiplier},
       {"train_embedding", c.train_embedding},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ClassifierConfig& c) {
  ClassifierConfig d;
  c.strategy = parse_strategy(j.value("strategy", to_string(d.strategy)));
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr = j.value("lr", d.lr);
  c.lr_min = j.value("lr_min", d.lr_min);
  c.provided_fraction = j.value("provided_fraction", d.provided_fraction);
  c.label_weights = j.value("label_weights", d.label_weights);
  c.transformer.heads = j.value("heads", d.transformer.heads);
  c.transformer.layers = j.value("layers", d.transformer.layers);
  c.transformer.ffn_multiplier = j.value("ffn_multiplier", d.transformer.ffn_multiplier);
  c.train_embedding = j.value("train_embedding", d.train_embedding);
  c.seed = j.value("seed", d.seed);
}

/// A trained multi-label head of either strategy. Not movable while training
/// holds pointers to its parameters; heap members keep moves safe otherwise.
class MolecularHead {
 public:
  static MolecularHead linear(std::size_t feature_dim, std::size_t labels, std::uint64_t seed) {
    MolecularHead h;
    ad::Rng rng(seed);
    h.strategy_ = Strategy::linear;
    h.labels_ = labels;
    h.linear_ = std::make_unique<LinearHead>(feature_dim, labels, rng);
    return h;
  }

  static MolecularHead transformer(std::size_t feature_dim, const ad::Array& embedding, TransformerConfig cfg,
                                   std::uint64_t seed, bool train_embedding) {
    MolecularHead h;
    ad::Rng rng(seed);
    h.strategy_ = Strategy::transformer;
    h.labels_ = embedding.rows();
    h.transformer_ = std::make_unique<TransformerHead>(feature_dim, embedding, cfg, rng, train_embedding);
    return h;
  }

  Strategy strategy() const { return strategy_; }
  std::size_t labels() const { return labels_; }
  std::size_t feature_dim() const { return linear_ ? linear_->feature_dim() : transformer_->feature_dim(); }
  TransformerHead& transformer_head() { return *transformer_; }
  LinearHead& linear_head() { return *linear_; }

  /// z: [B, d]; states: B * n input states (ignored by the linear head).
  ad::Var probabilities(ad::Tape& t, ad::Var z, const std::vector<LabelState>& states) {
    if (linear_) return linear_->probabilities(t, z);
    return transformer_->probabilities(t, z, states);
  }

  /// Fully masked prediction, [N, n].
  ad::Array predict(const ad::Array& features, std::size_t chunk = 256) {
    const std::size_t n = features.rows(), d = features.cols();
    if (d != feature_dim()) throw std::invalid_argument("MolecularHead::predict: feature width mismatch");
    ad::Array out(ad::Shape{n, labels_});
    for (std::size_t s = 0; s < n; s += chunk) {
      const std::size_t m = std::min(chunk, n - s);
      ad::Array z(ad::Shape{m, d});
      std::copy(features.data() + s * d, features.data() + (s + m) * d, z.data());
      ad::Tape t;
      const ad::Array p =
          probabilities(t, t.constant(std::move(z)), std::vector<LabelState>(m * labels_, LabelState::masked)).value();
      std::copy(p.data(), p.data() + p.size(), out.data() + s * labels_);
    }
    return out;
  }

  std::vector<ad::Parameter*> parameters() { return linear_ ? linear_->parameters() : transformer_->parameters(); }
  std::vector<ad::Parameter*> all_parameters() {
    return linear_ ? linear_->parameters() : transformer_->all_parameters();
  }

  nlohmann::json describe() const {
    nlohmann::json j = {{"strategy", to_string(strategy_)}, {"labels", labels_}, {"feature_dim", feature_dim()}};
    if (transformer_) {
      j["embedding_dim"] = transformer_->embedding_dim();
      j["heads"] = transformer_->config().heads;
      j["layers"] = transformer_->config().layers;
      j["ffn_multiplier"] = transformer_->config().ffn_multiplier;
      j["train_embedding"] = transformer_->trains_embedding();
    }
    return j;
  }

 private:
  MolecularHead() = default;
  Strategy strategy_ = Strategy::linear;
  std::size_t labels_ = 0;
  std::unique_ptr<LinearHead> linear_;
  std::unique_ptr<TransformerHead> transformer_;
};

inline void save_head(const std::filesystem::path& path, MolecularHead& head, nlohmann::json meta = {}) {
  if (!meta.is_object()) meta = nlohmann::json::object();
  meta["head"] = head.describe();
  ad::save_arrays(path, ad::bundle_parameters(head.all_parameters(), meta));
}

inline MolecularHead load_head(const std::filesystem::path& path, nlohmann::json* meta = nullptr) {
  const auto b = ad::load_arrays(path);
  const auto& h = b.meta.at("head");
  const std::size_t d = h.at("feature_dim").get<std::size_t>(), n = h.at("labels").get<std::size_t>();
  MolecularHead head = [&] {
    if (parse_strategy(h.at("strategy").get<std::string>()) == Strategy::linear) return MolecularHead::linear(d, n, 0);
    TransformerConfig cfg{h.at("heads").get<std::size_t>(), h.at("layers").get<std::size_t>(),
                          h.at("ffn_multiplier").get<std::size_t>()};
    return MolecularHead::transformer(d, ad::Array(ad::Shape{n, h.at("embedding_dim").get<std::size_t>()}), cfg, 0,
                                      h.at("train_embedding").get<bool>());
  }();
  ad::restore_parameters(b, head.all_parameters());
  if (meta) *meta = b.meta;
  return head;
}

// ---------------------------------------------------------------------------
// Training

struct ClassifierEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

inline void to_json(nlohmann::json& j, const ClassifierEpoch& e) { j = {{"epoch", e.epoch}, {"loss", e.loss}, {"lr", e.lr}}; }

struct ClassifierResult {
  double initial_loss = 0.0;  // per-example loss under a fixed evaluation mask draw
  double final_loss = 0.0;
  std::vector<ClassifierEpoch> log;
};

/// Builds the batch loss: masked labels only for the transformer, every known
/// label for binary relevance. Unknown ground-truth labels never count.
inline ad::Var batch_loss(ad::Tape& t, MolecularHead& head, const ad::Array& features,
                          const std::vector<genomics::LabelVector>& labels, const std::vector<std::size_t>& rows,
                          const std::vector<double>& weights, double provided_fraction, ad::Rng& rng) {
  const std::size_t n = head.labels(), d = features.cols(), b = rows.size();
  ad::Array z(ad::Shape{b, d}), y(ad::Shape{b, n}), coef(ad::Shape{b, n});
  std::vector<LabelState> states(b * n, LabelState::masked);
  for (std::size_t i = 0; i < b; ++i) {
    std::copy(features.data() + rows[i] * d, features.data() + (rows[i] + 1) * d, z.data() + i * d);
    const auto& lv = labels[rows[i]];
    if (lv.size() != n) throw std::invalid_argument("classifier: label vector does not match the head");
    const MaskSample mask = head.strategy() == Strategy::transformer ? sample_label_mask(n, provided_fraction, rng)
                                                                     : MaskSample{std::vector<bool>(n, false)};
    const auto in = masked_states(lv, mask);
    for (std::size_t l = 0; l < n; ++l) {
      states[i * n + l] = in[l];
      y[i * n + l] = genomics::binary_target(lv.states[l]);
      const bool known = lv.states[l] != LabelState::masked;
      coef[i * n + l] = known && mask.masked(l) ? weights[l] : 0.0;
    }
  }
  return weighted_bce(head.probabilities(t, t.constant(std::move(z)), states), y, coef);
}

inline double mean_classifier_loss(MolecularHead& head, const ad::Array& features,
                                   const std::vector<genomics::LabelVector>& labels, const std::vector<double>& weights,
                                   double provided_fraction, std::uint64_t seed, std::size_t chunk = 256) {
  ad::Rng rng(seed);
  double total = 0.0;
  for (std::size_t s = 0; s < labels.size(); s += chunk) {
    std::vector<std::size_t> rows(std::min(chunk, labels.size() - s));
    std::iota(rows.begin(), rows.end(), s);
    ad::Tape t;
    total += batch_loss(t, head, features, labels, rows, weights, provided_fraction, rng).value()[0];
  }
  return total / static_cast<double>(labels.size());
}

/// Fits `head` on frozen features [N, d] with per-row labels.
inline ClassifierResult train_classifier(MolecularHead& head, const ad::Array& features,
                                         const std::vector<genomics::LabelVector>& labels, const ClassifierConfig& cfg,
                                         const std::function<void(const ClassifierEpoch&)>& on_epoch = {}) {
  cfg.validate();
  if (cfg.strategy != head.strategy()) {
    throw std::invalid_argument("classifier: config strategy " + to_string(cfg.strategy) + " does not match head " +
                                to_string(head.strategy()));
  }
  if (features.rank() != 2 || features.rows() != labels.size() || labels.empty()) {
    throw std::invalid_argument("classifier: need one label vector per feature row");
  }
  const std::size_t n = head.labels();
  const std::vector<double> weights = cfg.label_weights.empty() ? std::vector<double>(n, 1.0) : cfg.label_weights;
  if (weights.size() != n) throw std::invalid_argument("classifier: one label weight per gene required");

  auto params = head.parameters();
  const std::size_t steps = cfg.epochs * ((labels.size() + cfg.batch_size - 1) / cfg.batch_size);
  auto opt = ad::make_adam(params, {.lr = cfg.lr, .total_steps = steps, .lr_min = cfg.lr_min});
  ad::Rng rng(cfg.seed);
  const std::uint64_t eval_seed = cfg.seed ^ 0x5eedULL;

  ClassifierResult result;
  result.initial_loss = mean_classifier_loss(head, features, labels, weights, cfg.provided_fraction, eval_seed);
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0, lr = 0.0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::vector<std::size_t> rows(order.begin() + static_cast<long>(s),
                                          order.begin() + static_cast<long>(std::min(order.size(), s + cfg.batch_size)));
      ad::Tape t;
      ad::Var loss = ad::scale(batch_loss(t, head, features, labels, rows, weights, cfg.provided_fraction, rng),
                               1.0 / static_cast<double>(rows.size()));
      for (auto* p : params) t.param(*p);
      lr = ad::adam_step(opt, params, t.gradients(loss, params));
      total += loss.value()[0] * static_cast<double>(rows.size());
    }
    result.log.push_back({epoch + 1, total / static_cast<double>(labels.size()), lr});
    if (on_epoch) on_epoch(result.log.back());
  }
  result.final_loss = mean_classifier_loss(head, features, labels, weights, cfg.provided_fraction, eval_seed);
  return result;
}

/// Head for `cfg`: binary relevance, or a transformer over `embedding` rows.
inline MolecularHead make_head(const ClassifierConfig& cfg, std::size_t feature_dim, std::size_t labels,
                               const ad::Array* embedding) {
  if (cfg.strategy == Strategy::linear) return MolecularHead::linear(feature_dim, labels, cfg.seed);
  if (!embedding) throw std::invalid_argument("classifier: the transformer strategy needs a label embedding");
  if (embedding->rank() != 2 || embedding->rows() != labels) {
    throw std::invalid_argument("classifier: embedding has " + std::to_string(embedding->rank() == 2 ? embedding->rows() : 0) +
                                " rows for " + std::to_string(labels) + " labels");
  }
  return MolecularHead::transformer(feature_dim, *embedding, cfg.transformer, cfg.seed, cfg.train_embedding);
}

}  // namespace deepglioma::classifier
