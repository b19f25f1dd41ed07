#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "deepglioma/core/array_io.hpp"
#include "deepglioma/core/layers.hpp"
#include "deepglioma/core/optim.hpp"
#include "deepglioma/genomics/cooccurrence.hpp"

namespace deepglioma::genomics {

/// Token vectors, one row per panel token.
struct GeneEmbedding {
  GenePanel panel;
  ad::Array vectors;  // [2n, d]

  std::size_t dim() const { return vectors.cols(); }
  std::size_t tokens() const { return vectors.rows(); }

  /// Mutant-token rows, one per gene: the label embedding used by the classifier.
  ad::Array label_matrix() const {
    ad::Array out(ad::Shape{panel.size(), dim()});
    for (std::size_t g = 0; g < panel.size(); ++g)
      for (std::size_t c = 0; c < dim(); ++c) out.at(g, c) = vectors.at(2 * g, c);
    return out;
  }
};

/// min((x / x_max)^alpha, 1), and 0 for x = 0.
inline double glove_weight(double x, double x_max, double alpha = 0.75) {
  if (!(x_max > 0.0)) throw std::invalid_argument("glove_weight: x_max must be positive");
  if (x < 0.0) throw std::invalid_argument("glove_weight: negative count");
  if (x == 0.0) return 0.0;
  return std::min(std::pow(x / x_max, alpha), 1.0);
}

struct GloveWeighting {
  double alpha = 0.75;
  double x_max = 0.0;  // 0 selects the largest off-diagonal count

  double resolve_x_max(const CooccurrenceMatrix& x) const {
    return x_max > 0.0 ? x_max : static_cast<double>(x.max_count());
  }
};

/// Ordered pairs (i, j) with X[i, j] > 0 together with their weights and targets.
struct CountedPairs {
  std::vector<std::size_t> first, second;
  std::vector<double> weight, target;

  std::size_t size() const noexcept { return first.size(); }
};

inline CountedPairs counted_pairs(const CooccurrenceMatrix& x, const GloveWeighting& w = {}) {
  CountedPairs p;
  const double xm = w.resolve_x_max(x);
  for (std::size_t i = 0; i < x.tokens(); ++i)
    for (std::size_t j = 0; j < x.tokens(); ++j) {
      const auto c = x(i, j);
      if (c <= 0) continue;
      p.first.push_back(i);
      p.second.push_back(j);
      p.weight.push_back(glove_weight(static_cast<double>(c), xm, w.alpha));
      p.target.push_back(std::log(static_cast<double>(c)));
    }
  return p;
}

/// sum_k f_k (e_{i_k} . e_{j_k} - log X_k)^2 over the selected pairs, on the tape.
inline ad::Var glove_loss(ad::Var vectors, const CountedPairs& pairs, const std::vector<std::size_t>& selection) {
  std::vector<std::size_t> a, b;
  ad::Array w(ad::Shape{selection.size()}), target(ad::Shape{selection.size()});
  for (std::size_t k = 0; k < selection.size(); ++k) {
    const std::size_t s = selection[k];
    a.push_back(pairs.first[s]);
    b.push_back(pairs.second[s]);
    w[k] = pairs.weight[s];
    target[k] = pairs.target[s];
  }
  ad::Tape& t = vectors.tape();
  ad::Var dots = ad::rowwise_dot(ad::gather_rows(vectors, a), ad::gather_rows(vectors, b));
  ad::Var resid = ad::sub(dots, t.constant(target));
  return ad::sum(ad::mul_const(ad::mul(resid, resid), w));
}

inline ad::Var glove_loss(ad::Var vectors, const CooccurrenceMatrix& x, const GloveWeighting& w = {}) {
  const CountedPairs pairs = counted_pairs(x, w);
  std::vector<std::size_t> all(pairs.size());
  std::iota(all.begin(), all.end(), 0);
  return glove_loss(vectors, pairs, all);
}

/// Value-only evaluation of the full objective.
inline double glove_loss(const ad::Array& vectors, const CooccurrenceMatrix& x, const GloveWeighting& w = {}) {
  if (vectors.rows() != x.tokens()) throw std::invalid_argument("glove_loss: embedding/matrix size mismatch");
  ad::Tape t;
  return glove_loss(t.constant(vectors), x, w).value().item();
}

struct GloveTrainConfig {
  std::size_t dim = 32;
  std::size_t epochs = 2000;
  std::size_t batch_pairs = 60;
  double lr = 5e-3;
  double init_scale = 0.1;
  GloveWeighting weighting;
  std::uint64_t seed = 0;
};

struct GloveTrainResult {
  GeneEmbedding embedding;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Minibatched Adam over counted pairs; deterministic for a given seed.
/// Returns the [tokens, dim] vectors with the losses before and after.
inline ad::Array train_glove(const CooccurrenceMatrix& x, const GloveTrainConfig& cfg, double* initial_loss = nullptr,
                             double* final_loss = nullptr) {
  if (x.tokens() == 0) throw std::invalid_argument("train_glove: empty co-occurrence matrix");
  if (x.all_zero()) throw std::invalid_argument("train_glove: co-occurrence matrix has no counts");
  if (cfg.dim == 0 || cfg.batch_pairs == 0) throw std::invalid_argument("train_glove: dim and batch_pairs must be positive");

  ad::Rng rng(cfg.seed);
  ad::Parameter e("embedding", ad::random_normal({x.tokens(), cfg.dim}, cfg.init_scale, rng));
  std::vector<ad::Parameter*> params{&e};
  auto state = ad::make_adam(params, {.lr = cfg.lr});
  const CountedPairs pairs = counted_pairs(x, cfg.weighting);

  if (initial_loss) *initial_loss = glove_loss(e.value, x, cfg.weighting);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_pairs) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_pairs);
      batch.assign(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end));
      ad::Tape t;
      ad::Var loss = glove_loss(t.param(e), pairs, batch);
      ad::adam_step(state, params, t.gradients(loss, params));
    }
  }
  if (final_loss) *final_loss = glove_loss(e.value, x, cfg.weighting);
  return e.value;
}

inline GloveTrainResult train_gene_embedding(const CooccurrenceMatrix& x, const GenePanel& panel,
                                             const GloveTrainConfig& cfg) {
  if (x.tokens() != panel.token_count()) throw std::invalid_argument("train_gene_embedding: panel/matrix size mismatch");
  GloveTrainResult r;
  ad::Array v = train_glove(x, cfg, &r.initial_loss, &r.final_loss);
  r.embedding = GeneEmbedding{panel, std::move(v)};
  return r;
}

// ---------------------------------------------------------------------------
// Structure diagnostics

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

inline double row_cosine(const ad::Array& m, std::size_t i, std::size_t j) {
  const std::size_t d = m.cols();
  return cosine(m.values().subspan(i * d, d), m.values().subspan(j * d, d));
}

struct TokenGroup {
  std::string name;
  std::vector<std::size_t> tokens;
};

struct GroupCosine {
  std::string name;
  double intra = 0.0;  // mean over unordered pairs inside the group
  double inter = 0.0;  // mean over (group, non-group) pairs
};

inline std::vector<GroupCosine> subgroup_cosine_report(const ad::Array& vectors, const std::vector<TokenGroup>& groups) {
  const std::size_t n = vectors.rows();
  std::vector<GroupCosine> out;
  for (const auto& g : groups) {
    if (g.tokens.size() < 2) throw std::invalid_argument("subgroup_cosine_report: group '" + g.name + "' has fewer than 2 tokens");
    std::vector<bool> member(n, false);
    for (auto t : g.tokens) {
      if (t >= n) throw std::out_of_range("subgroup_cosine_report: token out of range");
      member[t] = true;
    }
    GroupCosine r{g.name, 0.0, 0.0};
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t a = 0; a < g.tokens.size(); ++a)
      for (std::size_t b = a + 1; b < g.tokens.size(); ++b) {
        r.intra += row_cosine(vectors, g.tokens[a], g.tokens[b]);
        ++n_intra;
      }
    for (auto t : g.tokens)
      for (std::size_t o = 0; o < n; ++o)
        if (!member[o]) {
          r.inter += row_cosine(vectors, t, o);
          ++n_inter;
        }
    r.intra /= static_cast<double>(n_intra);
    r.inter = n_inter ? r.inter / static_cast<double>(n_inter) : 0.0;
    out.push_back(r);
  }
  return out;
}

/// Index of the most cosine-similar other row, per row.
inline std::vector<std::size_t> nearest_neighbors(const ad::Array& vectors) {
  const std::size_t n = vectors.rows();
  std::vector<std::size_t> nn(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -2.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double c = row_cosine(vectors, i, j);
      if (c > best) {
        best = c;
        nn[i] = j;
      }
    }
  }
  return nn;
}

// ---------------------------------------------------------------------------
// Export

inline nlohmann::json token_index_json(const GenePanel& panel) {
  nlohmann::json tokens = nlohmann::json::array();
  for (std::size_t t = 0; t < panel.token_count(); ++t) {
    tokens.push_back({{"index", t},
                      {"gene", panel.gene(t / 2)},
                      {"status", t % 2 == 0 ? "mutant" : "wildtype"},
                      {"name", panel.token_name(t)}});
  }
  return {{"genes", panel.genes()}, {"tokens", tokens}};
}

inline std::filesystem::path token_index_path(const std::filesystem::path& embedding_path) {
  auto p = embedding_path;
  p.replace_extension(".tokens.json");
  return p;
}

inline void save_embedding(const std::filesystem::path& path, const GeneEmbedding& e, nlohmann::json meta = {}) {
  ad::ArrayBundle b;
  b.meta = meta.is_null() ? nlohmann::json::object() : std::move(meta);
  b.meta["genes"] = e.panel.genes();
  b.arrays.push_back({"embedding", e.vectors});
  ad::save_arrays(path, b);
  ad::write_file_bytes(token_index_path(path), token_index_json(e.panel).dump(2) + "\n");
}

inline GeneEmbedding load_embedding(const std::filesystem::path& path) {
  const auto b = ad::load_arrays(path);
  GeneEmbedding e{GenePanel(b.meta.at("genes").get<std::vector<std::string>>()), b.get("embedding")};
  if (e.vectors.rank() != 2 || e.vectors.rows() != e.panel.token_count()) {
    throw std::runtime_error("embedding file: row count does not match panel tokens");
  }
  return e;
}

}  // namespace deepglioma::genomics
