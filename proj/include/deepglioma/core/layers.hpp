#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "deepglioma/core/ops.hpp"

namespace deepglioma::ad {

using Rng = std::mt19937_64;

inline Array random_normal(Shape shape, double stddev, Rng& rng) {
  Array a(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : a.values()) v = dist(rng);
  return a;
}

inline Array random_uniform(Shape shape, double bound, Rng& rng) {
  Array a(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : a.values()) v = dist(rng);
  return a;
}

/// y = x W + b with W: [in, out].
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out, Rng& rng)
      : weight(name + ".w", random_uniform({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
        bias(name + ".b", Array(Shape{out})) {}

  std::size_t in_features() const { return weight.value.dim(0); }
  std::size_t out_features() const { return weight.value.dim(1); }

  Var operator()(Tape& t, Var x) { return add_bias(matmul(x, t.param(weight)), t.param(bias)); }

  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

struct Conv2d {
  Parameter weight;  // [out, in, k, k]
  Parameter bias;
  ConvGeometry geometry;

  Conv2d() = default;
  Conv2d(std::string name, std::size_t in, std::size_t out, ConvGeometry geo, Rng& rng)
      : weight(name + ".w",
               random_normal({out, in, geo.kernel, geo.kernel},
                             std::sqrt(2.0 / static_cast<double>(in * geo.kernel * geo.kernel)), rng)),
        bias(name + ".b", Array(Shape{out})),
        geometry(geo) {}

  Var operator()(Tape& t, Var x) { return conv2d(x, t.param(weight), t.param(bias), geometry); }

  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

struct LayerNorm {
  Parameter gain;
  Parameter shift;

  LayerNorm() = default;
  LayerNorm(std::string name, std::size_t width)
      : gain(name + ".g", Array(Shape{width}, 1.0)), shift(name + ".b", Array(Shape{width})) {}

  Var operator()(Tape& t, Var x) { return layer_norm_rows(x, t.param(gain), t.param(shift)); }

  std::vector<Parameter*> parameters() { return {&gain, &shift}; }
};

/// Multi-head self-attention with query/key/value/output projections.
struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t width, std::size_t n_heads, Rng& rng)
      : query(name + ".q", width, width, rng),
        key(name + ".k", width, width, rng),
        value(name + ".v", width, width, rng),
        output(name + ".o", width, width, rng),
        heads(n_heads) {
    if (n_heads == 0 || width % n_heads != 0) {
      throw std::invalid_argument("MultiHeadAttention: width " + std::to_string(width) +
                                  " not divisible by " + std::to_string(n_heads) + " heads");
    }
  }

  std::size_t width() const { return query.in_features(); }

  /// tokens: [blocks * block, width]; every `block` consecutive rows form one
  /// sequence.
  Var operator()(Tape& t, Var tokens, std::size_t block, AttentionWeights* weights = nullptr) {
    if (tokens.value().rank() != 2 || tokens.value().cols() != width()) {
      throw std::invalid_argument("MultiHeadAttention: token shape " + shape_string(tokens.shape()) +
                                  " does not match width " + std::to_string(width()));
    }
    Var q = query(t, tokens);
    Var k = key(t, tokens);
    Var v = value(t, tokens);
    return output(t, block_attention(q, k, v, block, heads, weights));
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (Linear* l : {&query, &key, &value, &output})
      for (Parameter* p : l->parameters()) out.push_back(p);
    return out;
  }
};

/// Single-sequence convenience: tokens [n_tokens, d] -> [n_tokens, d].
inline Var multi_head_attention(Tape& t, Var tokens, MultiHeadAttention& attn, AttentionWeights* weights = nullptr) {
  return attn(t, tokens, tokens.value().rows(), weights);
}

template <typename... Lists>
std::vector<Parameter*> concat_params(Lists&&... lists) {
  std::vector<Parameter*> out;
  (out.insert(out.end(), lists.begin(), lists.end()), ...);
  return out;
}

}  // namespace deepglioma::ad
