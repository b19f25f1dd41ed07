#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepglioma/core/array.hpp"
#include "deepglioma/core/tape.hpp"

namespace deepglioma::ad {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline MatMap as_mat(Array& a, std::size_t rows, std::size_t cols) {
  return MatMap(a.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline ConstMatMap as_mat(const Array& a, std::size_t rows, std::size_t cols) {
  return ConstMatMap(a.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MatMap as_mat(Array& a) { return as_mat(a, a.rows(), a.cols()); }
inline ConstMatMap as_mat(const Array& a) { return as_mat(a, a.rows(), a.cols()); }

inline void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                ", got shape " + shape_string(v.shape()));
  }
}

inline void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
  }
}

template <typename F>
Array map_values(const Array& a, F f) {
  Array out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(Var a, Var b) {
  detail::require_same(a, b, "add");
  Array out = a.value();
  out += b.value();
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("add", std::move(out), {a, b}, [ia, ib](Tape& t, const Array& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same(a, b, "sub");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("sub", std::move(out), {a, b}, [ia, ib](Tape& t, const Array& g) {
    t.accumulate(ia, g);
    Array neg = detail::map_values(g, [](double x) { return -x; });
    t.accumulate(ib, neg);
  });
}

inline Var mul(Var a, Var b) {
  detail::require_same(a, b, "mul");
  const Array& av = a.value();
  const Array& bv = b.value();
  Array out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("mul", std::move(out), {a, b}, [ia, ib, av, bv](Tape& t, const Array& g) {
    Array ga(g.shape()), gb(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] = g[i] * bv[i];
      gb[i] = g[i] * av[i];
    }
    t.accumulate(ia, ga);
    t.accumulate(ib, gb);
  });
}

/// Elementwise product with a constant array (masks, fixed weights).
inline Var mul_const(Var a, const Array& c) {
  a.value().require_same_shape(c, "mul_const");
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c[i];
  const auto ia = a.id();
  return a.tape().record("mul_const", std::move(out), {a}, [ia, c](Tape& t, const Array& g) {
    Array ga(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * c[i];
    t.accumulate(ia, ga);
  });
}

/// scale * a + shift
inline Var affine(Var a, double scale, double shift = 0.0) {
  Array out = detail::map_values(a.value(), [=](double x) { return scale * x + shift; });
  const auto ia = a.id();
  return a.tape().record("affine", std::move(out), {a}, [ia, scale](Tape& t, const Array& g) {
    t.accumulate(ia, detail::map_values(g, [=](double x) { return scale * x; }));
  });
}

inline Var scale(Var a, double s) { return affine(a, s, 0.0); }

inline Var exp(Var a) {
  Array out = detail::map_values(a.value(), [](double x) { return std::exp(x); });
  const auto ia = a.id();
  return a.tape().record("exp", out, {a}, [ia, out](Tape& t, const Array& g) {
    Array ga(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * out[i];
    t.accumulate(ia, ga);
  });
}

inline Var log(Var a) {
  const Array& av = a.value();
  for (double x : av.values()) {
    if (!(x > 0.0)) throw std::domain_error("log: non-positive input");
  }
  Array out = detail::map_values(av, [](double x) { return std::log(x); });
  const auto ia = a.id();
  return a.tape().record("log", std::move(out), {a}, [ia, av](Tape& t, const Array& g) {
    Array ga(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] / av[i];
    t.accumulate(ia, ga);
  });
}

inline double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
  Array out = detail::map_values(a.value(), sigmoid_value);
  const auto ia = a.id();
  return a.tape().record("sigmoid", out, {a}, [ia, out](Tape& t, const Array& g) {
    Array ga(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * out[i] * (1.0 - out[i]);
    t.accumulate(ia, ga);
  });
}

inline Var relu(Var a) {
  const Array& av = a.value();
  Array out = detail::map_values(av, [](double x) { return x > 0.0 ? x : 0.0; });
  const auto ia = a.id();
  return a.tape().record("relu", std::move(out), {a}, [ia, av](Tape& t, const Array& g) {
    Array ga(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = av[i] > 0.0 ? g[i] : 0.0;
    t.accumulate(ia, ga);
  });
}

/// Clamp into [lo, hi]; the gradient is zero where clamping is active.
inline Var clamp(Var a, double lo, double hi) {
  const Array& av = a.value();
  Array out = detail::map_values(av, [=](double x) { return std::clamp(x, lo, hi); });
  const auto ia = a.id();
  return a.tape().record("clamp", std::move(out), {a}, [ia, av, lo, hi](Tape& t, const Array& g) {
    Array ga(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = (av[i] < lo || av[i] > hi) ? 0.0 : g[i];
    t.accumulate(ia, ga);
  });
}

// ---------------------------------------------------------------------------
// Reductions and shape

inline Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  const auto ia = a.id();
  const Shape shape = a.shape();
  return a.tape().record("sum", Array::scalar(s), {a}, [ia, shape](Tape& t, const Array& g) {
    t.accumulate(ia, Array(shape, g.item()));
  });
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

inline Var reshape(Var a, Shape shape) {
  Array out = a.value().reshaped(shape);
  const auto ia = a.id();
  const Shape original = a.shape();
  return a.tape().record("reshape", std::move(out), {a}, [ia, original](Tape& t, const Array& g) {
    t.accumulate(ia, g.reshaped(original));
  });
}

inline Var transpose(Var a) {
  detail::require_rank(a, 2, "transpose");
  const std::size_t r = a.value().rows(), c = a.value().cols();
  Array out(Shape{c, r});
  detail::as_mat(out) = detail::as_mat(a.value()).transpose();
  const auto ia = a.id();
  return a.tape().record("transpose", std::move(out), {a}, [ia, r, c](Tape& t, const Array& g) {
    Array ga(Shape{r, c});
    detail::as_mat(ga) = detail::as_mat(g).transpose();
    t.accumulate(ia, ga);
  });
}

/// Columns [start, start + len) of a matrix.
inline Var slice_cols(Var a, std::size_t start, std::size_t len) {
  detail::require_rank(a, 2, "slice_cols");
  const std::size_t r = a.value().rows(), c = a.value().cols();
  if (start + len > c) throw std::invalid_argument("slice_cols: range exceeds column count");
  Array out(Shape{r, len});
  detail::as_mat(out) = detail::as_mat(a.value()).middleCols(static_cast<Eigen::Index>(start),
                                                             static_cast<Eigen::Index>(len));
  const auto ia = a.id();
  return a.tape().record("slice_cols", std::move(out), {a}, [ia, r, c, start, len](Tape& t, const Array& g) {
    Array& slot = t.grad_slot(ia);
    detail::as_mat(slot, r, c).middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) +=
        detail::as_mat(g);
  });
}

inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t r = parts[0].value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    detail::require_rank(p, 2, "concat_cols");
    if (p.value().rows() != r) throw std::invalid_argument("concat_cols: row count mismatch");
    total += p.value().cols();
  }
  Array out(Shape{r, total});
  std::vector<std::size_t> ids, widths;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t w = p.value().cols();
    detail::as_mat(out).middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(w)) =
        detail::as_mat(p.value());
    ids.push_back(p.id());
    widths.push_back(w);
    offset += w;
  }
  return parts[0].tape().record("concat_cols", std::move(out), parts, [ids, widths, r](Tape& t, const Array& g) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        Array gk(Shape{r, widths[k]});
        detail::as_mat(gk) =
            detail::as_mat(g).middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(widths[k]));
        t.accumulate(ids[k], gk);
      }
      off += widths[k];
    }
  });
}

inline Var concat_cols(std::initializer_list<Var> parts) {
  std::vector<Var> v(parts);
  return concat_cols(std::span<const Var>(v));
}

/// Stacks matrices with equal column counts vertically.
inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const std::size_t c = parts[0].value().cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    detail::require_rank(p, 2, "concat_rows");
    if (p.value().cols() != c) throw std::invalid_argument("concat_rows: column count mismatch");
    total += p.value().rows();
  }
  Array out(Shape{total, c});
  std::vector<std::size_t> ids, heights;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + offset * c);
    ids.push_back(p.id());
    heights.push_back(p.value().rows());
    offset += p.value().rows();
  }
  return parts[0].tape().record("concat_rows", std::move(out), parts, [ids, heights, c](Tape& t, const Array& g) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        Array gk(Shape{heights[k], c});
        std::copy(g.data() + off * c, g.data() + (off + heights[k]) * c, gk.data());
        t.accumulate(ids[k], gk);
      }
      off += heights[k];
    }
  });
}

/// Row lookup: out[i] = a[indices[i]]. Backward scatter-adds.
inline Var gather_rows(Var a, std::vector<std::size_t> indices) {
  detail::require_rank(a, 2, "gather_rows");
  const std::size_t n = a.value().rows(), c = a.value().cols();
  Array out(Shape{indices.size(), c});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= n) throw std::out_of_range("gather_rows: index out of range");
    std::copy(a.value().data() + indices[i] * c, a.value().data() + (indices[i] + 1) * c, out.data() + i * c);
  }
  const auto ia = a.id();
  return a.tape().record("gather_rows", std::move(out), {a}, [ia, indices, c](Tape& t, const Array& g) {
    Array& slot = t.grad_slot(ia);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      for (std::size_t j = 0; j < c; ++j) slot[indices[i] * c + j] += g[i * c + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(Var a, Var b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t n = a.value().rows(), k = a.value().cols(), m = b.value().cols();
  if (b.value().rows() != k) {
    throw std::invalid_argument("matmul: inner dimension mismatch " + shape_string(a.shape()) + " x " +
                                shape_string(b.shape()));
  }
  Array out(Shape{n, m});
  detail::as_mat(out).noalias() = detail::as_mat(a.value()) * detail::as_mat(b.value());
  const auto ia = a.id(), ib = b.id();
  const Array& av = a.value();
  const Array& bv = b.value();
  return a.tape().record("matmul", std::move(out), {a, b}, [ia, ib, av, bv](Tape& t, const Array& g) {
    if (t.requires_grad(ia)) {
      Array& slot = t.grad_slot(ia);
      detail::as_mat(slot).noalias() += detail::as_mat(g) * detail::as_mat(bv).transpose();
    }
    if (t.requires_grad(ib)) {
      Array& slot = t.grad_slot(ib);
      detail::as_mat(slot).noalias() += detail::as_mat(av).transpose() * detail::as_mat(g);
    }
  });
}

/// a * b^T
inline Var matmul_nt(Var a, Var b) {
  detail::require_rank(a, 2, "matmul_nt");
  detail::require_rank(b, 2, "matmul_nt");
  const std::size_t n = a.value().rows(), k = a.value().cols(), m = b.value().rows();
  if (b.value().cols() != k) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Array out(Shape{n, m});
  detail::as_mat(out).noalias() = detail::as_mat(a.value()) * detail::as_mat(b.value()).transpose();
  const auto ia = a.id(), ib = b.id();
  const Array& av = a.value();
  const Array& bv = b.value();
  return a.tape().record("matmul_nt", std::move(out), {a, b}, [ia, ib, av, bv](Tape& t, const Array& g) {
    if (t.requires_grad(ia)) {
      Array& slot = t.grad_slot(ia);
      detail::as_mat(slot).noalias() += detail::as_mat(g) * detail::as_mat(bv);
    }
    if (t.requires_grad(ib)) {
      Array& slot = t.grad_slot(ib);
      detail::as_mat(slot).noalias() += detail::as_mat(g).transpose() * detail::as_mat(av);
    }
  });
}

/// x[n, m] + b[m] broadcast over rows.
inline Var add_bias(Var x, Var b) {
  detail::require_rank(x, 2, "add_bias");
  const std::size_t n = x.value().rows(), m = x.value().cols();
  if (b.value().size() != m) throw std::invalid_argument("add_bias: bias length mismatch");
  Array out = x.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += b.value()[j];
  const auto ix = x.id(), ib = b.id();
  return x.tape().record("add_bias", std::move(out), {x, b}, [ix, ib, n, m](Tape& t, const Array& g) {
    t.accumulate(ix, g);
    if (t.requires_grad(ib)) {
      Array& slot = t.grad_slot(ib);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) slot[j] += g[i * m + j];
    }
  });
}

/// out[i] = <a[i], b[i]>, i.e. diag(a b^T) without forming the product.
inline Var rowwise_dot(Var a, Var b) {
  detail::require_rank(a, 2, "rowwise_dot");
  detail::require_same(a, b, "rowwise_dot");
  const std::size_t n = a.value().rows(), m = a.value().cols();
  const Array& av = a.value();
  const Array& bv = b.value();
  Array out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += av[i * m + j] * bv[i * m + j];
    out[i] = s;
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("rowwise_dot", std::move(out), {a, b}, [ia, ib, av, bv, n, m](Tape& t, const Array& g) {
    Array ga(av.shape()), gb(bv.shape());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        ga[i * m + j] = g[i] * bv[i * m + j];
        gb[i * m + j] = g[i] * av[i * m + j];
      }
    t.accumulate(ia, ga);
    t.accumulate(ib, gb);
  });
}

// ---------------------------------------------------------------------------
// Normalisation and softmax

inline Array softmax_rows_value(const Array& a) {
  const std::size_t n = a.rows(), m = a.cols();
  Array out(a.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = a.data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += (out[i * m + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= s;
  }
  return out;
}

inline Var softmax_rows(Var a) {
  detail::require_rank(a, 2, "softmax_rows");
  Array out = softmax_rows_value(a.value());
  const auto ia = a.id();
  return a.tape().record("softmax_rows", out, {a}, [ia, out](Tape& t, const Array& g) {
    const std::size_t n = out.rows(), m = out.cols();
    Array ga(out.shape());
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += g[i * m + j] * out[i * m + j];
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] = out[i * m + j] * (g[i * m + j] - dot);
    }
    t.accumulate(ia, ga);
  });
}

/// For a square matrix S: out[i, j] = S[i, j] - logsumexp_{k != i} S[i, k] for
/// j != i, and 0 on the diagonal. The diagonal never enters the normaliser.
inline Var log_softmax_offdiag(Var s) {
  detail::require_rank(s, 2, "log_softmax_offdiag");
  const std::size_t n = s.value().rows();
  if (s.value().cols() != n) throw std::invalid_argument("log_softmax_offdiag: matrix must be square");
  if (n < 2) throw std::invalid_argument("log_softmax_offdiag: need at least two rows");
  const Array& sv = s.value();
  Array out(sv.shape());
  Array prob(sv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) mx = std::max(mx, sv[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) z += std::exp(sv[i * n + j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      out[i * n + j] = sv[i * n + j] - lse;
      prob[i * n + j] = std::exp(out[i * n + j]);
    }
  }
  const auto is = s.id();
  return s.tape().record("log_softmax_offdiag", std::move(out), {s}, [is, prob, n](Tape& t, const Array& g) {
    Array gs(prob.shape());
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) row += g[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) gs[i * n + j] = g[i * n + j] - prob[i * n + j] * row;
    }
    t.accumulate(is, gs);
  });
}

/// Divides every row by its Euclidean norm.
inline Var l2_normalize_rows(Var a, double eps = 1e-12) {
  detail::require_rank(a, 2, "l2_normalize_rows");
  const std::size_t n = a.value().rows(), m = a.value().cols();
  Array out(a.shape());
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double nr = std::max(l2_norm(a.value().values().subspan(i * m, m)), eps);
    norms[i] = nr;
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = a.value()[i * m + j] / nr;
  }
  const auto ia = a.id();
  return a.tape().record("l2_normalize_rows", out, {a}, [ia, out, norms, n, m](Tape& t, const Array& g) {
    Array ga(out.shape());
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += out[i * m + j] * g[i * m + j];
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] = (g[i * m + j] - out[i * m + j] * dot) / norms[i];
    }
    t.accumulate(ia, ga);
  });
}

/// Per-row layer normalisation with learnable gain and bias.
inline Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5) {
  detail::require_rank(x, 2, "layer_norm_rows");
  const std::size_t n = x.value().rows(), m = x.value().cols();
  if (gamma.value().size() != m || beta.value().size() != m) {
    throw std::invalid_argument("layer_norm_rows: gain/bias length mismatch");
  }
  const Array& xv = x.value();
  const Array& gv = gamma.value();
  Array xhat(xv.shape());
  std::vector<double> inv_std(n);
  Array out(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += xv[i * m + j];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) var += (xv[i * m + j] - mu) * (xv[i * m + j] - mu);
    var /= static_cast<double>(m);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      xhat[i * m + j] = (xv[i * m + j] - mu) * inv_std[i];
      out[i * m + j] = xhat[i * m + j] * gv[j] + beta.value()[j];
    }
  }
  const auto ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape().record("layer_norm_rows", std::move(out), {x, gamma, beta},
                         [ix, ig, ib, xhat, inv_std, gv, n, m](Tape& t, const Array& g) {
                           if (t.requires_grad(ig) || t.requires_grad(ib)) {
                             Array gg(Shape{m}), gb(Shape{m});
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < m; ++j) {
                                 gg[j] += g[i * m + j] * xhat[i * m + j];
                                 gb[j] += g[i * m + j];
                               }
                             t.accumulate(ig, gg);
                             t.accumulate(ib, gb);
                           }
                           if (!t.requires_grad(ix)) return;
                           Array gx(xhat.shape());
                           const double inv_m = 1.0 / static_cast<double>(m);
                           for (std::size_t i = 0; i < n; ++i) {
                             double s1 = 0.0, s2 = 0.0;
                             for (std::size_t j = 0; j < m; ++j) {
                               const double dxh = g[i * m + j] * gv[j];
                               s1 += dxh;
                               s2 += dxh * xhat[i * m + j];
                             }
                             for (std::size_t j = 0; j < m; ++j) {
                               const double dxh = g[i * m + j] * gv[j];
                               gx[i * m + j] = inv_std[i] * (dxh - inv_m * s1 - xhat[i * m + j] * inv_m * s2);
                             }
                           }
                           t.accumulate(ix, gx);
                         });
}

// ---------------------------------------------------------------------------
// Attention

/// Row-wise attention weights of one head for one block of tokens; exposed so
/// callers can inspect the distributions.
struct AttentionWeights {
  std::size_t blocks = 0;
  std::size_t heads = 0;
  std::size_t tokens = 0;
  std::vector<double> probs;  // [block][head][query][key]

  double at(std::size_t b, std::size_t h, std::size_t q, std::size_t k) const {
    return probs[((b * heads + h) * tokens + q) * tokens + k];
  }
};

/// Scaled dot-product attention over independent blocks of `block` rows.
///
/// q, k, v: [blocks * block, width]; width is split evenly over `heads`.
/// Each block (one sample's token sequence) attends only within itself.
inline Var block_attention(Var q, Var k, Var v, std::size_t block, std::size_t heads,
                           AttentionWeights* weights_out = nullptr) {
  detail::require_rank(q, 2, "block_attention");
  detail::require_same(q, k, "block_attention");
  detail::require_same(q, v, "block_attention");
  const std::size_t rows = q.value().rows(), width = q.value().cols();
  if (heads == 0 || width % heads != 0) {
    throw std::invalid_argument("block_attention: width " + std::to_string(width) +
                                " not divisible by heads " + std::to_string(heads));
  }
  if (block == 0 || rows % block != 0) throw std::invalid_argument("block_attention: rows not a multiple of block");
  const std::size_t nb = rows / block, dh = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Array& qv = q.value();
  const Array& kv = k.value();
  const Array& vv = v.value();

  std::vector<double> probs(nb * heads * block * block);
  Array out(Shape{rows, width});
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      double* p = probs.data() + (b * heads + h) * block * block;
      for (std::size_t i = 0; i < block; ++i) {
        const double* qi = qv.data() + (b * block + i) * width + h * dh;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < block; ++j) {
          const double* kj = kv.data() + (b * block + j) * width + h * dh;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          p[i * block + j] = s * inv_sqrt;
          mx = std::max(mx, p[i * block + j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < block; ++j) z += (p[i * block + j] = std::exp(p[i * block + j] - mx));
        for (std::size_t j = 0; j < block; ++j) p[i * block + j] /= z;
        double* oi = out.data() + (b * block + i) * width + h * dh;
        for (std::size_t j = 0; j < block; ++j) {
          const double* vj = vv.data() + (b * block + j) * width + h * dh;
          const double w = p[i * block + j];
          for (std::size_t c = 0; c < dh; ++c) oi[c] += w * vj[c];
        }
      }
    }
  }
  if (weights_out) *weights_out = AttentionWeights{nb, heads, block, probs};

  const auto iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape().record(
      "block_attention", std::move(out), {q, k, v},
      [iq, ik, iv, qv, kv, vv, probs, nb, heads, block, width, dh, inv_sqrt](Tape& t, const Array& g) {
        Array gq(qv.shape()), gk(kv.shape()), gv(vv.shape());
        std::vector<double> dp(block * block);
        for (std::size_t b = 0; b < nb; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const double* p = probs.data() + (b * heads + h) * block * block;
            auto row = [&](std::size_t i) { return (b * block + i) * width + h * dh; };
            for (std::size_t i = 0; i < block; ++i) {
              for (std::size_t j = 0; j < block; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += g[row(i) + c] * vv[row(j) + c];
                dp[i * block + j] = s;
                for (std::size_t c = 0; c < dh; ++c) gv[row(j) + c] += p[i * block + j] * g[row(i) + c];
              }
            }
            for (std::size_t i = 0; i < block; ++i) {
              double dot = 0.0;
              for (std::size_t j = 0; j < block; ++j) dot += dp[i * block + j] * p[i * block + j];
              for (std::size_t j = 0; j < block; ++j) {
                const double ds = p[i * block + j] * (dp[i * block + j] - dot) * inv_sqrt;
                for (std::size_t c = 0; c < dh; ++c) {
                  gq[row(i) + c] += ds * kv[row(j) + c];
                  gk[row(j) + c] += ds * qv[row(i) + c];
                }
              }
            }
          }
        }
        t.accumulate(iq, gq);
        t.accumulate(ik, gk);
        t.accumulate(iv, gv);
      });
}

// ---------------------------------------------------------------------------
// Convolution

struct ConvGeometry {
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t pad = 1;

  std::size_t out_extent(std::size_t in) const {
    if (in + 2 * pad < kernel) throw std::invalid_argument("conv2d: input smaller than kernel");
    return (in + 2 * pad - kernel) / stride + 1;
  }
};

namespace detail {

// cols: [C*k*k, Ho*Wo] for one image
inline void im2col(const double* img, std::size_t c, std::size_t h, std::size_t w, const ConvGeometry& geo,
                   std::size_t ho, std::size_t wo, double* cols) {
  const std::size_t k = geo.kernel;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* dst = cols + ((ch * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * geo.stride + ky) - static_cast<long>(geo.pad);
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * geo.stride + kx) - static_cast<long>(geo.pad);
            dst[oy * wo + ox] = (iy >= 0 && ix >= 0 && iy < static_cast<long>(h) && ix < static_cast<long>(w))
                                    ? img[(ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)]
                                    : 0.0;
          }
        }
      }
}

inline void col2im(const double* cols, std::size_t c, std::size_t h, std::size_t w, const ConvGeometry& geo,
                   std::size_t ho, std::size_t wo, double* img) {
  const std::size_t k = geo.kernel;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* src = cols + ((ch * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * geo.stride + ky) - static_cast<long>(geo.pad);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * geo.stride + kx) - static_cast<long>(geo.pad);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            img[(ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] += src[oy * wo + ox];
          }
        }
      }
}

}  // namespace detail

/// 2-D convolution. x: [N, C, H, W], weight: [O, C, k, k], bias: [O].
inline Var conv2d(Var x, Var weight, Var bias, ConvGeometry geo = {}) {
  detail::require_rank(x, 4, "conv2d");
  detail::require_rank(weight, 4, "conv2d");
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const std::size_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const std::size_t o = ws[0], k = geo.kernel;
  if (ws[1] != c || ws[2] != k || ws[3] != k) {
    throw std::invalid_argument("conv2d: weight shape " + shape_string(ws) + " incompatible with input " +
                                shape_string(xs));
  }
  if (bias.value().size() != o) throw std::invalid_argument("conv2d: bias length mismatch");
  const std::size_t ho = geo.out_extent(h), wo = geo.out_extent(w);
  const std::size_t ck = c * k * k, hw = ho * wo;

  Array cols(Shape{n, ck, hw});
  Array out(Shape{n, o, ho, wo});
  const auto wmat = detail::as_mat(weight.value(), o, ck);
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = cols.data() + i * ck * hw;
    detail::im2col(x.value().data() + i * c * h * w, c, h, w, geo, ho, wo, ci);
    detail::MatMap oi(out.data() + i * o * hw, static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(hw));
    oi.noalias() = wmat * detail::ConstMatMap(ci, static_cast<Eigen::Index>(ck), static_cast<Eigen::Index>(hw));
    for (std::size_t oc = 0; oc < o; ++oc) oi.row(static_cast<Eigen::Index>(oc)).array() += bias.value()[oc];
  }

  const auto ix = x.id(), iw = weight.id(), ib = bias.id();
  const Array wv = weight.value();
  return x.tape().record(
      "conv2d", std::move(out), {x, weight, bias},
      [ix, iw, ib, cols, wv, geo, n, c, h, w, o, ho, wo, ck, hw](Tape& t, const Array& g) {
        const auto wmat = detail::as_mat(wv, o, ck);
        if (t.requires_grad(iw)) {
          Array& gw = t.grad_slot(iw);
          auto gwm = detail::as_mat(gw, o, ck);
          for (std::size_t i = 0; i < n; ++i) {
            detail::ConstMatMap gi(g.data() + i * o * hw, static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(hw));
            detail::ConstMatMap ci(cols.data() + i * ck * hw, static_cast<Eigen::Index>(ck),
                                   static_cast<Eigen::Index>(hw));
            gwm.noalias() += gi * ci.transpose();
          }
        }
        if (t.requires_grad(ib)) {
          Array& gb = t.grad_slot(ib);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t oc = 0; oc < o; ++oc) {
              const double* gp = g.data() + (i * o + oc) * hw;
              double s = 0.0;
              for (std::size_t p = 0; p < hw; ++p) s += gp[p];
              gb[oc] += s;
            }
        }
        if (t.requires_grad(ix)) {
          Array& gx = t.grad_slot(ix);
          detail::RowMat dcol(static_cast<Eigen::Index>(ck), static_cast<Eigen::Index>(hw));
          for (std::size_t i = 0; i < n; ++i) {
            detail::ConstMatMap gi(g.data() + i * o * hw, static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(hw));
            dcol.noalias() = wmat.transpose() * gi;
            detail::col2im(dcol.data(), c, h, w, geo, ho, wo, gx.data() + i * c * h * w);
          }
        }
      });
}

/// [N, C, H, W]: out[n, c] = scale[c] * x[n, c] + shift[c].
inline Var channel_affine(Var x, std::vector<double> scale, std::vector<double> shift) {
  detail::require_rank(x, 4, "channel_affine");
  const Shape xs = x.shape();
  const std::size_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
  if (scale.size() != c || shift.size() != c) throw std::invalid_argument("channel_affine: one scale and shift per channel");
  Array out(xs);
  for (std::size_t i = 0; i < n * c; ++i) {
    const double a = scale[i % c], b = shift[i % c];
    const double* p = x.value().data() + i * hw;
    for (std::size_t j = 0; j < hw; ++j) out[i * hw + j] = a * p[j] + b;
  }
  const auto ix = x.id();
  return x.tape().record("channel_affine", std::move(out), {x}, [ix, xs, n, c, hw, scale](Tape& t, const Array& g) {
    Array gx(xs);
    for (std::size_t i = 0; i < n * c; ++i)
      for (std::size_t j = 0; j < hw; ++j) gx[i * hw + j] = scale[i % c] * g[i * hw + j];
    t.accumulate(ix, gx);
  });
}

/// [N, C, H, W] -> [N, C] mean over spatial positions.
inline Var global_avg_pool(Var x) {
  detail::require_rank(x, 4, "global_avg_pool");
  const Shape xs = x.shape();
  const std::size_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
  Array out(Shape{n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    const double* p = x.value().data() + i * hw;
    for (std::size_t j = 0; j < hw; ++j) s += p[j];
    out[i] = s / static_cast<double>(hw);
  }
  const auto ix = x.id();
  return x.tape().record("global_avg_pool", std::move(out), {x}, [ix, xs, n, c, hw](Tape& t, const Array& g) {
    Array gx(xs);
    for (std::size_t i = 0; i < n * c; ++i) {
      const double v = g[i] / static_cast<double>(hw);
      std::fill(gx.data() + i * hw, gx.data() + (i + 1) * hw, v);
    }
    t.accumulate(ix, gx);
  });
}

}  // namespace deepglioma::ad
