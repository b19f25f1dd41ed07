#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepglioma/core/array.hpp"

namespace deepglioma::eval {

/// Hard decisions use p >= threshold as positive (mutant).
inline constexpr double kDecisionThreshold = 0.5;

inline bool decide(double p) { return p >= kDecisionThreshold; }

namespace detail {

inline void require_both_classes(const std::vector<int>& labels, const char* op) {
  std::size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument(std::string(op) + ": labels must be 0 or 1");
    pos += y == 1;
  }
  if (pos == 0 || pos == labels.size()) throw std::invalid_argument(std::string(op) + ": both classes must be present");
}

inline void require_aligned(std::size_t a, std::size_t b, const char* op) {
  if (a != b) throw std::invalid_argument(std::string(op) + ": " + std::to_string(a) + " scores for " + std::to_string(b) + " labels");
}

inline bool has_both_classes(const std::vector<int>& labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  return pos > 0 && static_cast<std::size_t>(pos) < labels.size();
}

}  // namespace detail

/// P(score of a random positive > score of a random negative), ties counted half.
/// Computed from mid-ranks, O(n log n).
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  detail::require_aligned(scores.size(), labels.size(), "roc_auc");
  detail::require_both_classes(labels, "roc_auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j + 1);  // mean of 1-based ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += mid, ++pos;
    i = j;
  }
  const double np = static_cast<double>(pos), nn = static_cast<double>(n - pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

/// Rectangle-rule area under the precision-recall steps: sum over distinct
/// score thresholds (descending) of (R_k - R_{k-1}) * P_k.
inline double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  detail::require_aligned(scores.size(), labels.size(), "average_precision");
  const std::size_t total_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (total_pos == 0) throw std::invalid_argument("average_precision: no positive labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]] == 1;
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    ap += (recall - prev_recall) * static_cast<double>(tp) / static_cast<double>(seen);
    prev_recall = recall;
    i = j;
  }
  return ap;
}

struct Confusion {
  std::size_t tn = 0, fp = 0, fn = 0, tp = 0;

  std::size_t total() const { return tn + fp + fn + tp; }
  double accuracy() const { return total() ? static_cast<double>(tp + tn) / static_cast<double>(total()) : 0.0; }
  /// 2TP / (2TP + FP + FN); 1 when there is nothing to find and nothing predicted.
  double f1() const {
    const std::size_t d = 2 * tp + fp + fn;
    return d ? 2.0 * static_cast<double>(tp) / static_cast<double>(d) : 1.0;
  }
  double sensitivity() const { return static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double specificity() const { return static_cast<double>(tn) / static_cast<double>(tn + fp); }

  friend bool operator==(const Confusion&, const Confusion&) = default;
};

inline Confusion confusion(const std::vector<double>& probs, const std::vector<int>& labels) {
  detail::require_aligned(probs.size(), labels.size(), "confusion");
  Confusion c;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool p = decide(probs[i]), y = labels[i] == 1;
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

/// (sensitivity + specificity) / 2 at the 0.5 threshold.
inline double balanced_accuracy(const std::vector<double>& probs, const std::vector<int>& labels) {
  detail::require_aligned(probs.size(), labels.size(), "balanced_accuracy");
  detail::require_both_classes(labels, "balanced_accuracy");
  const Confusion c = confusion(probs, labels);
  return 0.5 * (c.sensitivity() + c.specificity());
}

struct LabelMetrics {
  std::string name;
  Confusion counts;
  double accuracy = 0.0;
  double f1 = 0.0;
  // Undefined when the label has a single class in the evaluated set.
  std::optional<double> auroc, average_precision, balanced_accuracy;
};

struct MetricReport {
  std::size_t examples = 0;
  std::vector<LabelMetrics> labels;
  double mAcc = 0.0, mAP = 0.0, mAUC = 0.0;
  double SubAcc = 0.0, ebF1 = 0.0, micF1 = 0.0;

  const LabelMetrics& label(const std::string& name) const {
    for (const auto& l : labels)
      if (l.name == name) return l;
    throw std::out_of_range("MetricReport: no label '" + name + "'");
  }
};

namespace detail {

inline double mean_defined(const std::vector<LabelMetrics>& ls, std::optional<double> LabelMetrics::*field) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& l : ls)
    if ((l.*field).has_value()) s += *(l.*field), ++n;
  return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// probs, labels: [N, n] with labels in {0, 1}. mAUC and mAP average the labels
/// on which they are defined.
inline MetricReport multilabel_report(const ad::Array& probs, const ad::Array& labels, std::vector<std::string> names = {}) {
  if (probs.rank() != 2 || labels.rank() != 2 || probs.shape() != labels.shape()) {
    throw std::invalid_argument("multilabel_report: predictions " + ad::shape_string(probs.shape()) + " and labels " +
                                ad::shape_string(labels.shape()) + " are not aligned");
  }
  const std::size_t N = probs.rows(), n = probs.cols();
  if (N == 0 || n == 0) throw std::invalid_argument("multilabel_report: empty input");
  if (names.empty())
    for (std::size_t l = 0; l < n; ++l) names.push_back("label" + std::to_string(l));
  if (names.size() != n) throw std::invalid_argument("multilabel_report: one name per label required");
  for (double y : labels.values())
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("multilabel_report: labels must be 0 or 1");

  MetricReport r;
  r.examples = N;
  Confusion pooled;
  for (std::size_t l = 0; l < n; ++l) {
    std::vector<double> s(N);
    std::vector<int> y(N);
    for (std::size_t i = 0; i < N; ++i) {
      s[i] = probs[i * n + l];
      y[i] = static_cast<int>(labels[i * n + l]);
    }
    LabelMetrics m{names[l], confusion(s, y), 0.0, 0.0, {}, {}, {}};
    m.accuracy = m.counts.accuracy();
    m.f1 = m.counts.f1();
    if (detail::has_both_classes(y)) {
      m.auroc = roc_auc(s, y);
      m.balanced_accuracy = balanced_accuracy(s, y);
    }
    if (m.counts.tp + m.counts.fn > 0) m.average_precision = average_precision(s, y);
    pooled.tp += m.counts.tp, pooled.fp += m.counts.fp, pooled.fn += m.counts.fn, pooled.tn += m.counts.tn;
    r.mAcc += m.accuracy / static_cast<double>(n);
    r.labels.push_back(std::move(m));
  }
  r.mAUC = detail::mean_defined(r.labels, &LabelMetrics::auroc);
  r.mAP = detail::mean_defined(r.labels, &LabelMetrics::average_precision);
  r.micF1 = pooled.f1();

  std::size_t exact = 0;
  double eb = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    std::size_t inter = 0, truth = 0, pred = 0, agree = 0;
    for (std::size_t l = 0; l < n; ++l) {
      const bool p = decide(probs[i * n + l]), y = labels[i * n + l] == 1.0;
      inter += p && y, truth += y, pred += p, agree += p == y;
    }
    exact += agree == n;
    eb += truth + pred ? 2.0 * static_cast<double>(inter) / static_cast<double>(truth + pred) : 1.0;
  }
  r.SubAcc = static_cast<double>(exact) / static_cast<double>(N);
  r.ebF1 = eb / static_cast<double>(N);
  return r;
}

inline void to_json(nlohmann::json& j, const Confusion& c) { j = {{"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}, {"tp", c.tp}}; }

inline nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline void to_json(nlohmann::json& j, const LabelMetrics& m) {
  j = {{"name", m.name},
       {"confusion", m.counts},
       {"accuracy", m.accuracy},
       {"f1", m.f1},
       {"auroc", optional_json(m.auroc)},
       {"average_precision", optional_json(m.average_precision)},
       {"balanced_accuracy", optional_json(m.balanced_accuracy)}};
}

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline void to_json(nlohmann::json& j, const MetricReport& r) {
  j = {{"examples", r.examples}, {"labels", r.labels},       {"mAcc", r.mAcc},   {"mAP", finite_or_null(r.mAP)},
       {"mAUC", finite_or_null(r.mAUC)}, {"SubAcc", r.SubAcc}, {"ebF1", r.ebF1}, {"micF1", r.micF1}};
}

}  // namespace deepglioma::eval
