#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "deepglioma/core/array.hpp"
#include "deepglioma/genomics/panel.hpp"

namespace deepglioma::genomics {

/// Symmetric 2n x 2n token co-occurrence counts with a zero diagonal.
class CooccurrenceMatrix {
 public:
  CooccurrenceMatrix() = default;
  explicit CooccurrenceMatrix(std::size_t tokens) : n_(tokens), counts_(tokens * tokens, 0) {}

  std::size_t tokens() const noexcept { return n_; }
  std::int64_t operator()(std::size_t a, std::size_t b) const { return counts_[a * n_ + b]; }

  /// Adds `k` to both (a, b) and (b, a).
  void add_pair(std::size_t a, std::size_t b, std::int64_t k = 1) {
    if (a == b) throw std::invalid_argument("CooccurrenceMatrix: diagonal entries are always zero");
    if (a >= n_ || b >= n_) throw std::out_of_range("CooccurrenceMatrix: token out of range");
    counts_[a * n_ + b] += k;
    counts_[b * n_ + a] += k;
  }

  std::int64_t max_count() const {
    std::int64_t m = 0;
    for (auto c : counts_) m = std::max(m, c);
    return m;
  }

  bool all_zero() const { return max_count() == 0; }

  ad::Array to_array() const {
    ad::Array a(ad::Shape{n_, n_});
    for (std::size_t i = 0; i < counts_.size(); ++i) a[i] = static_cast<double>(counts_[i]);
    return a;
  }

  friend bool operator==(const CooccurrenceMatrix&, const CooccurrenceMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::int64_t> counts_;
};

/// X[a, b] = number of patients in which tokens a and b both hold (a != b).
/// Unknown calls contribute nothing.
inline CooccurrenceMatrix build_cooccurrence(const std::vector<MutationProfile>& profiles, const GenePanel& panel) {
  if (profiles.empty()) throw std::invalid_argument("build_cooccurrence: no mutation profiles");
  CooccurrenceMatrix x(panel.token_count());
  std::vector<std::size_t> active;
  for (const auto& p : profiles) {
    active.clear();
    for (const auto& [gene, call] : p.calls) {
      const std::size_t g = panel.index_of(gene);
      if (call != Call::unknown) active.push_back(panel.token(g, call));
    }
    for (std::size_t i = 0; i < active.size(); ++i)
      for (std::size_t j = i + 1; j < active.size(); ++j) x.add_pair(active[i], active[j]);
  }
  return x;
}

}  // namespace deepglioma::genomics
