#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepglioma/genomics/panel.hpp"

namespace deepglioma::genomics {

/// Per-label state seen by the losses and the transformer head.
enum class LabelState : std::uint8_t { negative = 0, positive = 1, masked = 2 };

inline LabelState state_of(Call c) {
  switch (c) {
    case Call::mutant: return LabelState::positive;
    case Call::wildtype: return LabelState::negative;
    case Call::unknown: return LabelState::masked;
  }
  return LabelState::masked;
}

/// States over the whole panel plus per-label weights.
struct LabelVector {
  std::vector<LabelState> states;
  std::vector<double> weights;

  static LabelVector from_calls(const GenePanel& panel, const std::map<std::string, Call>& calls,
                                std::vector<double> weights = {}) {
    LabelVector v;
    for (const auto& g : panel.genes()) {
      auto it = calls.find(g);
      v.states.push_back(state_of(it == calls.end() ? Call::unknown : it->second));
    }
    v.weights = weights.empty() ? std::vector<double>(panel.size(), 1.0) : std::move(weights);
    v.validate();
    return v;
  }

  std::size_t size() const noexcept { return states.size(); }

  void validate() const {
    if (weights.size() != states.size()) throw std::invalid_argument("LabelVector: one weight per label required");
    for (double w : weights)
      if (!(w > 0.0)) throw std::invalid_argument("LabelVector: label weights must be positive");
  }
};

/// 1 for positive, 0 otherwise.
inline double binary_target(LabelState s) { return s == LabelState::positive ? 1.0 : 0.0; }

}  // namespace deepglioma::genomics
