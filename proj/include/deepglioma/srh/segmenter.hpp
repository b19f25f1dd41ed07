#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string_view>

#include "deepglioma/srh/slide.hpp"

namespace deepglioma::srh {

inline std::string_view to_string(Tissue t) {
  switch (t) {
    case Tissue::nondiagnostic: return "nondiagnostic";
    case Tissue::normal: return "normal";
    case Tissue::tumor: return "tumor";
  }
  return "";
}

/// Class probabilities indexed by Tissue, and their argmax.
struct SegmentationVerdict {
  Tissue label = Tissue::nondiagnostic;
  std::array<double, 3> probs{1.0, 0.0, 0.0};

  static SegmentationVerdict from_probs(const std::array<double, 3>& p) {
    const auto best = std::max_element(p.begin(), p.end()) - p.begin();
    return {static_cast<Tissue>(best), p};
  }

  bool is_tumor() const { return label == Tissue::tumor; }
};

/// Classifies the square window [y0, y0+size) x [x0, x0+size) of a slide.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual SegmentationVerdict classify(const WholeSlide& slide, std::size_t y0, std::size_t x0,
                                       std::size_t size) const = 0;
};

/// Reads the synthetic generator's region map: class probabilities are the
/// pixel fractions of each tissue inside the window.
class GroundTruthSegmenter final : public Segmenter {
 public:
  SegmentationVerdict classify(const WholeSlide& slide, std::size_t y0, std::size_t x0,
                               std::size_t size) const override {
    if (slide.regions.empty()) throw std::invalid_argument("GroundTruthSegmenter: slide " + slide.slide_id + " has no region map");
    return SegmentationVerdict::from_probs(tissue_fractions(slide.regions, y0, x0, size, size));
  }
};

}  // namespace deepglioma::srh
