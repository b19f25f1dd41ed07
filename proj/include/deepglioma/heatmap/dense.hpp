#pragma once

#include <string>
#include <vector>

#include "deepglioma/classifier/train.hpp"
#include "deepglioma/heatmap/heatmap.hpp"
#include "deepglioma/srh/encoder.hpp"
#include "deepglioma/srh/segmenter.hpp"
#include "deepglioma/srh/slide.hpp"

namespace deepglioma::heatmap {

/// Overlapping-patch predictions for one slide.
struct DensePrediction {
  std::size_t height = 0, width = 0;
  std::vector<Origin> origins;
  ad::Array tissue;  // [P, 3] segmenter probabilities
  ad::Array genes;   // [P, n] fully masked head output
  srh::Image8 underlay;
};

inline DensePrediction dense_predict(srh::WholeSlide slide, srh::PatchEncoder& encoder, classifier::MolecularHead& head,
                                     const srh::Segmenter& seg, std::size_t stride = 100) {
  srh::register_channels(slide);
  DensePrediction out{slide.height(), slide.width(), dense_grid(slide.height(), slide.width(), stride), {}, {},
                      underlay_gray(slide)};
  const srh::ImageF three = srh::subtract_channel(slide);
  const std::size_t n = out.origins.size();
  out.tissue = ad::Array(ad::Shape{n, 3});
  std::vector<std::vector<float>> inputs;
  inputs.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto [y, x] = out.origins[k];
    srh::ImageF patch = srh::crop(three, y, x, srh::kPatchSize, srh::kPatchSize);
    for (auto& v : patch.data) v *= static_cast<float>(srh::kIntensityScale);
    inputs.push_back(srh::encoder_input(patch, encoder.config()));
    const auto verdict = seg.classify(slide, y, x, srh::kPatchSize);
    for (std::size_t c = 0; c < 3; ++c) out.tissue[k * 3 + c] = verdict.probs[c];
  }
  std::vector<const float*> ptrs;
  for (const auto& in : inputs) ptrs.push_back(in.data());
  out.genes = head.predict(encoder.encode(ptrs));
  return out;
}

/// Pools, masks to tumor and renders one subgroup map.
inline srh::Image8 render_subgroup(const DensePrediction& d, Subgroup s, const HeatmapThresholds& t = {},
                                   GeneChannels ch = {}) {
  const ProbabilityField genes = pool_overlaps(d.genes, d.origins, d.height, d.width);
  const ProbabilityField tissue = pool_overlaps(d.tissue, d.origins, d.height, d.width);
  return render_image(subgroup_heatmap(genes, s, t, ch), d.underlay, tumor_mask(tissue));
}

}  // namespace deepglioma::heatmap
