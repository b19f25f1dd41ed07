#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepglioma/core/array.hpp"
#include "deepglioma/genomics/cohort.hpp"
#include "deepglioma/heatmap/colormap.hpp"
#include "deepglioma/srh/image.hpp"
#include "deepglioma/srh/png_io.hpp"
#include "deepglioma/srh/slide.hpp"

namespace deepglioma::heatmap {

using genomics::Subgroup;

struct Origin {
  std::size_t y = 0, x = 0;
  friend bool operator==(const Origin&, const Origin&) = default;
};

/// Top-left corners at `stride` spacing such that every size x size patch fits.
inline std::vector<Origin> dense_grid(std::size_t height, std::size_t width, std::size_t stride = 100,
                                      std::size_t size = srh::kPatchSize) {
  if (stride == 0) throw std::invalid_argument("dense_grid: stride must be positive");
  if (height < size || width < size) {
    throw std::invalid_argument("dense_grid: slide " + std::to_string(height) + "x" + std::to_string(width) +
                                " is smaller than one patch");
  }
  std::vector<Origin> out;
  for (std::size_t y = 0; y + size <= height; y += stride)
    for (std::size_t x = 0; x + size <= width; x += stride) out.push_back({y, x});
  return out;
}

/// Per-pixel mean of overlapping patch predictions, one plane per channel.
/// Pixels outside every patch hold NaN and a zero count.
struct ProbabilityField {
  std::size_t height = 0, width = 0, channels = 0;
  std::vector<double> values;  // [channel][y][x]
  std::vector<std::uint32_t> count;

  double at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
  bool covered(std::size_t y, std::size_t x) const { return count[y * width + x] > 0; }
};

/// preds: [P, channels], one row per origin.
inline ProbabilityField pool_overlaps(const ad::Array& preds, const std::vector<Origin>& origins, std::size_t height,
                                      std::size_t width, std::size_t size = srh::kPatchSize) {
  if (preds.rank() != 2 || preds.rows() != origins.size()) {
    throw std::invalid_argument("pool_overlaps: " + std::to_string(origins.size()) + " origins but predictions of shape " +
                                ad::shape_string(preds.shape()));
  }
  ProbabilityField f{height, width, preds.cols(), std::vector<double>(preds.cols() * height * width, 0.0),
                     std::vector<std::uint32_t>(height * width, 0)};
  const std::size_t plane = height * width;
  for (std::size_t k = 0; k < origins.size(); ++k) {
    const auto [y0, x0] = origins[k];
    if (y0 + size > height || x0 + size > width) throw std::out_of_range("pool_overlaps: patch outside the slide");
    for (std::size_t y = y0; y < y0 + size; ++y)
      for (std::size_t x = x0; x < x0 + size; ++x) {
        ++f.count[y * width + x];
        for (std::size_t c = 0; c < f.channels; ++c) f.values[c * plane + y * width + x] += preds[k * f.channels + c];
      }
  }
  for (std::size_t c = 0; c < f.channels; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      f.values[c * plane + i] = f.count[i] ? f.values[c * plane + i] / f.count[i] : std::numeric_limits<double>::quiet_NaN();
  return f;
}

/// Pixel-level tumor mask from a pooled tissue field (channels indexed by Tissue).
inline std::vector<std::uint8_t> tumor_mask(const ProbabilityField& tissue) {
  if (tissue.channels != 3) throw std::invalid_argument("tumor_mask: expected three tissue channels");
  std::vector<std::uint8_t> m(tissue.height * tissue.width, 0);
  for (std::size_t y = 0; y < tissue.height; ++y)
    for (std::size_t x = 0; x < tissue.width; ++x) {
      if (!tissue.covered(y, x)) continue;
      const double t = tissue.at(2, y, x);
      m[y * tissue.width + x] = t > tissue.at(0, y, x) && t > tissue.at(1, y, x);
    }
  return m;
}

struct HeatmapThresholds {
  double tau = 0.5;  // IDH
  double phi = 0.5;  // 1p19q
  double pi = 0.5;   // ATRX
  // Where the oligodendroglioma and astrocytoma conditions both hold, the
  // patient-level ratio rule decides: 1p19q / (ATRX + eps) > psi -> oligo.
  double psi = 1.0;
  double eps = 1e-8;
};

inline void to_json(nlohmann::json& j, const HeatmapThresholds& t) {
  j = {{"tau", t.tau}, {"phi", t.phi}, {"pi", t.pi}, {"psi", t.psi}, {"eps", t.eps}};
}
inline void from_json(const nlohmann::json& j, HeatmapThresholds& t) {
  HeatmapThresholds d;
  t.tau = j.value("tau", d.tau);
  t.phi = j.value("phi", d.phi);
  t.pi = j.value("pi", d.pi);
  t.psi = j.value("psi", d.psi);
  t.eps = j.value("eps", d.eps);
}

/// [IDH > tau and 1p19q > phi]
inline bool oligo_condition(double idh, double codel, const HeatmapThresholds& t) { return idh > t.tau && codel > t.phi; }

/// [IDH > tau and (1p19q < phi or ATRX > pi)]
inline bool astro_condition(double idh, double codel, double atrx, const HeatmapThresholds& t) {
  return idh > t.tau && (codel < t.phi || atrx > t.pi);
}

/// Conditional masks used for rendering; never both true.
inline bool oligo_mask(double idh, double codel, double atrx, const HeatmapThresholds& t) {
  if (!oligo_condition(idh, codel, t)) return false;
  if (!astro_condition(idh, codel, atrx, t)) return true;
  return codel / (atrx + t.eps) > t.psi;
}

inline bool astro_mask(double idh, double codel, double atrx, const HeatmapThresholds& t) {
  return astro_condition(idh, codel, atrx, t) && !oligo_mask(idh, codel, atrx, t);
}

/// Per-pixel subgroup value; 0 where the conditional mask is off.
inline double subgroup_value(Subgroup s, double idh, double codel, double atrx, const HeatmapThresholds& t) {
  switch (s) {
    case Subgroup::glioblastoma: return 1.0 - idh;
    case Subgroup::oligodendroglioma: return oligo_mask(idh, codel, atrx, t) ? idh : 0.0;
    case Subgroup::astrocytoma: return astro_mask(idh, codel, atrx, t) ? idh : 0.0;
  }
  throw std::invalid_argument("subgroup_value: unknown subgroup");
}

struct GeneChannels {
  std::size_t idh = 0, codel = 1, atrx = 2;
};

struct SubgroupHeatmap {
  std::size_t height = 0, width = 0;
  Subgroup subgroup = Subgroup::glioblastoma;
  HeatmapThresholds thresholds;
  std::vector<double> values;  // NaN where no patch covers the pixel
};

/// Applies the subgroup formula to an already pooled gene field.
inline SubgroupHeatmap subgroup_heatmap(const ProbabilityField& genes, Subgroup s, const HeatmapThresholds& t = {},
                                        GeneChannels ch = {}) {
  if (std::max({ch.idh, ch.codel, ch.atrx}) >= genes.channels) {
    throw std::invalid_argument("subgroup_heatmap: gene channel outside the field");
  }
  SubgroupHeatmap h{genes.height, genes.width, s, t, std::vector<double>(genes.height * genes.width)};
  for (std::size_t y = 0; y < genes.height; ++y)
    for (std::size_t x = 0; x < genes.width; ++x) {
      h.values[y * genes.width + x] =
          genes.covered(y, x)
              ? subgroup_value(s, genes.at(ch.idh, y, x), genes.at(ch.codel, y, x), genes.at(ch.atrx, y, x), t)
              : std::numeric_limits<double>::quiet_NaN();
    }
  return h;
}

inline SubgroupHeatmap subgroup_heatmap(const ProbabilityField& genes, const std::string& tag,
                                        const HeatmapThresholds& t = {}, GeneChannels ch = {}) {
  return subgroup_heatmap(genes, genomics::parse_subgroup(tag), t, ch);
}

/// Gray underlay from the CH2 plane, linear over the 16-bit range.
inline srh::Image8 underlay_gray(const srh::WholeSlide& slide) {
  srh::Image8 g(slide.height(), slide.width(), 1);
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    g.data[i] = static_cast<std::uint8_t>((static_cast<unsigned>(slide.ch2.data[i]) * 255u + 32767u) / 65535u);
  }
  return g;
}

inline std::size_t colormap_index(double p) {
  return static_cast<std::size_t>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0));
}

/// RGB image: colormap over tumor pixels with a positive value, gray underlay elsewhere.
inline srh::Image8 render_image(const SubgroupHeatmap& h, const srh::Image8& underlay,
                                const std::vector<std::uint8_t>& tumor) {
  if (underlay.height != h.height || underlay.width != h.width || underlay.channels != 1) {
    throw std::invalid_argument("render_image: underlay must be a single-channel image of the heatmap size");
  }
  if (tumor.size() != h.height * h.width) throw std::invalid_argument("render_image: tumor mask size mismatch");
  srh::Image8 out(h.height, h.width, 3);
  for (std::size_t y = 0; y < h.height; ++y)
    for (std::size_t x = 0; x < h.width; ++x) {
      const std::size_t i = y * h.width + x;
      const double v = h.values[i];
      const bool paint = tumor[i] && std::isfinite(v) && v > 0.0;
      for (std::size_t c = 0; c < 3; ++c)
        out.at(y, x, c) = paint ? kColormap[colormap_index(v)][c] : underlay.data[i];
    }
  return out;
}

}  // namespace deepglioma::heatmap
