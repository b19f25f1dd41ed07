#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepglioma/genomics/panel.hpp"
#include "deepglioma/srh/augment.hpp"
#include "deepglioma/srh/slide.hpp"

namespace deepglioma::srh {

/// Statistic planted in tumor tissue when a gene is mutant.
enum class Texture {
  base_shift,  // CH2 tissue level lowered
  lattice,     // sin x sin lattice added to CH3
  spots,       // density of bright CH2 droplets raised
};

inline std::string_view to_string(Texture t) {
  switch (t) {
    case Texture::base_shift: return "base_shift";
    case Texture::lattice: return "lattice";
    case Texture::spots: return "spots";
  }
  return "";
}

struct PlantedTexture {
  std::string gene;
  Texture kind;
};

inline std::vector<PlantedTexture> default_textures() {
  return {{"IDH", Texture::base_shift}, {"1p19q", Texture::lattice}, {"ATRX", Texture::spots}};
}

/// Intensities are in [0, 1] before 16-bit quantisation.
struct TextureParams {
  double tumor_level = 0.42, normal_level = 0.34, nondiagnostic_level = 0.08;
  double level_jitter = 0.02;     // sd of a smooth staining field
  double pixel_noise = 0.03;
  double nuclei_per_patch_tumor = 60, nuclei_per_patch_normal = 20;
  double base_shift = 0.06;       // subtracted from CH2 tumor level
  double lattice_amplitude = 0.04;
  double lattice_period = 32.0;   // pixels
  double spots_per_patch_mutant = 24, spots_per_patch_wildtype = 4;
  double spot_amplitude = 0.14;
  double spot_radius = 5.0;
  double protein_gain = 1.15, protein_offset = 0.05;  // CH3 = gain * CH2 + offset
};

struct SynthSpec {
  std::string slide_id = "S0001";
  std::string patient_id = "P0001";
  std::size_t height = 1800, width = 1800;
  std::map<std::string, genomics::Call> labels;
  std::vector<PlantedTexture> textures = default_textures();
  double tumor_fraction = 0.7;
  double nondiagnostic_share = 0.4;  // of the non-tumor area
  double region_scale = 250.0;       // pixels between control points of the region fields
  long max_channel_shift = 4;
  TextureParams params;

  void validate() const {
    if (height < kPatchSize || width < kPatchSize) throw std::invalid_argument("synth_slide: slide smaller than one patch");
    if (!(tumor_fraction > 0.0 && tumor_fraction <= 1.0)) throw std::invalid_argument("synth_slide: tumor_fraction must be in (0, 1]");
    if (!(nondiagnostic_share >= 0.0 && nondiagnostic_share <= 1.0)) {
      throw std::invalid_argument("synth_slide: nondiagnostic_share must be in [0, 1]");
    }
    if (!(region_scale > 1.0)) throw std::invalid_argument("synth_slide: region_scale must exceed 1");
    if (max_channel_shift < 0) throw std::invalid_argument("synth_slide: negative channel shift");
    std::set<std::string> genes;
    std::set<Texture> kinds;
    for (const auto& t : textures) {
      if (!genes.insert(t.gene).second) throw std::invalid_argument("synth_slide: gene '" + t.gene + "' has two textures");
      if (!kinds.insert(t.kind).second) {
        throw std::invalid_argument("synth_slide: texture " + std::string(to_string(t.kind)) + " assigned twice");
      }
    }
    for (const auto& [g, c] : labels) {
      if (!genes.count(g)) throw std::invalid_argument("synth_slide: label '" + g + "' has no planted texture");
      if (c == genomics::Call::unknown) throw std::invalid_argument("synth_slide: label '" + g + "' must be mutant or wildtype");
    }
  }

  bool mutant(Texture kind) const {
    for (const auto& t : textures)
      if (t.kind == kind) {
        auto it = labels.find(t.gene);
        return it != labels.end() && it->second == genomics::Call::mutant;
      }
    return false;
  }
};

struct SynthSlide {
  WholeSlide slide;
  Shift planted_shift;  // CH2 = roll(aligned CH2, dy, dx)
};

namespace detail {

/// Smooth random field: Gaussian control points every `scale` pixels, bicubic-ish
/// (smoothstep) interpolation. Unit variance at control points.
template <class Rng>
std::vector<double> smooth_field(std::size_t h, std::size_t w, double scale, Rng& rng) {
  const std::size_t gh = static_cast<std::size_t>(std::ceil(static_cast<double>(h) / scale)) + 2;
  const std::size_t gw = static_cast<std::size_t>(std::ceil(static_cast<double>(w) / scale)) + 2;
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> grid(gh * gw);
  for (auto& v : grid) v = n01(rng);
  std::vector<double> out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = static_cast<double>(y) / scale;
    const auto iy = static_cast<std::size_t>(fy);
    double ty = fy - static_cast<double>(iy);
    ty = ty * ty * (3 - 2 * ty);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) / scale;
      const auto ix = static_cast<std::size_t>(fx);
      double tx = fx - static_cast<double>(ix);
      tx = tx * tx * (3 - 2 * tx);
      const double a = grid[iy * gw + ix], b = grid[iy * gw + ix + 1];
      const double c = grid[(iy + 1) * gw + ix], d = grid[(iy + 1) * gw + ix + 1];
      out[y * w + x] = (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d);
    }
  }
  return out;
}

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  q = std::clamp(q, 0.0, 1.0);
  const auto k = static_cast<std::size_t>(std::min(q * static_cast<double>(v.size()), static_cast<double>(v.size() - 1)));
  std::nth_element(v.begin(), v.begin() + static_cast<long>(k), v.end());
  return v[k];
}

// Adds a Gaussian bump of peak `amp` and sd radius/2, cut at 2 radii.
inline void add_bump(std::vector<double>& img, std::size_t h, std::size_t w, double cy, double cx, double radius,
                     double amp) {
  const long r = static_cast<long>(std::ceil(2 * radius));
  const long y0 = std::max(0L, static_cast<long>(cy) - r), y1 = std::min(static_cast<long>(h) - 1, static_cast<long>(cy) + r);
  const long x0 = std::max(0L, static_cast<long>(cx) - r), x1 = std::min(static_cast<long>(w) - 1, static_cast<long>(cx) + r);
  const double inv = 1.0 / (2.0 * radius * radius / 4.0);
  for (long y = y0; y <= y1; ++y)
    for (long x = x0; x <= x1; ++x) {
      const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      img[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] += amp * std::exp(-d2 * inv);
    }
}

inline std::uint16_t quantize16(double v) {
  return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
}

}  // namespace detail

/// Deterministic synthetic slide. Tumor tissue carries each mutant gene's
/// planted texture; normal and nondiagnostic tissue carry none.
inline SynthSlide synth_slide(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t h = spec.height, w = spec.width, n = h * w;
  const TextureParams& tp = spec.params;
  std::mt19937_64 rng(seed);

  // Region map from two smooth fields thresholded at quantiles.
  const auto f_tumor = detail::smooth_field(h, w, spec.region_scale, rng);
  const auto f_diag = detail::smooth_field(h, w, spec.region_scale, rng);
  const auto f_stain = detail::smooth_field(h, w, spec.region_scale * 0.6, rng);
  const double t_cut = spec.tumor_fraction >= 1.0 ? -1e300 : detail::quantile(f_tumor, 1.0 - spec.tumor_fraction);
  std::vector<double> rest;
  rest.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (f_tumor[i] < t_cut) rest.push_back(f_diag[i]);
  const double d_cut = detail::quantile(rest, spec.nondiagnostic_share);

  Image8 regions(h, w, 1);
  for (std::size_t i = 0; i < n; ++i) {
    Tissue t = f_tumor[i] >= t_cut ? Tissue::tumor
               : (spec.nondiagnostic_share > 0.0 && f_diag[i] < d_cut) ? Tissue::nondiagnostic
                                                                      : Tissue::normal;
    regions.data[i] = static_cast<std::uint8_t>(t);
  }
  auto tissue = [&](std::size_t i) { return static_cast<Tissue>(regions.data[i]); };

  const bool idh = spec.mutant(Texture::base_shift);
  const bool codel = spec.mutant(Texture::lattice);
  const bool atrx = spec.mutant(Texture::spots);

  // Lipid (CH2) and protein (CH3) components before noise.
  std::vector<double> ch2(n), ch3_extra(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double level = tp.nondiagnostic_level;
    if (tissue(i) == Tissue::tumor) level = tp.tumor_level - (idh ? tp.base_shift : 0.0);
    if (tissue(i) == Tissue::normal) level = tp.normal_level;
    ch2[i] = level + (tissue(i) == Tissue::nondiagnostic ? 0.0 : tp.level_jitter * f_stain[i]);
  }

  const double patch_area = static_cast<double>(kPatchSize * kPatchSize);
  const double area = static_cast<double>(n);
  std::uniform_real_distribution<double> uy(0.0, static_cast<double>(h)), ux(0.0, static_cast<double>(w));
  auto scatter = [&](double per_patch, auto&& place) {
    std::poisson_distribution<long> count(per_patch * area / patch_area);
    const long k = count(rng);
    for (long j = 0; j < k; ++j) {
      const double cy = uy(rng), cx = ux(rng);
      place(cy, cx, tissue(static_cast<std::size_t>(cy) * w + static_cast<std::size_t>(cx)));
    }
  };
  // Nuclei: dark in CH2, bright in CH3, in cellular tissue.
  std::vector<double> nuclei(n, 0.0);
  scatter(std::max(tp.nuclei_per_patch_tumor, tp.nuclei_per_patch_normal), [&](double cy, double cx, Tissue t) {
    const double keep = t == Tissue::tumor ? 1.0
                        : t == Tissue::normal
                            ? tp.nuclei_per_patch_normal / std::max(tp.nuclei_per_patch_tumor, tp.nuclei_per_patch_normal)
                            : 0.0;
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < keep) detail::add_bump(nuclei, h, w, cy, cx, 3.0, 1.0);
  });
  // Droplets: bright in CH2, tumor only.
  std::vector<double> spots(n, 0.0);
  scatter(atrx ? tp.spots_per_patch_mutant : tp.spots_per_patch_wildtype, [&](double cy, double cx, Tissue t) {
    if (t == Tissue::tumor) detail::add_bump(spots, h, w, cy, cx, tp.spot_radius, tp.spot_amplitude);
  });

  const double k = 2.0 * std::numbers::pi / tp.lattice_period;
  std::normal_distribution<double> noise(0.0, tp.pixel_noise);
  Image16 c2(h, w, 1), c3(h, w, 1);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      const bool tumor = tissue(i) == Tissue::tumor;
      const double lipid = ch2[i] - 0.06 * nuclei[i] + spots[i];
      double protein = tp.protein_gain * ch2[i] + tp.protein_offset + 0.02 * nuclei[i];
      if (tissue(i) == Tissue::nondiagnostic) protein = ch2[i];
      if (tumor && codel) protein += tp.lattice_amplitude * std::sin(k * static_cast<double>(y)) * std::sin(k * static_cast<double>(x));
      c2.data[i] = detail::quantize16(lipid + noise(rng));
      c3.data[i] = detail::quantize16(protein + noise(rng));
    }

  std::uniform_int_distribution<long> shift(-spec.max_channel_shift, spec.max_channel_shift);
  const Shift planted{shift(rng), shift(rng)};

  SynthSlide out;
  out.slide.slide_id = spec.slide_id;
  out.slide.patient_id = spec.patient_id;
  out.slide.labels = spec.labels;
  out.slide.ch2 = roll(c2, planted.dy, planted.dx);
  out.slide.ch3 = std::move(c3);
  out.slide.regions = std::move(regions);
  out.planted_shift = planted;
  return out;
}

// ---------------------------------------------------------------------------
// Hand-crafted patch statistics, one per planted texture. Patches are the
// [0, 1]-scaled three-plane tiles produced by extract_patches.

/// Mean CH2 intensity.
inline double mean_lipid(const ImageF& patch) {
  double s = 0.0;
  const float* c = patch.channel(0);
  for (std::size_t i = 0; i < patch.plane(); ++i) s += c[i];
  return s / static_cast<double>(patch.plane());
}

/// Energy of CH3 at the lattice frequency, phase-independent.
inline double lattice_band_energy(const ImageF& patch, double period = 32.0) {
  const double k = 2.0 * std::numbers::pi / period;
  const float* c = patch.channel(1);
  const std::size_t h = patch.height, w = patch.width;
  double mean = 0.0;
  for (std::size_t i = 0; i < patch.plane(); ++i) mean += c[i];
  mean /= static_cast<double>(patch.plane());
  std::vector<double> sy(h), cy(h), sx(w), cx(w);
  for (std::size_t y = 0; y < h; ++y) sy[y] = std::sin(k * y), cy[y] = std::cos(k * y);
  for (std::size_t x = 0; x < w; ++x) sx[x] = std::sin(k * x), cx[x] = std::cos(k * x);
  double ss = 0, sc = 0, cs = 0, cc = 0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double v = c[y * w + x] - mean;
      ss += v * sy[y] * sx[x];
      sc += v * sy[y] * cx[x];
      cs += v * cy[y] * sx[x];
      cc += v * cy[y] * cx[x];
    }
  const double norm = 4.0 / static_cast<double>(patch.plane());
  return (ss * ss + sc * sc + cs * cs + cc * cc) * norm * norm;
}

namespace detail {

// Separable running min (take_max = false) or max over a (2r+1)^2 window, clamped borders.
inline std::vector<double> rank_filter(const std::vector<double>& in, std::size_t h, std::size_t w, long r,
                                       bool take_max) {
  auto pick = [take_max](double a, double b) { return take_max ? std::max(a, b) : std::min(a, b); };
  std::vector<double> tmp(in.size()), out(in.size());
  const long H = static_cast<long>(h), W = static_cast<long>(w);
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      double v = in[y * W + x];
      for (long d = std::max(0L, x - r); d <= std::min(W - 1, x + r); ++d) v = pick(v, in[y * W + d]);
      tmp[y * W + x] = v;
    }
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      double v = tmp[y * W + x];
      for (long d = std::max(0L, y - r); d <= std::min(H - 1, y + r); ++d) v = pick(v, tmp[d * W + x]);
      out[y * W + x] = v;
    }
  return out;
}

}  // namespace detail

/// Fraction of CH2 pixels standing more than `margin` above a morphological
/// opening of the lightly blurred channel (white top-hat). Flat tissue,
/// region boundaries and dark nuclei do not respond; small bright droplets do.
inline double bright_spot_fraction(const ImageF& patch, double margin = 0.05, long window_radius = 6) {
  ImageF c2(patch.height, patch.width, 1);
  std::copy(patch.channel(0), patch.channel(0) + patch.plane(), c2.data.begin());
  const ImageF smooth = gaussian_blur(c2, 1.5);
  const std::vector<double> v(smooth.data.begin(), smooth.data.end());
  const auto opened = detail::rank_filter(detail::rank_filter(v, patch.height, patch.width, window_radius, false),
                                          patch.height, patch.width, window_radius, true);
  std::size_t k = 0;
  for (std::size_t i = 0; i < v.size(); ++i) k += v[i] - opened[i] > margin;
  return static_cast<double>(k) / static_cast<double>(v.size());
}

inline double texture_statistic(const ImageF& patch, Texture t, const TextureParams& tp = {}) {
  switch (t) {
    case Texture::base_shift: return -mean_lipid(patch);  // larger for mutant
    case Texture::lattice: return lattice_band_energy(patch, tp.lattice_period);
    case Texture::spots: return bright_spot_fraction(patch);
  }
  return 0.0;
}

}  // namespace deepglioma::srh
