#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "deepglioma/srh/image.hpp"

namespace deepglioma::srh {

/// Per-transform probabilities and magnitudes. Every transform keeps the
/// image size; `enabled = false` makes `augment` the identity.
struct AugmentConfig {
  bool enabled = true;
  double p_crop = 0.5;
  double crop_min_scale = 0.7;  // side of the crop relative to the image
  double p_blur = 0.3;
  double blur_sigma_min = 0.3, blur_sigma_max = 1.2;  // in pixels of the image being augmented
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  double p_erase = 0.25;
  double erase_min_area = 0.02, erase_max_area = 0.15;
};

/// Bilinear resample of the window [y0, y0+h) x [x0, x0+w) onto the full image size.
inline ImageF crop_resize(const ImageF& in, double y0, double x0, double h, double w) {
  ImageF out(in.height, in.width, in.channels);
  const double sy = h / static_cast<double>(in.height), sx = w / static_cast<double>(in.width);
  for (std::size_t y = 0; y < in.height; ++y) {
    const double fy = std::clamp(y0 + (static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(in.height - 1));
    const std::size_t iy = std::min(static_cast<std::size_t>(fy), in.height - 1);
    const std::size_t iy1 = std::min(iy + 1, in.height - 1);
    const double ty = fy - static_cast<double>(iy);
    for (std::size_t x = 0; x < in.width; ++x) {
      const double fx = std::clamp(x0 + (static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(in.width - 1));
      const std::size_t ix = std::min(static_cast<std::size_t>(fx), in.width - 1);
      const std::size_t ix1 = std::min(ix + 1, in.width - 1);
      const double tx = fx - static_cast<double>(ix);
      for (std::size_t c = 0; c < in.channels; ++c) {
        const double top = (1 - tx) * in.at(iy, ix, c) + tx * in.at(iy, ix1, c);
        const double bot = (1 - tx) * in.at(iy1, ix, c) + tx * in.at(iy1, ix1, c);
        out.at(y, x, c) = static_cast<float>((1 - ty) * top + ty * bot);
      }
    }
  }
  return out;
}

/// Separable Gaussian blur with clamped borders.
inline ImageF gaussian_blur(const ImageF& in, double sigma) {
  if (sigma <= 0.0) return in;
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double s = 0.0;
  for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= s;
  const long h = static_cast<long>(in.height), w = static_cast<long>(in.width);
  ImageF tmp(in.height, in.width, in.channels), out(in.height, in.width, in.channels);
  for (std::size_t c = 0; c < in.channels; ++c) {
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * in.at(y, std::clamp(x + i, 0L, w - 1), c);
        tmp.at(y, x, c) = static_cast<float>(acc);
      }
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(std::clamp(y + i, 0L, h - 1), x, c);
        out.at(y, x, c) = static_cast<float>(acc);
      }
  }
  return out;
}

inline ImageF flip(const ImageF& in, bool horizontal) {
  ImageF out(in.height, in.width, in.channels);
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t y = 0; y < in.height; ++y)
      for (std::size_t x = 0; x < in.width; ++x)
        out.at(y, x, c) = horizontal ? in.at(y, in.width - 1 - x, c) : in.at(in.height - 1 - y, x, c);
  return out;
}

/// Zeroes a rectangle in every channel.
inline ImageF erase(const ImageF& in, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  ImageF out = in;
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t y = y0; y < std::min(in.height, y0 + h); ++y)
      for (std::size_t x = x0; x < std::min(in.width, x0 + w); ++x) out.at(y, x, c) = 0.0f;
  return out;
}

template <class Rng>
ImageF augment(const ImageF& in, const AugmentConfig& cfg, Rng& rng) {
  if (!cfg.enabled) return in;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageF img = in;
  const double H = static_cast<double>(in.height), W = static_cast<double>(in.width);
  if (u(rng) < cfg.p_crop) {
    const double s = cfg.crop_min_scale + (1.0 - cfg.crop_min_scale) * u(rng);
    img = crop_resize(img, u(rng) * (1.0 - s) * H, u(rng) * (1.0 - s) * W, s * H, s * W);
  }
  if (u(rng) < cfg.p_blur) img = gaussian_blur(img, cfg.blur_sigma_min + (cfg.blur_sigma_max - cfg.blur_sigma_min) * u(rng));
  if (u(rng) < cfg.p_hflip) img = flip(img, true);
  if (u(rng) < cfg.p_vflip) img = flip(img, false);
  if (u(rng) < cfg.p_erase) {
    const double area = cfg.erase_min_area + (cfg.erase_max_area - cfg.erase_min_area) * u(rng);
    const double aspect = std::exp((u(rng) - 0.5) * std::log(3.0));
    const auto eh = static_cast<std::size_t>(std::clamp(std::sqrt(area * H * W * aspect), 1.0, H));
    const auto ew = static_cast<std::size_t>(std::clamp(std::sqrt(area * H * W / aspect), 1.0, W));
    const auto y0 = static_cast<std::size_t>(u(rng) * static_cast<double>(in.height - eh + 1));
    const auto x0 = static_cast<std::size_t>(u(rng) * static_cast<double>(in.width - ew + 1));
    img = erase(img, std::min(y0, in.height - eh), std::min(x0, in.width - ew), eh, ew);
  }
  return img;
}

}  // namespace deepglioma::srh
