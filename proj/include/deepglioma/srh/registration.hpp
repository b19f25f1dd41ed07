#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <memory>
#include <stdexcept>

#include "deepglioma/srh/image.hpp"

namespace deepglioma::srh {

struct Shift {
  long dy = 0, dx = 0;
  friend bool operator==(const Shift&, const Shift&) = default;
};

class DegenerateImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct FftwFree {
  void operator()(fftw_complex* p) const noexcept { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

inline FftwBuffer fftw_buffer(std::size_t n) {
  auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  if (!p) throw std::bad_alloc();
  return FftwBuffer(p);
}

inline void fft2(fftw_complex* data, std::size_t h, std::size_t w, int sign) {
  fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), data, data, sign, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
}

// Mean-removed copy as complex; returns the energy left after removing the mean.
inline double load_centered(const ImageD& img, fftw_complex* out) {
  double mean = 0.0;
  for (double v : img.data) mean += v;
  mean /= static_cast<double>(img.plane());
  double energy = 0.0;
  for (std::size_t i = 0; i < img.plane(); ++i) {
    out[i][0] = img.data[i] - mean;
    out[i][1] = 0.0;
    energy += out[i][0] * out[i][0];
  }
  return energy;
}

inline long wrap_signed(std::size_t idx, std::size_t n) {
  const long i = static_cast<long>(idx), m = static_cast<long>(n);
  return i > m / 2 ? i - m : i;
}

}  // namespace detail

/// Integer translation by phase correlation. Returns (dy, dx) with
/// moving ~= roll(fixed, dy, dx); each component lies in (-n/2, n/2].
inline Shift register_translation(const ImageD& fixed, const ImageD& moving) {
  require_same_geometry(fixed, moving, "register_translation");
  if (fixed.channels != 1 || moving.channels != 1) {
    throw std::invalid_argument("register_translation: single-channel images required");
  }
  const std::size_t h = fixed.height, w = fixed.width, n = h * w;
  if (n == 0) throw std::invalid_argument("register_translation: empty image");

  auto a = detail::fftw_buffer(n), b = detail::fftw_buffer(n);
  const double ea = detail::load_centered(fixed, a.get());
  const double eb = detail::load_centered(moving, b.get());
  if (ea <= 0.0 || eb <= 0.0) throw DegenerateImageError("register_translation: constant image has no unique peak");

  detail::fft2(a.get(), h, w, FFTW_FORWARD);
  detail::fft2(b.get(), h, w, FFTW_FORWARD);
  // Normalised cross-power spectrum M * conj(F).
  for (std::size_t i = 0; i < n; ++i) {
    const std::complex<double> fa(a[i][0], a[i][1]), fb(b[i][0], b[i][1]);
    std::complex<double> r = fb * std::conj(fa);
    const double mag = std::abs(r);
    r = mag > 1e-12 * std::sqrt(ea * eb) ? r / mag : std::complex<double>(0.0, 0.0);
    a[i][0] = r.real();
    a[i][1] = r.imag();
  }
  detail::fft2(a.get(), h, w, FFTW_BACKWARD);

  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (a[i][0] > a[best][0]) best = i;
  return Shift{detail::wrap_signed(best / w, h), detail::wrap_signed(best % w, w)};
}

template <class T>
Shift register_translation(const Image<T>& fixed, const Image<T>& moving) {
  return register_translation(channel_as_double(fixed), channel_as_double(moving));
}

/// Undoes `s` on `moving`, aligning it onto the fixed image.
template <class T>
Image<T> apply_registration(const Image<T>& moving, const Shift& s) {
  return roll(moving, -s.dy, -s.dx);
}

}  // namespace deepglioma::srh
