#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepglioma::srh {

/// Planar image: data[(c * height + y) * width + x].
template <class T>
struct Image {
  std::size_t height = 0, width = 0, channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c = 1, T fill = T{})
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  std::size_t plane() const noexcept { return height * width; }
  std::size_t size() const noexcept { return data.size(); }
  bool empty() const noexcept { return data.empty(); }

  T& at(std::size_t y, std::size_t x, std::size_t c = 0) { return data[(c * height + y) * width + x]; }
  const T& at(std::size_t y, std::size_t x, std::size_t c = 0) const { return data[(c * height + y) * width + x]; }

  T* channel(std::size_t c) { return data.data() + c * plane(); }
  const T* channel(std::size_t c) const { return data.data() + c * plane(); }

  bool same_geometry(std::size_t h, std::size_t w) const { return height == h && width == w; }

  friend bool operator==(const Image&, const Image&) = default;
};

using Image16 = Image<std::uint16_t>;
using Image8 = Image<std::uint8_t>;
using ImageF = Image<float>;
using ImageD = Image<double>;

template <class A, class B>
void require_same_geometry(const Image<A>& a, const Image<B>& b, const char* op) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument(std::string(op) + ": image sizes differ (" + std::to_string(a.height) + "x" +
                                std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                std::to_string(b.width) + ")");
  }
}

/// Copies channel `c` into a single-channel double image.
template <class T>
ImageD channel_as_double(const Image<T>& img, std::size_t c = 0) {
  ImageD out(img.height, img.width, 1);
  const T* src = img.channel(c);
  for (std::size_t i = 0; i < img.plane(); ++i) out.data[i] = static_cast<double>(src[i]);
  return out;
}

/// Circular shift: out[y][x] = in[y - dy][x - dx] (indices modulo size).
template <class T>
Image<T> roll(const Image<T>& in, long dy, long dx) {
  Image<T> out(in.height, in.width, in.channels);
  const long h = static_cast<long>(in.height), w = static_cast<long>(in.width);
  for (std::size_t c = 0; c < in.channels; ++c)
    for (long y = 0; y < h; ++y) {
      const long sy = ((y - dy) % h + h) % h;
      for (long x = 0; x < w; ++x) {
        const long sx = ((x - dx) % w + w) % w;
        out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) =
            in.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), c);
      }
    }
  return out;
}

/// Copies the [y0, y0+h) x [x0, x0+w) window of every channel.
template <class T>
Image<T> crop(const Image<T>& in, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  if (y0 + h > in.height || x0 + w > in.width) throw std::out_of_range("crop: window outside image");
  Image<T> out(h, w, in.channels);
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(y, x, c) = in.at(y0 + y, x0 + x, c);
  return out;
}

/// Mean over non-overlapping `factor` x `factor` blocks; the remainder is dropped.
template <class T>
Image<T> average_pool(const Image<T>& in, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("average_pool: factor must be positive");
  if (factor == 1) return in;
  const std::size_t h = in.height / factor, w = in.width / factor;
  Image<T> out(h, w, in.channels);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (std::size_t dy = 0; dy < factor; ++dy)
          for (std::size_t dx = 0; dx < factor; ++dx) s += static_cast<double>(in.at(y * factor + dy, x * factor + dx, c));
        out.at(y, x, c) = static_cast<T>(s * inv);
      }
  return out;
}

}  // namespace deepglioma::srh
