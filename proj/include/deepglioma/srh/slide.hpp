#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepglioma/core/array_io.hpp"
#include "deepglioma/genomics/panel.hpp"
#include "deepglioma/srh/png_io.hpp"
#include "deepglioma/srh/registration.hpp"

namespace deepglioma::srh {

inline constexpr std::size_t kPatchSize = 300;
inline constexpr double kIntensityScale = 1.0 / 65535.0;

/// Per-pixel tissue class in the ground-truth region map.
enum class Tissue : std::uint8_t { nondiagnostic = 0, normal = 1, tumor = 2 };

/// Two-channel acquisition: CH2 (2845 cm^-1) and CH3 (2930 cm^-1).
struct WholeSlide {
  std::string slide_id;
  std::string patient_id;
  Image16 ch2, ch3;
  Image8 regions;  // optional ground truth, one Tissue value per pixel
  std::map<std::string, genomics::Call> labels;

  std::size_t height() const { return ch2.height; }
  std::size_t width() const { return ch2.width; }

  void validate() const {
    require_same_geometry(ch2, ch3, "WholeSlide");
    if (ch2.channels != 1 || ch3.channels != 1) throw std::invalid_argument("WholeSlide: channels must be single-plane");
    if (!regions.empty()) require_same_geometry(ch2, regions, "WholeSlide regions");
  }
};

/// Estimates the CH2 offset relative to CH3 and rolls CH2 back into place.
inline Shift register_channels(WholeSlide& slide) {
  slide.validate();
  const Shift s = register_translation(slide.ch3, slide.ch2);
  slide.ch2 = apply_registration(slide.ch2, s);
  return s;
}

/// Planes: CH2, CH3, max(CH3 - CH2, 0), in raw 16-bit units.
inline ImageF subtract_channel(const WholeSlide& slide) {
  slide.validate();
  ImageF out(slide.height(), slide.width(), 3);
  const std::size_t n = out.plane();
  float* c2 = out.channel(0);
  float* c3 = out.channel(1);
  float* red = out.channel(2);
  for (std::size_t i = 0; i < n; ++i) {
    c2[i] = slide.ch2.data[i];
    c3[i] = slide.ch3.data[i];
    red[i] = std::max(c3[i] - c2[i], 0.0f);
  }
  return out;
}

/// 300x300x3 tile scaled to [0, 1], with its raster position.
struct Patch {
  std::string slide_id;
  std::size_t row = 0, col = 0;  // grid coordinates
  ImageF pixels;
  std::map<std::string, genomics::Call> labels;

  std::size_t y0() const { return row * kPatchSize; }
  std::size_t x0() const { return col * kPatchSize; }
};

struct PatchGrid {
  std::size_t rows = 0, cols = 0;
  std::size_t count() const { return rows * cols; }
};

inline PatchGrid patch_grid(std::size_t height, std::size_t width) {
  if (height < kPatchSize || width < kPatchSize) {
    throw std::invalid_argument("slide " + std::to_string(height) + "x" + std::to_string(width) +
                                " is smaller than one 300x300 patch");
  }
  return {height / kPatchSize, width / kPatchSize};
}

/// Non-overlapping raster tiling of a subtracted three-channel image.
inline std::vector<Patch> extract_patches(const ImageF& three, const std::string& slide_id,
                                          const std::map<std::string, genomics::Call>& labels = {}) {
  if (three.channels != 3) throw std::invalid_argument("extract_patches: expected a three-channel image");
  const PatchGrid g = patch_grid(three.height, three.width);
  std::vector<Patch> out;
  out.reserve(g.count());
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < g.cols; ++c) {
      Patch p{slide_id, r, c, crop(three, r * kPatchSize, c * kPatchSize, kPatchSize, kPatchSize), labels};
      for (auto& v : p.pixels.data) v *= static_cast<float>(kIntensityScale);
      out.push_back(std::move(p));
    }
  return out;
}

inline std::vector<Patch> extract_patches(const WholeSlide& slide) {
  patch_grid(slide.height(), slide.width());
  return extract_patches(subtract_channel(slide), slide.slide_id, slide.labels);
}

/// Fraction of each tissue class inside a window of the region map.
inline std::array<double, 3> tissue_fractions(const Image8& regions, std::size_t y0, std::size_t x0, std::size_t h,
                                              std::size_t w) {
  std::array<double, 3> f{};
  for (std::size_t y = y0; y < y0 + h; ++y)
    for (std::size_t x = x0; x < x0 + w; ++x) {
      const auto t = regions.at(y, x);
      if (t > 2) throw std::runtime_error("region map holds an unknown tissue code");
      f[t] += 1.0;
    }
  for (auto& v : f) v /= static_cast<double>(h * w);
  return f;
}

// ---------------------------------------------------------------------------
// Storage: <dir>/<slide_id>.ch2.png, .ch3.png, .regions.png and .json

inline nlohmann::json slide_sidecar(const WholeSlide& s) {
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& [g, c] : s.labels) labels[g] = genomics::to_string(c);
  return {{"slide_id", s.slide_id},
          {"patient_id", s.patient_id},
          {"height", s.height()},
          {"width", s.width()},
          {"labels", labels},
          {"channels", {{"ch2", s.slide_id + ".ch2.png"}, {"ch3", s.slide_id + ".ch3.png"}}},
          {"regions", s.regions.empty() ? nlohmann::json(nullptr) : nlohmann::json(s.slide_id + ".regions.png")}};
}

inline void save_slide(const std::filesystem::path& dir, const WholeSlide& s, nlohmann::json extra = {}) {
  s.validate();
  std::filesystem::create_directories(dir);
  write_png(dir / (s.slide_id + ".ch2.png"), s.ch2);
  write_png(dir / (s.slide_id + ".ch3.png"), s.ch3);
  if (!s.regions.empty()) write_png(dir / (s.slide_id + ".regions.png"), s.regions);
  nlohmann::json side = slide_sidecar(s);
  if (extra.is_object()) side["synthetic"] = std::move(extra);
  ad::write_file_bytes(dir / (s.slide_id + ".json"), side.dump(2) + "\n");
}

/// `sidecar` is the slide's .json file; images are resolved next to it.
inline WholeSlide load_slide(const std::filesystem::path& sidecar) {
  const auto side = nlohmann::json::parse(ad::read_file_bytes(sidecar));
  const auto dir = sidecar.parent_path();
  WholeSlide s;
  s.slide_id = side.at("slide_id").get<std::string>();
  s.patient_id = side.at("patient_id").get<std::string>();
  for (const auto& [g, c] : side.at("labels").items()) s.labels[g] = genomics::parse_call(c.get<std::string>());
  s.ch2 = read_png16(dir / side.at("channels").at("ch2").get<std::string>());
  s.ch3 = read_png16(dir / side.at("channels").at("ch3").get<std::string>());
  if (side.contains("regions") && side["regions"].is_string()) {
    s.regions = read_png8(dir / side["regions"].get<std::string>());
  }
  s.validate();
  return s;
}

}  // namespace deepglioma::srh
