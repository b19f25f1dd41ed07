#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepglioma/core/layers.hpp"
#include "deepglioma/srh/image.hpp"
#include "deepglioma/srh/slide.hpp"

namespace deepglioma::srh {

struct EncoderConfig {
  std::vector<std::size_t> widths{8, 16, 32, 64, 64, 128};
  std::size_t feature_dim = 128;  // a linear map is appended when it differs from widths.back()
  std::size_t input_pool = 4;     // 300x300 patches are average-pooled by this factor
  std::uint64_t seed = 0;
  // Per-channel standardisation applied before the first convolution.
  std::vector<double> input_mean{0.0, 0.0, 0.0};
  std::vector<double> input_std{1.0, 1.0, 1.0};

  std::size_t input_extent() const { return kPatchSize / input_pool; }

  void validate() const {
    if (feature_dim == 0) throw std::invalid_argument("EncoderConfig: feature_dim must be positive");
    if (widths.empty()) throw std::invalid_argument("EncoderConfig: at least one convolution layer required");
    if (input_pool == 0 || kPatchSize % input_pool != 0) {
      throw std::invalid_argument("EncoderConfig: input_pool must divide 300");
    }
    if (input_mean.size() != 3 || input_std.size() != 3) throw std::invalid_argument("EncoderConfig: three input channels expected");
    for (double s : input_std)
      if (!(s > 0.0)) throw std::invalid_argument("EncoderConfig: input_std must be positive");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"widths", c.widths},         {"feature_dim", c.feature_dim}, {"input_pool", c.input_pool},
       {"seed", c.seed},             {"input_mean", c.input_mean},   {"input_std", c.input_std}};
}
inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.widths = j.at("widths").get<std::vector<std::size_t>>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.input_pool = j.at("input_pool").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.input_mean = j.value("input_mean", std::vector<double>{0.0, 0.0, 0.0});
  c.input_std = j.value("input_std", std::vector<double>{1.0, 1.0, 1.0});
}

/// Per-channel mean and standard deviation over pooled inputs laid out [3, e, e].
inline void fit_input_normalization(EncoderConfig& cfg, const std::vector<const float*>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("fit_input_normalization: no inputs");
  const std::size_t e = cfg.input_extent(), plane = e * e;
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0, s2 = 0.0;
    for (const float* x : inputs)
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = x[c * plane + k];
        s += v;
        s2 += v * v;
      }
    const double n = static_cast<double>(inputs.size() * plane);
    cfg.input_mean[c] = s / n;
    cfg.input_std[c] = std::max(std::sqrt(std::max(s2 / n - cfg.input_mean[c] * cfg.input_mean[c], 0.0)), 1e-6);
  }
}

/// Encoder input for one patch: [3, e, e] doubles, e = 300 / input_pool.
inline std::vector<float> encoder_input(const ImageF& patch, const EncoderConfig& cfg) {
  if (patch.height != kPatchSize || patch.width != kPatchSize || patch.channels != 3) {
    throw std::invalid_argument("encoder_input: expected a 300x300x3 patch");
  }
  return average_pool(patch, cfg.input_pool).data;
}

/// Stride-2 3x3 convolutions with ReLU, global average pooling and L2 normalisation.
class PatchEncoder {
 public:
  explicit PatchEncoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    ad::Rng rng(cfg_.seed);
    std::size_t in = 3;
    for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
      convs_.emplace_back("encoder.conv" + std::to_string(i), in, cfg_.widths[i], ad::ConvGeometry{}, rng);
      in = cfg_.widths[i];
    }
    if (in != cfg_.feature_dim) proj_.emplace("encoder.proj", in, cfg_.feature_dim, rng);
  }

  const EncoderConfig& config() const noexcept { return cfg_; }
  std::size_t feature_dim() const noexcept { return cfg_.feature_dim; }

  /// x: [N, 3, e, e] -> unit-norm rows [N, d].
  ad::Var operator()(ad::Tape& t, ad::Var x) {
    const std::size_t e = cfg_.input_extent();
    if (x.shape().size() != 4 || x.shape()[1] != 3 || x.shape()[2] != e || x.shape()[3] != e) {
      throw std::invalid_argument("PatchEncoder: expected input [N, 3, " + std::to_string(e) + ", " +
                                  std::to_string(e) + "], got " + ad::shape_string(x.shape()));
    }
    std::vector<double> scale(3), shift(3);
    for (std::size_t c = 0; c < 3; ++c) {
      scale[c] = 1.0 / cfg_.input_std[c];
      shift[c] = -cfg_.input_mean[c] / cfg_.input_std[c];
    }
    ad::Var h = ad::channel_affine(x, scale, shift);
    for (auto& c : convs_) h = ad::relu(c(t, h));
    h = ad::global_avg_pool(h);
    if (proj_) h = (*proj_)(t, h);
    return ad::l2_normalize_rows(h);
  }

  /// Inference on already pooled inputs laid out contiguously, in chunks.
  ad::Array encode(const std::vector<const float*>& inputs, std::size_t chunk = 64) {
    const std::size_t e = cfg_.input_extent(), per = 3 * e * e;
    ad::Array out(ad::Shape{inputs.size(), cfg_.feature_dim});
    for (std::size_t start = 0; start < inputs.size(); start += chunk) {
      const std::size_t m = std::min(chunk, inputs.size() - start);
      ad::Array batch(ad::Shape{m, 3, e, e});
      for (std::size_t i = 0; i < m; ++i)
        std::copy(inputs[start + i], inputs[start + i] + per, batch.data() + i * per);
      ad::Tape t;
      const ad::Array z = (*this)(t, t.constant(std::move(batch))).value();
      std::copy(z.data(), z.data() + z.size(), out.data() + start * cfg_.feature_dim);
    }
    return out;
  }

  /// Single 300x300x3 patch -> unit feature vector.
  ad::Array encode_patch(const ImageF& patch) {
    const auto in = encoder_input(patch, cfg_);
    return encode({in.data()}).reshaped({cfg_.feature_dim});
  }

  std::vector<ad::Parameter*> parameters() {
    std::vector<ad::Parameter*> ps;
    for (auto& c : convs_)
      for (auto* p : c.parameters()) ps.push_back(p);
    if (proj_)
      for (auto* p : proj_->parameters()) ps.push_back(p);
    return ps;
  }

 private:
  EncoderConfig cfg_;
  std::vector<ad::Conv2d> convs_;
  std::optional<ad::Linear> proj_;
};

inline void save_encoder(const std::filesystem::path& path, PatchEncoder& enc, nlohmann::json meta = {}) {
  if (!meta.is_object()) meta = nlohmann::json::object();
  meta["encoder"] = enc.config();
  ad::save_arrays(path, ad::bundle_parameters(enc.parameters(), meta));
}

inline PatchEncoder load_encoder(const std::filesystem::path& path) {
  const auto b = ad::load_arrays(path);
  PatchEncoder enc(b.meta.at("encoder").get<EncoderConfig>());
  ad::restore_parameters(b, enc.parameters());
  return enc;
}

}  // namespace deepglioma::srh
