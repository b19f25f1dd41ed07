#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "deepglioma/heatmap/dense.hpp"
#include "deepglioma/srh/synth.hpp"
#include "support/inference_oracles.hpp"

namespace ad = deepglioma::ad;
namespace hm = deepglioma::heatmap;
namespace srh = deepglioma::srh;
namespace cl = deepglioma::classifier;
using deepglioma::genomics::Subgroup;

namespace {

ad::Array random_preds(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ad::Array a(ad::Shape{rows, cols});
  for (auto& v : a.values()) v = u(rng);
  return a;
}

/// Field with a single covered value per channel at every pixel.
hm::ProbabilityField constant_field(std::size_t h, std::size_t w, std::vector<double> per_channel) {
  hm::ProbabilityField f{h, w, per_channel.size(), {}, std::vector<std::uint32_t>(h * w, 1)};
  for (double v : per_channel) f.values.insert(f.values.end(), h * w, v);
  return f;
}

double value(Subgroup s, double idh, double codel, double atrx) {
  return hm::subgroup_heatmap(constant_field(1, 1, {idh, codel, atrx}), s).values[0];
}

}  // namespace

TEST(DenseGrid, CountsAndCoverage) {
  EXPECT_EQ(hm::dense_grid(500, 500).size(), 9u);
  EXPECT_EQ(hm::dense_grid(300, 300).size(), 1u);
  EXPECT_EQ(hm::dense_grid(1800, 1800).size(), 256u);
  EXPECT_EQ(hm::dense_grid(350, 620).size(), 4u);
  EXPECT_THROW(hm::dense_grid(299, 500), std::invalid_argument);
  EXPECT_THROW(hm::dense_grid(500, 500, 0), std::invalid_argument);

  const auto origins = hm::dense_grid(900, 900);
  const auto f = hm::pool_overlaps(ad::Array(ad::Shape{origins.size(), 1}), origins, 900, 900);
  std::uint32_t most = 0;
  for (auto c : f.count) most = std::max(most, c);
  EXPECT_EQ(most, 9u);
  EXPECT_EQ(f.count[0], 1u);
  EXPECT_EQ(f.count[450 * 900 + 450], 9u);
}

TEST(Pool, SingleAndTwoPatchExamples) {
  ad::Array one(ad::Shape{1, 2}, {0.3, 0.9});
  const auto f1 = hm::pool_overlaps(one, {{0, 0}}, 300, 300);
  EXPECT_DOUBLE_EQ(f1.at(0, 123, 45), 0.3);
  EXPECT_DOUBLE_EQ(f1.at(1, 299, 299), 0.9);

  ad::Array two(ad::Shape{2, 1}, {0.0, 1.0});
  const auto f2 = hm::pool_overlaps(two, {{0, 0}, {0, 100}}, 300, 400);
  EXPECT_DOUBLE_EQ(f2.at(0, 10, 50), 0.0);
  EXPECT_DOUBLE_EQ(f2.at(0, 10, 150), 0.5);
  EXPECT_DOUBLE_EQ(f2.at(0, 10, 350), 1.0);
}

TEST(Pool, UncoveredPixelsAreNaN) {
  ad::Array one(ad::Shape{1, 1}, {0.4});
  const auto f = hm::pool_overlaps(one, {{0, 0}}, 350, 350);
  EXPECT_FALSE(f.covered(320, 10));
  EXPECT_TRUE(std::isnan(f.at(0, 320, 10)));
}

TEST(Pool, MatchesPerPixelOracle) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::size_t> dim(6, 16), st(1, 4);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t size = 5, h = dim(rng), w = dim(rng), stride = st(rng);
    const auto origins = hm::dense_grid(h, w, stride, size);
    const ad::Array preds = random_preds(origins.size(), 3, rng);
    const auto f = hm::pool_overlaps(preds, origins, h, w, size);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const auto o = dgtest::pool_pixel(preds, origins, size, y, x);
        ASSERT_EQ(f.count[y * w + x], o.count);
        for (std::size_t c = 0; c < 3; ++c) {
          if (o.count == 0) {
            ASSERT_TRUE(std::isnan(f.at(c, y, x)));
          } else {
            ASSERT_NEAR(f.at(c, y, x), o.mean[c], 1e-12);
          }
        }
      }
  }
}

TEST(Pool, StrideEqualToSizeIsPiecewiseConstant) {
  std::mt19937_64 rng(22);
  const auto origins = hm::dense_grid(900, 600, 300);
  ASSERT_EQ(origins.size(), 6u);
  const ad::Array preds = random_preds(6, 2, rng);
  const auto f = hm::pool_overlaps(preds, origins, 900, 600);
  for (std::size_t k = 0; k < origins.size(); ++k)
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_EQ(f.at(c, origins[k].y + 7, origins[k].x + 299), preds[k * 2 + c]);
      EXPECT_EQ(f.at(c, origins[k].y + 299, origins[k].x), preds[k * 2 + c]);
    }
}

TEST(Pool, RejectsMismatchedInputs) {
  EXPECT_THROW(hm::pool_overlaps(ad::Array(ad::Shape{2, 3}), {{0, 0}}, 300, 300), std::invalid_argument);
  EXPECT_THROW(hm::pool_overlaps(ad::Array(ad::Shape{1, 3}), {{10, 0}}, 300, 300), std::out_of_range);
}

TEST(SubgroupMap, WorkedExamples) {
  EXPECT_NEAR(value(Subgroup::glioblastoma, 0.2, 0.5, 0.5), 0.8, 1e-12);
  EXPECT_NEAR(value(Subgroup::oligodendroglioma, 0.9, 0.8, 0.1), 0.9, 1e-12);
  EXPECT_EQ(value(Subgroup::astrocytoma, 0.9, 0.8, 0.1), 0.0);
  EXPECT_NEAR(value(Subgroup::astrocytoma, 0.9, 0.2, 0.8), 0.9, 1e-12);
  EXPECT_EQ(value(Subgroup::oligodendroglioma, 0.9, 0.2, 0.8), 0.0);
  // IDH-wildtype pixels carry no IDH-mutant subgroup signal.
  EXPECT_EQ(value(Subgroup::oligodendroglioma, 0.3, 0.9, 0.1), 0.0);
  EXPECT_EQ(value(Subgroup::astrocytoma, 0.3, 0.1, 0.9), 0.0);
}

TEST(SubgroupMap, PixelsExactlyAtPhiBelongToNeitherMask) {
  const hm::HeatmapThresholds t;
  EXPECT_FALSE(hm::oligo_condition(0.9, 0.5, t));
  EXPECT_FALSE(hm::astro_condition(0.9, 0.5, 0.3, t));
  EXPECT_EQ(value(Subgroup::oligodendroglioma, 0.9, 0.5, 0.3), 0.0);
  EXPECT_EQ(value(Subgroup::astrocytoma, 0.9, 0.5, 0.3), 0.0);
  // High ATRX still marks astrocytoma.
  EXPECT_NEAR(value(Subgroup::astrocytoma, 0.9, 0.5, 0.7), 0.9, 1e-12);
}

TEST(SubgroupMap, OverlapResolvedByRatio) {
  const hm::HeatmapThresholds t;
  // Both raw conditions hold when 1p19q > phi and ATRX > pi.
  ASSERT_TRUE(hm::oligo_condition(0.9, 0.9, t));
  ASSERT_TRUE(hm::astro_condition(0.9, 0.9, 0.6, t));
  EXPECT_TRUE(hm::oligo_mask(0.9, 0.9, 0.6, t));
  EXPECT_FALSE(hm::astro_mask(0.9, 0.9, 0.6, t));
  EXPECT_FALSE(hm::oligo_mask(0.9, 0.6, 0.9, t));
  EXPECT_TRUE(hm::astro_mask(0.9, 0.6, 0.9, t));
}

TEST(SubgroupMap, MasksAreDisjointOnGrid) {
  const hm::HeatmapThresholds t;
  std::size_t oligo = 0, astro = 0;
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; j <= 100; ++j)
      for (int k = 0; k <= 100; ++k) {
        const double a = i / 100.0, b = j / 100.0, c = k / 100.0;
        const bool o = hm::oligo_mask(a, b, c, t), s = hm::astro_mask(a, b, c, t);
        ASSERT_FALSE(o && s) << a << " " << b << " " << c;
        oligo += o;
        astro += s;
        // Where only one raw condition holds, the mask follows it unchanged.
        if (hm::oligo_condition(a, b, t) != hm::astro_condition(a, b, c, t)) {
          ASSERT_EQ(o, hm::oligo_condition(a, b, t));
          ASSERT_EQ(s, hm::astro_condition(a, b, c, t));
        }
      }
  EXPECT_GT(oligo, 0u);
  EXPECT_GT(astro, 0u);
}

TEST(SubgroupMap, UncoveredStaysNaNAndTagsParse) {
  ad::Array one(ad::Shape{1, 3}, {0.9, 0.8, 0.1});
  const auto f = hm::pool_overlaps(one, {{0, 0}}, 300, 320);
  const auto h = hm::subgroup_heatmap(f, "oligo");
  EXPECT_NEAR(h.values[0], 0.9, 1e-12);
  EXPECT_TRUE(std::isnan(h.values[310]));
  EXPECT_THROW(hm::subgroup_heatmap(f, "glioma"), std::invalid_argument);
  EXPECT_THROW(hm::subgroup_heatmap(f, Subgroup::astrocytoma, {}, {0, 1, 3}), std::invalid_argument);
}

TEST(Render, ColormapEndpoints) {
  EXPECT_EQ(hm::kColormap[0], (hm::Rgb{0, 0, 255}));
  EXPECT_EQ(hm::kColormap[255], (hm::Rgb{255, 0, 0}));
  EXPECT_EQ(hm::colormap_index(0.0), 0u);
  EXPECT_EQ(hm::colormap_index(1.0), 255u);
  EXPECT_EQ(hm::colormap_index(1.5), 255u);
}

TEST(Render, UnderlayOutsideTumorAndWhereValueIsZero) {
  hm::SubgroupHeatmap h{2, 2, Subgroup::glioblastoma, {}, {1.0, 0.0, 1.0, std::nan("")}};
  srh::Image8 under(2, 2, 1);
  under.data = {10, 20, 30, 40};
  const auto img = hm::render_image(h, under, {1, 1, 0, 1});
  EXPECT_EQ(img.at(0, 0, 0), 255);
  EXPECT_EQ(img.at(0, 0, 1), 0);
  EXPECT_EQ(img.at(0, 0, 2), 0);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(img.at(0, 1, c), 20);
    EXPECT_EQ(img.at(1, 0, c), 30);
    EXPECT_EQ(img.at(1, 1, c), 40);
  }
  EXPECT_THROW(hm::render_image(h, under, {1, 1, 1}), std::invalid_argument);
  EXPECT_THROW(hm::render_image(h, srh::Image8(3, 2, 1), {1, 1, 1, 1}), std::invalid_argument);
}

TEST(Render, AllZeroMapIsPureUnderlay) {
  hm::SubgroupHeatmap h{3, 3, Subgroup::astrocytoma, {}, std::vector<double>(9, 0.0)};
  srh::Image8 under(3, 3, 1);
  for (std::size_t i = 0; i < 9; ++i) under.data[i] = static_cast<std::uint8_t>(i * 20);
  const auto img = hm::render_image(h, under, std::vector<std::uint8_t>(9, 1));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(img.data[c * 9 + i], under.data[i]);
}

TEST(Render, DensePredictionIsDeterministic) {
  srh::SynthSpec spec;
  spec.height = spec.width = 600;
  spec.labels = {{"IDH", deepglioma::genomics::Call::mutant},
                 {"1p19q", deepglioma::genomics::Call::wildtype},
                 {"ATRX", deepglioma::genomics::Call::mutant}};
  const auto slide = srh::synth_slide(spec, 3).slide;
  srh::EncoderConfig ec;
  ec.widths = {4, 8};
  ec.feature_dim = 8;
  srh::PatchEncoder enc(ec);
  auto head = cl::MolecularHead::linear(8, 3, 4);
  const srh::GroundTruthSegmenter seg;
  const auto a = hm::dense_predict(slide, enc, head, seg);
  const auto b = hm::dense_predict(slide, enc, head, seg);
  ASSERT_EQ(a.origins.size(), 16u);
  EXPECT_EQ(a.genes.shape(), (ad::Shape{16, 3}));
  const auto ia = hm::render_subgroup(a, Subgroup::astrocytoma), ib = hm::render_subgroup(b, Subgroup::astrocytoma);
  EXPECT_TRUE(ia == ib);
  EXPECT_EQ(ia.channels, 3u);
  EXPECT_EQ(ia.height, 600u);
}
