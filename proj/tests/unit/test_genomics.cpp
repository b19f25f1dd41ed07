#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>

#include "deepglioma/genomics/cohort.hpp"
#include "deepglioma/genomics/glove.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace ad = deepglioma::ad;
namespace gx = deepglioma::genomics;
using gx::Call;

namespace {

gx::MutationProfile profile(std::string id, std::initializer_list<std::pair<const std::string, Call>> calls) {
  return gx::MutationProfile{std::move(id), std::map<std::string, Call>(calls)};
}

}  // namespace

TEST(GenePanel, TokenLayout) {
  const auto panel = gx::GenePanel::glioma_default();
  EXPECT_EQ(panel.token_count(), 6u);
  EXPECT_EQ(panel.token(0, Call::mutant), 0u);
  EXPECT_EQ(panel.token(0, Call::wildtype), 1u);
  EXPECT_EQ(panel.token(2, Call::wildtype), 5u);
  EXPECT_EQ(panel.token_name(3), "1p19q:wildtype");
  EXPECT_THROW(gx::GenePanel({"IDH", "IDH"}), std::invalid_argument);
  EXPECT_THROW(panel.index_of("TP53"), std::invalid_argument);
}

TEST(MutationCsv, ReadsAndRoundTrips) {
  std::istringstream in("patient_id,gene,status\nA,IDH,mutant\nA,ATRX,wildtype\nB,IDH,wildtype\n");
  const auto ps = gx::read_mutation_csv(in);
  ASSERT_EQ(ps.size(), 2u);
  EXPECT_EQ(ps[0].call("IDH"), Call::mutant);
  EXPECT_EQ(ps[0].call("1p19q"), Call::unknown);
  std::ostringstream out;
  gx::write_mutation_csv(out, ps);
  std::istringstream back(out.str());
  const auto again = gx::read_mutation_csv(back);
  ASSERT_EQ(again.size(), 2u);
  EXPECT_EQ(again[1].calls, ps[1].calls);
}

TEST(MutationCsv, RejectsBadInput) {
  std::istringstream no_header("A,IDH,mutant\n");
  EXPECT_THROW(gx::read_mutation_csv(no_header), std::runtime_error);
  std::istringstream bad_status("patient_id,gene,status\nA,IDH,unknown\n");
  EXPECT_THROW(gx::read_mutation_csv(bad_status), std::runtime_error);
  std::istringstream conflict("patient_id,gene,status\nA,IDH,mutant\nA,IDH,wildtype\n");
  EXPECT_THROW(gx::read_mutation_csv(conflict), std::runtime_error);
}

TEST(Cooccurrence, TwoPatientExample) {
  const auto panel = gx::GenePanel::glioma_default();
  const std::vector ps{profile("P1", {{"IDH", Call::mutant}, {"ATRX", Call::mutant}}),
                       profile("P2", {{"IDH", Call::wildtype}, {"ATRX", Call::wildtype}})};
  const auto x = gx::build_cooccurrence(ps, panel);
  const auto idh_m = panel.token(0, Call::mutant), idh_w = panel.token(0, Call::wildtype);
  const auto atrx_m = panel.token(2, Call::mutant), atrx_w = panel.token(2, Call::wildtype);
  EXPECT_EQ(x(idh_m, atrx_m), 1);
  EXPECT_EQ(x(idh_w, atrx_w), 1);
  EXPECT_EQ(x(idh_m, atrx_w), 0);
}

TEST(Cooccurrence, EmptyCallsGiveZeroMatrixAndDuplicatesDouble) {
  const auto panel = gx::GenePanel::glioma_default();
  EXPECT_TRUE(gx::build_cooccurrence({profile("E", {})}, panel).all_zero());
  std::mt19937_64 rng(3);
  auto ps = dgtest::random_profiles(panel, 10, rng);
  const auto once = gx::build_cooccurrence(ps, panel);
  auto doubled = ps;
  doubled.insert(doubled.end(), ps.begin(), ps.end());
  const auto twice = gx::build_cooccurrence(doubled, panel);
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t b = 0; b < 6; ++b) EXPECT_EQ(twice(a, b), 2 * once(a, b));
}

TEST(Cooccurrence, Errors) {
  const auto panel = gx::GenePanel::glioma_default();
  EXPECT_THROW(gx::build_cooccurrence({}, panel), std::invalid_argument);
  EXPECT_THROW(gx::build_cooccurrence({profile("X", {{"TP53", Call::mutant}})}, panel), std::invalid_argument);
}

TEST(Cooccurrence, MatchesHandCountAndStructuralInvariants) {
  const gx::GenePanel panel({"A", "B", "C", "D"});
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ps = dgtest::random_profiles(panel, 1 + trial % 17, rng);
    const auto x = gx::build_cooccurrence(ps, panel);
    for (std::size_t a = 0; a < 8; ++a) {
      EXPECT_EQ(x(a, a), 0);
      if (a % 2 == 0) {
        EXPECT_EQ(x(a, a + 1), 0);
      }
      for (std::size_t b = 0; b < 8; ++b) {
        EXPECT_EQ(x(a, b), x(b, a));
        ASSERT_EQ(x(a, b), dgtest::hand_count(ps, panel, a, b)) << "trial " << trial;
      }
    }
  }
}

TEST(GloveWeight, Examples) {
  EXPECT_DOUBLE_EQ(gx::glove_weight(8, 8), 1.0);
  EXPECT_DOUBLE_EQ(gx::glove_weight(0, 8), 0.0);
  EXPECT_NEAR(gx::glove_weight(2, 8, 0.75), 0.3535533905932738, 1e-12);
  EXPECT_DOUBLE_EQ(gx::glove_weight(20, 8), 1.0);
  EXPECT_THROW(gx::glove_weight(1, 0), std::invalid_argument);
  EXPECT_THROW(gx::glove_weight(-1, 1), std::invalid_argument);
}

TEST(GloveLoss, ExactFactorisationGivesZero) {
  // Two tokens with X = 4: place e_0 . e_1 = log 4.
  gx::CooccurrenceMatrix x(2);
  x.add_pair(0, 1, 4);
  ad::Array e = ad::Array::matrix(2, 1, {std::sqrt(std::log(4.0)), std::sqrt(std::log(4.0))});
  EXPECT_NEAR(gx::glove_loss(e, x), 0.0, 1e-14);
}

TEST(GloveLoss, SinglePairAtEulerNumber) {
  // Integer counts cannot equal e, so the pair is built directly.
  const double x = std::numbers::e, x_max = 4.0;
  gx::CountedPairs pairs{{0}, {1}, {gx::glove_weight(x, x_max)}, {std::log(x)}};
  ad::Tape t;
  ad::Var e = t.constant(ad::Array::matrix(2, 2, {1.0, 0.0, 0.0, 1.0}));
  EXPECT_NEAR(gx::glove_loss(e, pairs, {0}).value().item(), std::pow(x / x_max, 0.75), 1e-14);
}

TEST(GloveLoss, MatchesBruteForceDoubleLoop) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> count(0, 9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 7;
    gx::CooccurrenceMatrix x(n);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) x.add_pair(a, b, count(rng));
    if (x.all_zero()) x.add_pair(0, 1, 1);
    const ad::Array e = ad::random_normal({n, 3}, 0.7, rng);
    EXPECT_NEAR(gx::glove_loss(e, x), dgtest::brute_force_glove(e, x, 0.75), 1e-10);
  }
}

TEST(GloveLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  gx::CooccurrenceMatrix x(6);
  std::uniform_int_distribution<int> count(0, 6);
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t b = a + 1; b < 6; ++b) x.add_pair(a, b, count(rng));
  ad::Parameter e("e", ad::random_normal({6, 4}, 0.5, rng));
  const auto r = dgtest::check_gradients([&](ad::Tape& t) { return gx::glove_loss(t.param(e), x); }, {&e});
  EXPECT_LE(r.max_rel_error, 1e-5);
}

TEST(TrainGlove, ImprovesOnAnyNonzeroMatrix) {
  const auto panel = gx::GenePanel::glioma_default();
  const auto x = gx::build_cooccurrence(gx::profiles_of(gx::synth_cohort(120, 1)), panel);
  gx::GloveTrainConfig cfg;
  cfg.epochs = 50;
  const auto r = gx::train_gene_embedding(x, panel, cfg);
  EXPECT_LT(r.final_loss, r.initial_loss);
  EXPECT_TRUE(r.embedding.vectors.all_finite());
  EXPECT_EQ(r.embedding.vectors.shape(), (ad::Shape{6, 32}));
}

TEST(TrainGlove, ThreeTokenToyIsFactorised) {
  gx::CooccurrenceMatrix x(3);
  x.add_pair(0, 1, 3);
  x.add_pair(0, 2, 5);
  x.add_pair(1, 2, 2);
  gx::GloveTrainConfig cfg;
  cfg.dim = 3;
  cfg.epochs = 4000;
  cfg.lr = 1e-2;
  cfg.init_scale = 0.5;
  double before = 0.0, after = 0.0;
  gx::train_glove(x, cfg, &before, &after);
  EXPECT_LT(after, 1e-4) << "initial loss " << before;
}

TEST(TrainGlove, SeedDeterministic) {
  const auto panel = gx::GenePanel::glioma_default();
  const auto x = gx::build_cooccurrence(gx::profiles_of(gx::synth_cohort(60, 2)), panel);
  gx::GloveTrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 42;
  const auto a = gx::train_gene_embedding(x, panel, cfg);
  const auto b = gx::train_gene_embedding(x, panel, cfg);
  EXPECT_EQ(a.embedding.vectors, b.embedding.vectors);
  cfg.seed = 43;
  EXPECT_FALSE(gx::train_gene_embedding(x, panel, cfg).embedding.vectors == a.embedding.vectors);
}

TEST(TrainGlove, Errors) {
  gx::GloveTrainConfig cfg;
  EXPECT_THROW(gx::train_glove(gx::CooccurrenceMatrix(4), cfg), std::invalid_argument);
  gx::CooccurrenceMatrix x(4);
  x.add_pair(0, 2);
  EXPECT_THROW(gx::train_gene_embedding(x, gx::GenePanel::glioma_default(), cfg), std::invalid_argument);
}

TEST(SubgroupCosine, IdenticalAndOrthogonalVectors) {
  const std::vector<gx::TokenGroup> groups{{"a", {0, 1}}, {"b", {2, 3}}};
  const auto same = gx::subgroup_cosine_report(ad::Array::matrix(4, 2, {1, 2, 1, 2, 1, 2, 1, 2}), groups);
  for (const auto& g : same) {
    EXPECT_NEAR(g.intra, 1.0, 1e-12);
    EXPECT_NEAR(g.inter, 1.0, 1e-12);
  }
  ad::Array eye(ad::Shape{4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
  for (const auto& g : gx::subgroup_cosine_report(eye, groups)) {
    EXPECT_DOUBLE_EQ(g.intra, 0.0);
    EXPECT_DOUBLE_EQ(g.inter, 0.0);
  }
  EXPECT_THROW(gx::subgroup_cosine_report(eye, {{"tiny", {0}}}), std::invalid_argument);
}

TEST(SubgroupCosine, PlantedBlocksSeparate) {
  const auto block = dgtest::block_cohort(200, 0.05, 7);
  const auto x = gx::build_cooccurrence(block.profiles, block.panel);
  gx::GloveTrainConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 400;
  const auto r = gx::train_gene_embedding(x, block.panel, cfg);
  for (const auto& g : gx::subgroup_cosine_report(r.embedding.vectors, block.groups)) {
    EXPECT_GT(g.intra, g.inter) << g.name;
  }
  const auto nn = gx::nearest_neighbors(r.embedding.vectors);
  for (std::size_t t = 0; t < nn.size(); ++t) {
    EXPECT_EQ(dgtest::block_of(block.groups, t), dgtest::block_of(block.groups, nn[t])) << "token " << t;
  }
}

TEST(Cohort, AllocationFollowsPriors) {
  const auto c = gx::allocate_subgroups(60, gx::CohortPriors{}.subgroup_share);
  EXPECT_EQ(c[0] + c[1] + c[2], 60u);
  EXPECT_EQ(c[0], 37u);
  EXPECT_EQ(c[1], 10u);
  EXPECT_EQ(c[2], 13u);
  const auto big = gx::allocate_subgroups(373, gx::CohortPriors{}.subgroup_share);
  EXPECT_EQ(big[0], 231u);
  EXPECT_EQ(big[1], 64u);
  EXPECT_EQ(big[2], 78u);
}

TEST(Cohort, CallsAreConsistentWithSubgroup) {
  for (const auto& m : gx::synth_cohort(200, 4)) {
    const bool idh = m.profile.call("IDH") == Call::mutant;
    const bool codel = m.profile.call("1p19q") == Call::mutant;
    switch (m.subgroup) {
      case gx::Subgroup::glioblastoma: EXPECT_FALSE(idh); break;
      case gx::Subgroup::oligodendroglioma: EXPECT_TRUE(idh && codel); break;
      case gx::Subgroup::astrocytoma: EXPECT_TRUE(idh && !codel); break;
    }
  }
  EXPECT_EQ(gx::parse_subgroup("oligo"), gx::Subgroup::oligodendroglioma);
  EXPECT_THROW(gx::parse_subgroup("ependymoma"), std::invalid_argument);
}

TEST(EmbeddingIo, RoundTripWithTokenIndex) {
  const auto panel = gx::GenePanel::glioma_default();
  std::mt19937_64 rng(1);
  gx::GeneEmbedding e{panel, ad::random_normal({6, 5}, 1.0, rng)};
  const auto dir = std::filesystem::temp_directory_path() / "dg_embed_io";
  std::filesystem::create_directories(dir);
  gx::save_embedding(dir / "e.arr", e);
  const auto back = gx::load_embedding(dir / "e.arr");
  EXPECT_EQ(back.vectors, e.vectors);
  EXPECT_EQ(back.panel, panel);
  const auto idx = nlohmann::json::parse(ad::read_file_bytes(dir / "e.tokens.json"));
  EXPECT_EQ(idx["tokens"][1]["name"], "IDH:wildtype");
  EXPECT_EQ(e.label_matrix().at(2, 4), e.vectors.at(4, 4));
  std::filesystem::remove_all(dir);
}
