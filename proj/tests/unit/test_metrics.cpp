#include <gtest/gtest.h>

#include <random>

#include "deepglioma/eval/metrics.hpp"
#include "support/metric_oracles.hpp"

namespace ad = deepglioma::ad;
namespace ev = deepglioma::eval;

namespace {

/// Scores on a coarse grid so ties are common.
void random_instance(std::size_t n, std::mt19937_64& rng, std::vector<double>& s, std::vector<int>& y) {
  std::uniform_int_distribution<int> level(0, 10);
  std::bernoulli_distribution coin(0.4);
  do {
    s.assign(n, 0.0);
    y.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = level(rng) / 10.0;
      y[i] = coin(rng);
    }
  } while (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 0) == 0);
}

ad::Array matrix(const std::vector<std::vector<double>>& rows) {
  ad::Array a(ad::Shape{rows.size(), rows[0].size()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[0].size(); ++j) a[i * rows[0].size() + j] = rows[i][j];
  return a;
}

}  // namespace

TEST(RocAuc, Examples) {
  EXPECT_DOUBLE_EQ(ev::roc_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(ev::roc_auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(ev::roc_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(ev::roc_auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}), 0.75);
}

TEST(RocAuc, Errors) {
  EXPECT_THROW(ev::roc_auc({0.1, 0.2}, {1, 1}), std::invalid_argument);
  EXPECT_THROW(ev::roc_auc({0.1, 0.2}, {0, 0}), std::invalid_argument);
  EXPECT_THROW(ev::roc_auc({0.1}, {0, 1}), std::invalid_argument);
  EXPECT_THROW(ev::roc_auc({0.1, 0.2}, {0, 2}), std::invalid_argument);
}

TEST(RocAuc, MatchesPairwiseOracle) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> size(2, 30);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> s;
    std::vector<int> y;
    random_instance(trial < 100 ? 20 : size(rng), rng, s, y);
    EXPECT_NEAR(ev::roc_auc(s, y), dgtest::auc_pairwise(s, y), 1e-12);
  }
}

TEST(AveragePrecision, ExamplesAndOracle) {
  EXPECT_DOUBLE_EQ(ev::average_precision({0.9, 0.8, 0.2}, {1, 1, 0}), 1.0);
  // Ranking 1, 0, 1: precision 1 at recall 1/2, then 2/3 at recall 1.
  EXPECT_NEAR(ev::average_precision({0.9, 0.8, 0.7}, {1, 0, 1}), 0.5 + 0.5 * 2.0 / 3.0, 1e-15);
  EXPECT_THROW(ev::average_precision({0.9, 0.8}, {0, 0}), std::invalid_argument);
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s;
    std::vector<int> y;
    random_instance(25, rng, s, y);
    EXPECT_NEAR(ev::average_precision(s, y), dgtest::ap_by_thresholds(s, y), 1e-12);
  }
}

TEST(BalancedAccuracy, Examples) {
  EXPECT_DOUBLE_EQ(ev::balanced_accuracy({0.9, 0.1, 0.7, 0.2}, {1, 0, 1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(ev::balanced_accuracy({1, 1, 1, 1}, {1, 0, 1, 0}), 0.5);
  // TP 2, FN 1, TN 3, FP 1: (2/3 + 3/4) / 2.
  EXPECT_NEAR(ev::balanced_accuracy({0.9, 0.6, 0.4, 0.1, 0.2, 0.3, 0.7}, {1, 1, 1, 0, 0, 0, 0}), (2.0 / 3 + 0.75) / 2, 1e-15);
  EXPECT_THROW(ev::balanced_accuracy({0.9, 0.1}, {1, 1}), std::invalid_argument);
}

TEST(BalancedAccuracy, MatchesContingencyArithmetic) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s;
    std::vector<int> y;
    random_instance(15, rng, s, y);
    double tp = 0, tn = 0, p = 0, n = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const bool d = s[i] >= 0.5;
      if (y[i]) p += 1, tp += d;
      else n += 1, tn += !d;
    }
    EXPECT_NEAR(ev::balanced_accuracy(s, y), 0.5 * (tp / p + tn / n), 1e-12);
  }
}

TEST(Multilabel, AllCorrectGivesOnes) {
  const auto r = ev::multilabel_report(matrix({{0.9, 0.1, 0.8}, {0.2, 0.7, 0.1}, {0.6, 0.3, 0.4}}),
                                       matrix({{1, 0, 1}, {0, 1, 0}, {1, 0, 0}}), {"IDH", "1p19q", "ATRX"});
  for (double v : {r.mAcc, r.mAP, r.mAUC, r.SubAcc, r.ebF1, r.micF1}) EXPECT_DOUBLE_EQ(v, 1.0);
  EXPECT_EQ(r.label("ATRX").counts, (ev::Confusion{2, 0, 0, 1}));
}

TEST(Multilabel, OneLabelAlwaysWrong) {
  const auto r = ev::multilabel_report(matrix({{0.9, 0.1, 0.1}, {0.2, 0.7, 0.9}, {0.6, 0.3, 0.8}, {0.1, 0.2, 0.3}}),
                                       matrix({{1, 0, 1}, {0, 1, 0}, {1, 0, 0}, {0, 0, 1}}));
  EXPECT_DOUBLE_EQ(r.SubAcc, 0.0);
  EXPECT_NEAR(r.mAcc, 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(r.labels[2].accuracy, 0.0);
}

TEST(Multilabel, MatchesDefinitionOracle) {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t N = trial < 100 ? 10 : 5 + trial % 25, n = 3;
    std::vector<std::vector<double>> p(N, std::vector<double>(n));
    std::vector<std::vector<int>> y(N, std::vector<int>(n));
    std::vector<std::vector<double>> yd(N, std::vector<double>(n));
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t l = 0; l < n; ++l) {
        p[i][l] = std::round(u(rng) * 20) / 20;
        y[i][l] = coin(rng);
        yd[i][l] = y[i][l];
      }
    const auto r = ev::multilabel_report(matrix(p), matrix(yd));
    const auto o = dgtest::multilabel_oracle(p, y);
    EXPECT_NEAR(r.SubAcc, o.sub_acc, 1e-12);
    EXPECT_NEAR(r.ebF1, o.eb_f1, 1e-12);
    EXPECT_NEAR(r.micF1, o.mic_f1, 1e-12);
    EXPECT_NEAR(r.mAcc, o.m_acc, 1e-12);
    double auc = 0, ap = 0;
    std::size_t na = 0, np = 0;
    for (std::size_t l = 0; l < n; ++l) {
      std::vector<double> s;
      std::vector<int> t;
      for (std::size_t i = 0; i < N; ++i) s.push_back(p[i][l]), t.push_back(y[i][l]);
      const auto pos = std::count(t.begin(), t.end(), 1);
      if (pos > 0) ap += dgtest::ap_by_thresholds(s, t), ++np;
      if (pos > 0 && pos < static_cast<long>(N)) auc += dgtest::auc_pairwise(s, t), ++na;
    }
    if (na) EXPECT_NEAR(r.mAUC, auc / na, 1e-12);
    if (np) EXPECT_NEAR(r.mAP, ap / np, 1e-12);
    double min_acc = 1.0;
    for (const auto& l : r.labels) min_acc = std::min(min_acc, l.accuracy);
    EXPECT_LE(r.SubAcc, min_acc + 1e-15);
    std::size_t total = 0;
    for (const auto& l : r.labels) total += l.counts.total();
    EXPECT_EQ(total, N * n);
  }
}

TEST(Multilabel, SinglePositiveCasesMakeMicroAndExampleF1Agree) {
  std::mt19937_64 rng(35);
  std::uniform_int_distribution<int> pick(0, 3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> p(12, std::vector<double>(4, 0.1)), y(12, std::vector<double>(4, 0.0));
    for (std::size_t i = 0; i < 12; ++i) {
      y[i][pick(rng)] = 1.0;
      p[i][pick(rng)] = 0.9;
    }
    const auto r = ev::multilabel_report(matrix(p), matrix(y));
    EXPECT_NEAR(r.micF1, r.ebF1, 1e-12);
  }
}

TEST(Multilabel, ErrorsAndUndefinedMetrics) {
  EXPECT_THROW(ev::multilabel_report(ad::Array(ad::Shape{2, 3}), ad::Array(ad::Shape{3, 2})), std::invalid_argument);
  EXPECT_THROW(ev::multilabel_report(matrix({{0.5}}), matrix({{0.5}})), std::invalid_argument);
  EXPECT_THROW(ev::multilabel_report(matrix({{0.5, 0.5}}), matrix({{1, 0}}), {"a"}), std::invalid_argument);
  const auto r = ev::multilabel_report(matrix({{0.9, 0.2}, {0.3, 0.1}}), matrix({{1, 0}, {0, 0}}), {"a", "b"});
  EXPECT_FALSE(r.label("b").auroc.has_value());
  EXPECT_FALSE(r.label("b").average_precision.has_value());
  EXPECT_DOUBLE_EQ(r.mAUC, 1.0);
  EXPECT_DOUBLE_EQ(r.label("b").f1, 1.0);
  const nlohmann::json j = r;
  EXPECT_TRUE(j.at("labels").at(1).at("auroc").is_null());
  EXPECT_THROW(r.label("c"), std::out_of_range);
}
