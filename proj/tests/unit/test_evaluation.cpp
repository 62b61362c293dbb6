#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "updp/dataset.hpp"
#include "updp/evaluation.hpp"

using namespace updp;

namespace {

std::vector<std::int32_t> labels_from_counts(const std::vector<std::size_t>& counts) {
  std::vector<std::int32_t> out;
  for (std::size_t c = 0; c < counts.size(); ++c)
    out.insert(out.end(), counts[c], static_cast<std::int32_t>(c));
  return out;
}

EmbeddingDataset three_class() {
  SynthConfig s;
  s.num_classes = 3;
  s.per_class = 40;
  s.dim = 8;
  s.sigma = 0.3;
  s.subclusters = 1;
  s.seed = 12;
  return synth_generate(s);
}

// Two instances per class, the first of each class block.
std::vector<std::size_t> two_per_class(const EmbeddingDataset& ds) {
  std::vector<std::size_t> idx;
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    idx.push_back(c * ds.count / ds.num_classes);
    idx.push_back(c * ds.count / ds.num_classes + 1);
  }
  return idx;
}

DenseMatrix gather(const DenseMatrix& x, const std::vector<std::size_t>& idx) {
  DenseMatrix out(idx.size(), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy(x.row(idx[r]).begin(), x.row(idx[r]).end(), out.row(r).begin());
  return out;
}

}  // namespace

TEST(Knn, IdenticalPointTakesItsLabel) {
  const DenseMatrix lab = DenseMatrix::from_rows({{1, 0}, {0, 1}, {-1, 0.2}});
  const std::vector<std::int32_t> y{0, 1, 2};
  const DenseMatrix test = DenseMatrix::from_rows({{0, 1}});
  EXPECT_EQ(knn_accuracy(lab, y, test, std::vector<std::int32_t>{1}, 1), 1.0);
  EXPECT_EQ(knn_accuracy(lab, y, test, std::vector<std::int32_t>{2}, 1), 0.0);
}

TEST(Knn, AllSameClassWithKEqualL) {
  const DenseMatrix lab = DenseMatrix::from_rows({{1, 0}, {0, 1}, {1, 1}});
  const std::vector<std::int32_t> y{2, 2, 2};
  const DenseMatrix test = DenseMatrix::from_rows({{1, 0}, {0, 1}, {1, 2}, {-1, 0}});
  EXPECT_DOUBLE_EQ(knn_accuracy(lab, y, test, std::vector<std::int32_t>{2, 0, 2, 1}, 3), 0.5);
}

TEST(Knn, VoteTieGoesToSmallerClass) {
  const DenseMatrix lab = DenseMatrix::from_rows({{1, 0.1}, {1, -0.1}});
  const std::vector<std::int32_t> y{3, 1};
  const DenseMatrix test = DenseMatrix::from_rows({{1, 0}});
  EXPECT_EQ(knn_accuracy(lab, y, test, std::vector<std::int32_t>{1}, 2), 1.0);
}

TEST(Knn, MatchesOracleOnRandomData) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const DenseMatrix lab = oracle::random_matrix(rng, 12, 4);
    const DenseMatrix test = oracle::random_matrix(rng, 30, 4);
    std::vector<std::int32_t> ly(12), ty(30);
    for (auto& y : ly) y = static_cast<std::int32_t>(rng.below(3));
    for (auto& y : ty) y = static_cast<std::int32_t>(rng.below(3));
    const auto rows = oracle::rows_of(lab), trows = oracle::rows_of(test);
    for (const std::size_t k : {1u, 3u, 5u}) {
      std::size_t correct = 0;
      for (std::size_t i = 0; i < 30; ++i)
        correct += oracle::knn_predict(rows, ly, trows[i], k, 3) == ty[i];
      EXPECT_DOUBLE_EQ(knn_accuracy(lab, ly, test, ty, k), correct / 30.0);
    }
  }
}

TEST(Knn, SeparatedSynthWithTwoLabelsPerClass) {
  const EmbeddingDataset ds = three_class();
  const DenseMatrix x = ds.view_matrix<double>(0);
  const auto idx = two_per_class(ds);
  std::vector<std::int32_t> ly;
  for (const std::size_t i : idx) ly.push_back((*ds.labels)[i]);
  EXPECT_GT(knn_accuracy(gather(x, idx), ly, x, *ds.labels, 1), 0.95);
}

TEST(Knn, Errors) {
  const DenseMatrix lab(2, 2, 1.0);
  const std::vector<std::int32_t> y{0, 1};
  try {
    knn_accuracy(lab, y, lab, y, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotEnoughNeighbors);
  }
  EXPECT_THROW(knn_accuracy(lab, y, lab, y, 0), Error);
  EXPECT_EQ(default_knn_k(4), 1u);
  EXPECT_EQ(default_knn_k(5), 5u);
}

TEST(Probe, SeparableTwoClassFitsTraining) {
  const DenseMatrix x = DenseMatrix::from_rows({{1, 0.2}, {0.9, -0.3}, {1.2, 0.1}, {-1, 0.3}, {-0.8, -0.2}, {-1.1, 0}});
  const std::vector<std::int32_t> y{0, 0, 0, 1, 1, 1};
  EXPECT_EQ(linear_probe(x, y, x, y), 1.0);
  const LinearProbe p = fit_linear_probe(x, y, 2);
  EXPECT_EQ(p.weights.rows(), 2u);
  EXPECT_EQ(p.bias.size(), 2u);
}

TEST(Probe, SingleClassRejected) {
  const DenseMatrix x = DenseMatrix::from_rows({{1, 0}, {0, 1}});
  const std::vector<std::int32_t> y{4, 4};
  try {
    linear_probe(x, y, x, y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingleClass);
  }
}

TEST(Probe, MissingClassCapsAccuracy) {
  SynthConfig s;
  s.num_classes = 10;
  s.per_class = 30;
  s.dim = 16;
  s.seed = 4;
  const EmbeddingDataset ds = synth_generate(s);
  const DenseMatrix x = ds.view_matrix<double>(0);
  std::vector<std::size_t> full, missing;
  for (std::size_t c = 0; c < 10; ++c) {
    for (std::size_t k = 0; k < 4; ++k) {
      full.push_back(c * 30 + k);
      if (c != 5) missing.push_back(c * 30 + k);
    }
  }
  auto labels_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::int32_t> y;
    for (const std::size_t i : idx) y.push_back((*ds.labels)[i]);
    return y;
  };
  const double a_full = linear_probe(gather(x, full), labels_of(full), x, *ds.labels);
  const double a_missing = linear_probe(gather(x, missing), labels_of(missing), x, *ds.labels);
  EXPECT_LE(a_missing, 0.9);
  EXPECT_GT(a_full, a_missing);
}

TEST(Probe, Deterministic) {
  const EmbeddingDataset ds = three_class();
  const DenseMatrix x = ds.view_matrix<double>(0);
  const auto idx = two_per_class(ds);
  std::vector<std::int32_t> ly;
  for (const std::size_t i : idx) ly.push_back((*ds.labels)[i]);
  const LinearProbe a = fit_linear_probe(gather(x, idx), ly, 3);
  const LinearProbe b = fit_linear_probe(gather(x, idx), ly, 3);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(Balance, StratifiedIsZero) {
  EXPECT_EQ(kl_balance(labels_from_counts({4, 4, 4, 4, 4, 4, 4, 4, 4, 4}), 10), 0.0);
  EXPECT_EQ(class_coverage(labels_from_counts({1, 1, 1, 1, 1, 1, 1, 1, 1, 1}), 10), 1.0);
}

TEST(Balance, PointMassIsLogK) {
  const auto y = labels_from_counts({0, 0, 0, 7, 0, 0, 0, 0, 0, 0});
  EXPECT_NEAR(kl_balance(y, 10), std::log(10.0), 1e-15);
  EXPECT_DOUBLE_EQ(class_coverage(y, 10), 0.1);
}

TEST(Balance, RegressionFixtureMatchesOracle) {
  const std::vector<std::size_t> counts{8, 2, 4, 4, 4, 4, 4, 4, 4, 2};
  const double expected = oracle::kl_to_uniform(counts);
  // 0.2 ln 2 + 2 (0.05 ln 0.5)
  EXPECT_NEAR(expected, 0.1 * std::log(2.0), 1e-15);
  EXPECT_NEAR(kl_balance(labels_from_counts(counts), 10), expected, 1e-15);
  EXPECT_EQ(class_counts(labels_from_counts(counts), 10), counts);
}

TEST(Balance, MissingClassCoverage) {
  const auto y = labels_from_counts({9, 0, 4, 4, 4, 4, 4, 4, 4, 3});
  EXPECT_DOUBLE_EQ(class_coverage(y, 10), 0.9);
  EXPECT_GT(kl_balance(y, 10), 0.0);
}

TEST(Balance, BoundsOnRandomCounts) {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = 2 + rng.below(9);
    std::vector<std::size_t> counts(k);
    for (auto& c : counts) c = rng.below(6);
    counts[0] += 1;
    const double kl = kl_balance(labels_from_counts(counts), k);
    EXPECT_GE(kl, 0.0);
    EXPECT_LE(kl, std::log(static_cast<double>(k)) + 1e-12);
    EXPECT_NEAR(kl, oracle::kl_to_uniform(counts), 1e-12);
  }
}

TEST(Balance, Errors) {
  try {
    kl_balance(std::vector<std::int32_t>{}, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySelection);
  }
  EXPECT_THROW(class_coverage(std::vector<std::int32_t>{}, 3), Error);
  EXPECT_THROW(kl_balance(std::vector<std::int32_t>{3}, 3), Error);
}
