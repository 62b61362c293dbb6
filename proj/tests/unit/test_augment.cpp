#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "updp/augment.hpp"
#include "updp/dataset.hpp"

using namespace updp;

namespace {

EmbeddingDataset small_dataset(std::uint32_t views = 3) {
  SynthConfig cfg;
  cfg.num_classes = 2;
  cfg.per_class = 5;
  cfg.dim = 4;
  cfg.views = views;
  cfg.seed = 1;
  return synth_generate(cfg);
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

TEST(Jitter, ZeroSigmaIsIdentity) {
  const EmbeddingDataset ds = small_dataset();
  AugmentPolicy p;
  p.noise_sigma = 0.0;
  const ViewPair v = make_views(ds, p, 0, all_indices(ds.count));
  const DenseMatrix x = ds.view_matrix<double>(0);
  EXPECT_EQ(v.a, x);
  EXPECT_EQ(v.b, x);
}

TEST(Jitter, DeterministicAndEpochDependent) {
  const EmbeddingDataset ds = small_dataset();
  AugmentPolicy p;
  p.seed = 42;
  const auto idx = all_indices(ds.count);
  const ViewPair a = make_views(ds, p, 3, idx);
  const ViewPair b = make_views(ds, p, 3, idx);
  EXPECT_EQ(a.a, b.a);
  EXPECT_EQ(a.b, b.b);
  EXPECT_NE(a.a, a.b);
  EXPECT_NE(make_views(ds, p, 4, idx).a, a.a);
}

TEST(Jitter, DrawDoesNotDependOnBatchComposition) {
  const EmbeddingDataset ds = small_dataset();
  AugmentPolicy p;
  p.seed = 5;
  const std::vector<std::size_t> batch1{2, 7, 4};
  const std::vector<std::size_t> batch2{4};
  const ViewPair v1 = make_views(ds, p, 1, batch1);
  const ViewPair v2 = make_views(ds, p, 1, batch2);
  for (std::size_t d = 0; d < ds.dim; ++d) {
    EXPECT_EQ(v1.a(2, d), v2.a(0, d));
    EXPECT_EQ(v1.b(2, d), v2.b(0, d));
  }
}

TEST(Jitter, ScalesWithFeatureStd) {
  const EmbeddingDataset ds = small_dataset();
  AugmentPolicy p;
  const ViewSampler sampler(ds, p, 0);
  const std::vector<double> sd = feature_std(ds);
  ASSERT_EQ(sampler.jitter_scale().size(), ds.dim);
  for (std::size_t d = 0; d < ds.dim; ++d) EXPECT_DOUBLE_EQ(sampler.jitter_scale()[d], 0.1 * sd[d]);
  p.scale_by_feature_std = false;
  const ViewSampler flat(ds, p, 0);
  for (const double s : flat.jitter_scale()) EXPECT_EQ(s, 0.1);
}

TEST(Jitter, MeanConvergesToFeature) {
  const EmbeddingDataset ds = small_dataset();
  AugmentPolicy p;
  p.scale_by_feature_std = false;
  p.noise_sigma = 0.5;
  const std::vector<std::size_t> one{3};
  const int trials = 4000;
  std::vector<double> mean(ds.dim, 0.0);
  for (int t = 0; t < trials; ++t) {
    const ViewPair v = make_views(ds, p, static_cast<std::uint64_t>(t), one);
    for (std::size_t d = 0; d < ds.dim; ++d) mean[d] += v.a(0, d) / trials;
  }
  const auto x = ds.feature(3, 0);
  for (std::size_t d = 0; d < ds.dim; ++d) {
    EXPECT_LE(std::abs(mean[d] - x[d]), 3.0 * 0.5 / std::sqrt(static_cast<double>(trials)));
  }
}

TEST(Dropout, ZeroProbabilityIsIdentity) {
  const EmbeddingDataset ds = small_dataset();
  AugmentPolicy p;
  p.kind = AugmentKind::FeatureDropout;
  p.drop_prob = 0.0;
  const ViewPair v = make_views(ds, p, 0, all_indices(ds.count));
  EXPECT_EQ(v.a, ds.view_matrix<double>(0));
  EXPECT_EQ(v.b, ds.view_matrix<double>(0));
}

TEST(Dropout, InvertedScalingPreservesExpectation) {
  const EmbeddingDataset ds = small_dataset();
  AugmentPolicy p;
  p.kind = AugmentKind::FeatureDropout;
  p.drop_prob = 0.3;
  const std::vector<std::size_t> one{1};
  const auto x = ds.feature(1, 0);
  const int trials = 6000;
  std::vector<double> mean(ds.dim, 0.0);
  for (int t = 0; t < trials; ++t) {
    const ViewPair v = make_views(ds, p, static_cast<std::uint64_t>(t), one);
    for (std::size_t d = 0; d < ds.dim; ++d) {
      const double a = v.a(0, d);
      EXPECT_TRUE(a == 0.0 || std::abs(a - x[d] / 0.7) < 1e-6);
      mean[d] += a / trials;
    }
  }
  for (std::size_t d = 0; d < ds.dim; ++d) {
    // sd of one draw is |x| sqrt(p / (1 - p)).
    const double sd = std::abs(x[d]) * std::sqrt(0.3 / 0.7);
    EXPECT_LE(std::abs(mean[d] - x[d]), 4.0 * sd / std::sqrt(static_cast<double>(trials)) + 1e-9);
  }
}

TEST(Precomputed, DrawsTwoDistinctStoredViews) {
  const EmbeddingDataset ds = small_dataset(3);
  AugmentPolicy p;
  p.kind = AugmentKind::PrecomputedViews;
  for (std::uint64_t epoch = 0; epoch < 20; ++epoch) {
    const ViewPair v = make_views(ds, p, epoch, all_indices(ds.count));
    for (std::size_t i = 0; i < ds.count; ++i) {
      int match_a = -1, match_b = -1;
      for (std::size_t view = 0; view < ds.views; ++view) {
        const auto f = ds.feature(i, view);
        if (std::equal(f.begin(), f.end(), v.a.row(i).begin())) match_a = static_cast<int>(view);
        if (std::equal(f.begin(), f.end(), v.b.row(i).begin())) match_b = static_cast<int>(view);
      }
      EXPECT_GE(match_a, 0);
      EXPECT_GE(match_b, 0);
      EXPECT_NE(match_a, match_b);
    }
  }
}

TEST(Precomputed, NeedsTwoViews) {
  const EmbeddingDataset ds = small_dataset(1);
  AugmentPolicy p;
  p.kind = AugmentKind::PrecomputedViews;
  try {
    make_views(ds, p, 0, std::vector<std::size_t>{0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotEnoughViews);
  }
}

TEST(Policy, InvalidValuesRejected) {
  const EmbeddingDataset ds = small_dataset();
  AugmentPolicy p;
  p.noise_sigma = -1.0;
  try {
    make_views(ds, p, 0, std::vector<std::size_t>{0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidPolicy);
  }
  p = AugmentPolicy{};
  p.kind = AugmentKind::FeatureDropout;
  p.drop_prob = 1.0;
  EXPECT_THROW(make_views(ds, p, 0, std::vector<std::size_t>{0}), Error);
  p.drop_prob = -0.1;
  EXPECT_THROW(make_views(ds, p, 0, std::vector<std::size_t>{0}), Error);
}
