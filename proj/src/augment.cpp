#include "updp/augment.hpp"

#include <cmath>

#include "updp/random.hpp"

namespace updp {

void AugmentPolicy::validate() const {
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw Error(ErrorCode::InvalidPolicy, "noise_sigma must be finite and >= 0");
  }
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) {
    throw Error(ErrorCode::InvalidPolicy, "drop_prob must lie in [0, 1)");
  }
}

std::vector<double> feature_std(const EmbeddingDataset& dataset) {
  const std::size_t rows = std::size_t{dataset.count} * dataset.views;
  std::vector<double> mean(dataset.dim, 0.0);
  std::vector<double> var(dataset.dim, 0.0);
  if (rows == 0) return var;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t d = 0; d < dataset.dim; ++d) {
      mean[d] += dataset.features[r * dataset.dim + d];
    }
  }
  for (double& m : mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t d = 0; d < dataset.dim; ++d) {
      const double diff = dataset.features[r * dataset.dim + d] - mean[d];
      var[d] += diff * diff;
    }
  }
  for (double& v : var) v = std::sqrt(v / static_cast<double>(rows));
  return var;
}

ViewSampler::ViewSampler(const EmbeddingDataset& dataset, AugmentPolicy policy,
                         std::uint64_t seed)
    : dataset_(dataset), policy_(std::move(policy)), seed_(seed) {
  policy_.validate();
  if (policy_.kind == AugmentKind::PrecomputedViews && dataset_.views < 2) {
    throw Error(ErrorCode::NotEnoughViews, "precomputed views need at least 2 views per instance");
  }
  if (policy_.kind == AugmentKind::GaussianJitter) {
    if (policy_.scale_by_feature_std) {
      jitter_scale_ = feature_std(dataset_);
      for (double& s : jitter_scale_) s *= policy_.noise_sigma;
    } else {
      jitter_scale_.assign(dataset_.dim, policy_.noise_sigma);
    }
  }
}

ViewPair ViewSampler::make_views(std::uint64_t epoch,
                                 std::span<const std::size_t> batch_indices) const {
  const std::size_t dim = dataset_.dim;
  ViewPair out{DenseMatrix(batch_indices.size(), dim), DenseMatrix(batch_indices.size(), dim)};

  for (std::size_t row = 0; row < batch_indices.size(); ++row) {
    const std::size_t instance = batch_indices[row];
    if (instance >= dataset_.count) {
      throw Error(ErrorCode::DimMismatch, "batch index outside the dataset");
    }
    Rng rng(derive_seed(seed_, "views", epoch, instance));
    auto a = out.a.row(row);
    auto b = out.b.row(row);

    switch (policy_.kind) {
      case AugmentKind::PrecomputedViews: {
        const std::size_t first = static_cast<std::size_t>(rng.below(dataset_.views));
        std::size_t second = static_cast<std::size_t>(rng.below(dataset_.views - 1));
        if (second >= first) ++second;
        const auto fa = dataset_.feature(instance, first);
        const auto fb = dataset_.feature(instance, second);
        std::copy(fa.begin(), fa.end(), a.begin());
        std::copy(fb.begin(), fb.end(), b.begin());
        break;
      }
      case AugmentKind::GaussianJitter: {
        const auto x = dataset_.feature(instance, 0);
        for (std::size_t d = 0; d < dim; ++d) a[d] = x[d] + jitter_scale_[d] * rng.normal();
        for (std::size_t d = 0; d < dim; ++d) b[d] = x[d] + jitter_scale_[d] * rng.normal();
        break;
      }
      case AugmentKind::FeatureDropout: {
        const auto x = dataset_.feature(instance, 0);
        const double keep_scale = 1.0 / (1.0 - policy_.drop_prob);
        for (auto view : {a, b}) {
          for (std::size_t d = 0; d < dim; ++d) {
            view[d] = rng.uniform() < policy_.drop_prob ? 0.0 : x[d] * keep_scale;
          }
        }
        break;
      }
    }
  }
  return out;
}

ViewPair make_views(const EmbeddingDataset& dataset, const AugmentPolicy& policy,
                    std::uint64_t epoch, std::span<const std::size_t> batch_indices) {
  return ViewSampler(dataset, policy, policy.seed.value_or(0)).make_views(epoch, batch_indices);
}

}  // namespace updp
