#pragma once

// Two feature-space "views" per instance for the contrastive objectives.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "updp/dataset.hpp"
#include "updp/numerics.hpp"

namespace updp {

enum class AugmentKind { PrecomputedViews, GaussianJitter, FeatureDropout };

struct AugmentPolicy {
  AugmentKind kind = AugmentKind::GaussianJitter;
  /// Jitter standard deviation. With scale_by_feature_std it multiplies the
  /// per-dimension standard deviation of the dataset.
  double noise_sigma = 0.1;
  bool scale_by_feature_std = true;
  double drop_prob = 0.1;
  /// Unset means "derive from the run seed".
  std::optional<std::uint64_t> seed;

  void validate() const;
  bool operator==(const AugmentPolicy&) const = default;
};

struct ViewPair {
  DenseMatrix a;
  DenseMatrix b;
};

/// Binds a policy to a dataset. Per-dimension statistics are computed once;
/// each instance's draw is keyed by (seed, epoch, instance), so it does not
/// depend on which batch the instance lands in.
class ViewSampler {
 public:
  ViewSampler(const EmbeddingDataset& dataset, AugmentPolicy policy, std::uint64_t seed);

  ViewPair make_views(std::uint64_t epoch, std::span<const std::size_t> batch_indices) const;

  const std::vector<double>& jitter_scale() const noexcept { return jitter_scale_; }

 private:
  const EmbeddingDataset& dataset_;
  AugmentPolicy policy_;
  std::uint64_t seed_;
  std::vector<double> jitter_scale_;
};

/// One-shot form; uses policy.seed (0 when unset).
ViewPair make_views(const EmbeddingDataset& dataset, const AugmentPolicy& policy,
                    std::uint64_t epoch, std::span<const std::size_t> batch_indices);

/// Population standard deviation of each feature dimension over all views.
std::vector<double> feature_std(const EmbeddingDataset& dataset);

}  // namespace updp
