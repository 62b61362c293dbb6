#pragma once

// Frozen image-feature datasets, the EMB1 binary format and the synthetic
// Gaussian-mixture generator.
//
// EMB1 layout, little-endian throughout:
//   "EMB1" | u32 N | u32 D | u32 V | u8 has_labels | u32 K (0 without labels)
//   N*V*D f32 in [instance][view][dim] order
//   N i32 labels (only when has_labels == 1)

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "updp/numerics.hpp"

namespace updp {

struct EmbeddingDataset {
  std::uint32_t count = 0;
  std::uint32_t dim = 0;
  std::uint32_t views = 1;
  std::vector<float> features;
  /// Ground truth, consumed by evaluation only.
  std::optional<std::vector<std::int32_t>> labels;
  std::uint32_t num_classes = 0;

  std::span<const float> feature(std::size_t instance, std::size_t view) const {
    return {features.data() + (instance * views + view) * dim, dim};
  }

  /// N x D matrix of one view for every instance.
  template <typename Real>
  Matrix<Real> view_matrix(std::size_t view = 0) const {
    Matrix<Real> m(count, dim);
    for (std::size_t i = 0; i < count; ++i) {
      const auto src = feature(i, view);
      std::copy(src.begin(), src.end(), m.row(i).begin());
    }
    return m;
  }

  bool has_labels() const noexcept { return labels.has_value(); }

  /// Throws InvalidDim, NonFiniteFeature or LabelOutOfRange.
  void validate() const;

  bool operator==(const EmbeddingDataset&) const = default;
};

EmbeddingDataset load_dataset(const std::filesystem::path& path);

/// Rejects V = 0 with InvalidDim; throws IoError when the file cannot be written.
void save_dataset(const EmbeddingDataset& dataset, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_dataset(const EmbeddingDataset& dataset);
EmbeddingDataset decode_dataset(std::span<const std::uint8_t> bytes);

struct SynthConfig {
  std::uint32_t num_classes = 10;
  std::uint32_t per_class = 200;
  std::uint32_t dim = 32;
  double separation = 10.0;
  double sigma = 1.0;
  std::uint32_t subclusters = 2;
  double subcluster_spread = 2.0;  // norm of each subcluster's offset from its class mean
  double view_sigma = 0.1;         // per-view noise around the instance point
  std::uint32_t views = 2;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

/// Class means on a random sphere of radius `separation`, subcluster offsets
/// inside each class, instances drawn around their subcluster mean and views
/// drawn around each instance. Instances are stored class by class.
EmbeddingDataset synth_generate(const SynthConfig& cfg);

}  // namespace updp
