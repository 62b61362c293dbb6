#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "updp/augment.hpp"
#include "updp/dataset.hpp"
#include "updp/losses.hpp"
#include "updp/model.hpp"

namespace updp {

enum class Precision { F32, F64 };

struct TrainConfig {
  double tau_instance = 0.5;
  double tau_cluster = 1.0;
  double learning_rate = 0.0003;
  std::size_t batch_size = 256;
  std::size_t epochs = 150;
  bool exclude_self = false;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  Precision precision = Precision::F32;
  /// Architecture, including context length and the number of clusters M.
  /// d_in = 0 is filled in from the dataset.
  ModelConfig model;

  void validate() const;
  LossConfig loss_config() const { return {tau_instance, tau_cluster, exclude_self}; }
  bool operator==(const TrainConfig&) const = default;
};

struct AdamConfig {
  double learning_rate = 0.0003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Real>
struct AdamState {
  std::vector<Real> first_moment;
  std::vector<Real> second_moment;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t size = 0)
      : first_moment(size, Real{0}), second_moment(size, Real{0}) {}
};

/// Bias-corrected Adam. Throws NonFiniteGradient (leaving everything
/// untouched) if any gradient entry is NaN or Inf.
template <typename Real>
void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState<Real>& state,
               const AdamConfig& cfg);

struct TrainHistory {
  std::vector<LossBreakdown> epochs;
  std::vector<double> epoch_seconds;
  std::string final_checksum;
};

template <typename Real>
struct TrainResult {
  ModelState<Real> model;
  TrainHistory history;
};

template <typename Real>
using EpochCallback =
    std::function<void(std::size_t epoch, const ModelState<Real>&, const LossBreakdown&)>;

/// [begin, end) ranges covering n instances. A trailing batch of one is
/// merged into its predecessor; n < 2 throws BatchTooSmall.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n,
                                                              std::size_t batch_size);

/// Minibatch Adam over prompt and heads against the total loss. Randomness
/// comes from named sub-streams of cfg.seed: "init" for the model, "shuffle"
/// for batch order and "augment" for views (unless the policy pins a seed).
template <typename Real>
TrainResult<Real> train(const EmbeddingDataset& dataset, const TrainConfig& cfg,
                        const AugmentPolicy& policy = {},
                        const EpochCallback<Real>& on_epoch = {});

/// The model config train() actually uses for a dataset.
ModelConfig resolve_model_config(const TrainConfig& cfg, const EmbeddingDataset& dataset);

}  // namespace updp
