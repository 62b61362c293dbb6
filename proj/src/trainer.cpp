#include "updp/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "updp/random.hpp"

namespace updp {

void TrainConfig::validate() const {
  if (!(tau_instance > 0.0) || !(tau_cluster > 0.0)) {
    throw Error(ErrorCode::InvalidTemperature, "temperatures must be positive");
  }
  if (batch_size < 2) {
    throw Error(ErrorCode::InvalidConfig, "batch_size must be at least 2");
  }
  if (!(learning_rate > 0.0) || !(adam_eps > 0.0) || adam_beta1 < 0.0 || adam_beta1 >= 1.0 ||
      adam_beta2 < 0.0 || adam_beta2 >= 1.0) {
    throw Error(ErrorCode::InvalidConfig, "invalid Adam hyperparameters");
  }
}

template <typename Real>
void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState<Real>& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw Error(ErrorCode::DimMismatch, "adam_step: parameter, gradient and moment sizes differ");
  }
  if (!all_finite<Real>(grads)) {
    throw Error(ErrorCode::NonFiniteGradient, "gradient contains NaN or Inf");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const Real correction1 = static_cast<Real>(1.0 - std::pow(cfg.beta1, t));
  const Real correction2 = static_cast<Real>(1.0 - std::pow(cfg.beta2, t));
  const Real beta1 = static_cast<Real>(cfg.beta1);
  const Real beta2 = static_cast<Real>(cfg.beta2);
  const Real lr = static_cast<Real>(cfg.learning_rate);
  const Real eps = static_cast<Real>(cfg.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    const Real g = grads[i];
    Real& m = state.first_moment[i];
    Real& v = state.second_moment[i];
    m = beta1 * m + (Real{1} - beta1) * g;
    v = beta2 * v + (Real{1} - beta2) * g * g;
    const Real m_hat = m / correction1;
    const Real v_hat = v / correction2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n,
                                                              std::size_t batch_size) {
  if (n < 2) {
    throw Error(ErrorCode::BatchTooSmall, "training needs at least 2 instances");
  }
  if (batch_size < 2) {
    throw Error(ErrorCode::InvalidConfig, "batch_size must be at least 2");
  }
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    ranges.emplace_back(begin, std::min(n, begin + batch_size));
  }
  if (ranges.size() > 1 && ranges.back().second - ranges.back().first == 1) {
    ranges[ranges.size() - 2].second = n;
    ranges.pop_back();
  }
  return ranges;
}

ModelConfig resolve_model_config(const TrainConfig& cfg, const EmbeddingDataset& dataset) {
  ModelConfig model = cfg.model;
  if (model.d_in == 0) model.d_in = dataset.dim;
  if (model.d_in != dataset.dim) {
    throw Error(ErrorCode::DimMismatch, "model d_in differs from the dataset dimension");
  }
  return model;
}

template <typename Real>
TrainResult<Real> train(const EmbeddingDataset& dataset, const TrainConfig& cfg,
                        const AugmentPolicy& policy, const EpochCallback<Real>& on_epoch) {
  cfg.validate();
  if (dataset.count == 0) {
    throw Error(ErrorCode::TooFewInstances, "cannot train on an empty dataset");
  }
  const auto ranges = batch_ranges(dataset.count, cfg.batch_size);

  TrainResult<Real> result{
      init_model<Real>(resolve_model_config(cfg, dataset), derive_seed(cfg.seed, "init")),
      {}};
  ModelState<Real>& model = result.model;

  const ViewSampler sampler(dataset, policy,
                            policy.seed.value_or(derive_seed(cfg.seed, "augment")));
  const LossConfig loss_cfg = cfg.loss_config();
  const AdamConfig adam_cfg{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};

  std::vector<Real> params = trainable_parameters(model);
  AdamState<Real> adam(params.size());
  std::vector<std::size_t> order(dataset.count);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng(derive_seed(cfg.seed, "shuffle", epoch)).shuffle(order);

    double sum_i = 0.0, sum_c = 0.0, sum_h = 0.0;
    for (const auto& [begin, end] : ranges) {
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      const ViewPair views = sampler.make_views(epoch, batch);
      const StepEvaluation<Real> step = loss_and_gradient(
          model, views.a.template cast<Real>(), views.b.template cast<Real>(), loss_cfg);
      if (!std::isfinite(step.loss.total)) {
        throw Error(ErrorCode::NonFiniteLoss,
                    "loss became non-finite at epoch " + std::to_string(epoch));
      }
      adam_step<Real>(params, step.gradient, adam, adam_cfg);
      set_trainable_parameters<Real>(model, params);
      sum_i += step.loss.l_instance;
      sum_c += step.loss.l_cluster_contrastive;
      sum_h += step.loss.entropy;
    }
    const double batches = static_cast<double>(ranges.size());
    const LossBreakdown epoch_loss =
        LossBreakdown::from_components(sum_i / batches, sum_c / batches, sum_h / batches);
    result.history.epochs.push_back(epoch_loss);
    result.history.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
    if (on_epoch) on_epoch(epoch, model, epoch_loss);
  }
  result.history.final_checksum = parameter_checksum(model);
  return result;
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&,
                               const AdamConfig&);
template void adam_step<double>(std::span<double>, std::span<const double>,
                                AdamState<double>&, const AdamConfig&);
template TrainResult<float> train<float>(const EmbeddingDataset&, const TrainConfig&,
                                         const AugmentPolicy&, const EpochCallback<float>&);
template TrainResult<double> train<double>(const EmbeddingDataset&, const TrainConfig&,
                                           const AugmentPolicy&, const EpochCallback<double>&);

}  // namespace updp
