#pragma once

// Trainable state (prompt context plus the instance and cluster heads) around
// a frozen fuser, and the batched forward / backward pass of the whole graph:
//
//   x -> fuse(x, prompt) = h -> g_I(h) -> normalize -> z
//                             -> g_C(h) -> softmax   -> c

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "updp/fusion.hpp"
#include "updp/losses.hpp"
#include "updp/numerics.hpp"

namespace updp {

struct ModelConfig {
  std::size_t d_in = 0;
  std::size_t d_w = 32;
  std::size_t d_h = 64;
  std::size_t d_z = 128;
  std::size_t d_hidden = 0;  // 0 means d_h
  std::size_t context_length = 4;
  std::size_t num_clusters = 0;
  /// The fuser plays the role of a pretrained backbone, so its seed is part of
  /// the architecture rather than of a training run.
  std::uint64_t fuser_seed = 2023;

  std::size_t hidden_width() const noexcept { return d_hidden == 0 ? d_h : d_hidden; }
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

template <typename Real>
struct PromptContext {
  Matrix<Real> vectors;  // n x d_w

  std::size_t length() const noexcept { return vectors.rows(); }
  std::size_t width() const noexcept { return vectors.cols(); }
  bool operator==(const PromptContext&) const = default;
};

/// Two-layer MLP: out = W2 relu(W1 x + b1) + b2.
template <typename Real>
struct MlpHead {
  Matrix<Real> w1;  // hidden x in
  std::vector<Real> b1;
  Matrix<Real> w2;  // out x hidden
  std::vector<Real> b2;

  std::size_t in_width() const noexcept { return w1.cols(); }
  std::size_t out_width() const noexcept { return w2.rows(); }
  std::size_t parameter_count() const noexcept {
    return w1.size() + b1.size() + w2.size() + b2.size();
  }
  bool operator==(const MlpHead&) const = default;
};

template <typename Real>
struct ModelState {
  ModelConfig config;
  PromptContext<Real> prompt;
  FrozenFuser<Real> fuser;
  MlpHead<Real> instance_head;  // out = d_z
  MlpHead<Real> cluster_head;   // out = M
  std::uint64_t rng_seed = 0;

  std::size_t num_clusters() const noexcept { return cluster_head.out_width(); }
  bool operator==(const ModelState&) const = default;
};

template <typename Real>
struct ForwardBatch {
  Matrix<Real> h_a, h_b;  // N x d_h
  Matrix<Real> z_a, z_b;  // N x d_z, unit rows
  Matrix<Real> c_a, c_b;  // N x M, probability rows
};

/// Single-view encoding, used for selection and evaluation.
template <typename Real>
struct Encoding {
  Matrix<Real> h;
  Matrix<Real> z;
  Matrix<Real> c;
};

/// Prompt ~ N(0, 0.02^2); head weights and biases uniform in
/// +-1/sqrt(fan_in); fuser from cfg.fuser_seed. Throws InvalidConfig.
template <typename Real>
ModelState<Real> init_model(const ModelConfig& cfg, std::uint64_t seed);

template <typename Real>
ForwardBatch<Real> forward(const ModelState<Real>& model, const Matrix<Real>& x_a,
                           const Matrix<Real>& x_b);

template <typename Real>
Encoding<Real> encode(const ModelState<Real>& model, const Matrix<Real>& x);

/// Loss and its gradient w.r.t. the flattened trainable parameters, in the
/// order of trainable_parameters().
template <typename Real>
struct StepEvaluation {
  LossBreakdown loss;
  std::vector<Real> gradient;
};

template <typename Real>
StepEvaluation<Real> loss_and_gradient(const ModelState<Real>& model, const Matrix<Real>& x_a,
                                       const Matrix<Real>& x_b, const LossConfig& loss_cfg);

// Trainable parameters are the prompt followed by the instance head and the
// cluster head (w1, b1, w2, b2 each). The fuser never appears here.
template <typename Real>
std::size_t trainable_parameter_count(const ModelState<Real>& model);

template <typename Real>
std::vector<Real> trainable_parameters(const ModelState<Real>& model);

template <typename Real>
void set_trainable_parameters(ModelState<Real>& model, std::span<const Real> params);

/// Replaces the prompt (e.g. with one learned on another dataset).
template <typename Real>
void replace_prompt(ModelState<Real>& model, const PromptContext<Real>& prompt);

/// Hex FNV-1a digest of the trainable parameter bytes.
template <typename Real>
std::string parameter_checksum(const ModelState<Real>& model);

}  // namespace updp
