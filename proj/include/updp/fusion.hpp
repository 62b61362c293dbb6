#pragma once

// Frozen stand-in for the vision-language fusion stage: a single
// cross-attention block where the image feature is the only query and the
// prompt vectors are keys and values, plus a residual image projection.
//
//   h = W_r x + W_o * sum_j alpha_j (W_v v_j)
//   alpha = softmax_j(<W_q x, W_k v_j> / sqrt(d_h))
//
// Weights are fixed at construction. Gradients flow to the prompt only.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "updp/numerics.hpp"

namespace updp {

template <typename Real>
struct FuserWeights {
  Matrix<Real> query;     // d_h x d_in
  Matrix<Real> key;       // d_h x d_w
  Matrix<Real> value;     // d_h x d_w
  Matrix<Real> output;    // d_h x d_h
  Matrix<Real> residual;  // d_h x d_in

  bool operator==(const FuserWeights&) const = default;
};

/// Intermediates of a batched fuse, kept for the backward pass.
template <typename Real>
struct FuseTrace {
  Matrix<Real> queries;    // N x d_h
  Matrix<Real> keys;       // n x d_h
  Matrix<Real> values;     // n x d_h
  Matrix<Real> attention;  // N x n
  Matrix<Real> context;    // N x d_h
  Matrix<Real> fused;      // N x d_h
};

template <typename Real>
class FrozenFuser {
 public:
  /// Seeded uniform weights scaled by 1/sqrt(fan_in). Throws InvalidDim on a
  /// zero width.
  static FrozenFuser create(std::uint64_t seed, std::size_t d_in, std::size_t d_w,
                            std::size_t d_h);

  /// Rebuilds a fuser from stored weights (checkpoint loading).
  static FrozenFuser from_weights(std::uint64_t seed, FuserWeights<Real> weights);

  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t d_in() const noexcept { return weights_.query.cols(); }
  std::size_t d_w() const noexcept { return weights_.key.cols(); }
  std::size_t d_h() const noexcept { return weights_.query.rows(); }
  Real attention_temperature() const noexcept { return temperature_; }
  const FuserWeights<Real>& weights() const noexcept { return weights_; }

  /// Fuses every row of `images` (N x d_in) with `prompt` (n x d_w).
  Matrix<Real> fuse(const Matrix<Real>& images, const Matrix<Real>& prompt) const;

  std::vector<Real> fuse(std::span<const Real> image, const Matrix<Real>& prompt) const;

  FuseTrace<Real> fuse_with_trace(const Matrix<Real>& images,
                                  const Matrix<Real>& prompt) const;

  /// d loss / d prompt given d loss / d fused.
  Matrix<Real> prompt_gradient(const FuseTrace<Real>& trace, const Matrix<Real>& prompt,
                               const Matrix<Real>& grad_fused) const;

  bool operator==(const FrozenFuser&) const = default;

 private:
  FrozenFuser(std::uint64_t seed, FuserWeights<Real> weights);

  void check_inputs(const Matrix<Real>& images, const Matrix<Real>& prompt) const;

  std::uint64_t seed_ = 0;
  FuserWeights<Real> weights_;
  Real temperature_ = 1;
};

/// init_fuser in free-function form.
template <typename Real>
FrozenFuser<Real> init_fuser(std::uint64_t seed, std::size_t d_in, std::size_t d_w,
                             std::size_t d_h) {
  return FrozenFuser<Real>::create(seed, d_in, d_w, d_h);
}

}  // namespace updp
