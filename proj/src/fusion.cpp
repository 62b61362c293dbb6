#include "updp/fusion.hpp"

#include <cmath>

#include "updp/random.hpp"

namespace updp {

namespace {

template <typename Real>
Matrix<Real> uniform_weights(Rng& rng, std::size_t rows, std::size_t cols) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  Matrix<Real> m(rows, cols);
  for (Real& w : m.values()) w = static_cast<Real>(rng.uniform(-bound, bound));
  return m;
}

}  // namespace

template <typename Real>
FrozenFuser<Real>::FrozenFuser(std::uint64_t seed, FuserWeights<Real> weights)
    : seed_(seed),
      weights_(std::move(weights)),
      temperature_(static_cast<Real>(std::sqrt(static_cast<double>(weights_.query.rows())))) {}

template <typename Real>
FrozenFuser<Real> FrozenFuser<Real>::create(std::uint64_t seed, std::size_t d_in,
                                            std::size_t d_w, std::size_t d_h) {
  if (d_in == 0 || d_w == 0 || d_h == 0) {
    throw Error(ErrorCode::InvalidDim, "fuser widths must be at least 1");
  }
  Rng rng(derive_seed(seed, "fuser"));
  FuserWeights<Real> w;
  w.query = uniform_weights<Real>(rng, d_h, d_in);
  w.key = uniform_weights<Real>(rng, d_h, d_w);
  w.value = uniform_weights<Real>(rng, d_h, d_w);
  w.output = uniform_weights<Real>(rng, d_h, d_h);
  w.residual = uniform_weights<Real>(rng, d_h, d_in);
  return FrozenFuser(seed, std::move(w));
}

template <typename Real>
FrozenFuser<Real> FrozenFuser<Real>::from_weights(std::uint64_t seed,
                                                  FuserWeights<Real> weights) {
  const std::size_t d_h = weights.query.rows();
  const std::size_t d_in = weights.query.cols();
  const std::size_t d_w = weights.key.cols();
  if (d_h == 0 || d_in == 0 || d_w == 0) {
    throw Error(ErrorCode::InvalidDim, "fuser widths must be at least 1");
  }
  const bool consistent = weights.key.rows() == d_h && weights.value.rows() == d_h &&
                          weights.value.cols() == d_w && weights.output.rows() == d_h &&
                          weights.output.cols() == d_h && weights.residual.rows() == d_h &&
                          weights.residual.cols() == d_in;
  if (!consistent) {
    throw Error(ErrorCode::DimMismatch, "fuser weight shapes are inconsistent");
  }
  return FrozenFuser(seed, std::move(weights));
}

template <typename Real>
void FrozenFuser<Real>::check_inputs(const Matrix<Real>& images,
                                     const Matrix<Real>& prompt) const {
  if (images.cols() != d_in()) {
    throw Error(ErrorCode::DimMismatch, "image feature width differs from fuser d_in");
  }
  if (prompt.rows() == 0 || prompt.cols() != d_w()) {
    throw Error(ErrorCode::DimMismatch, "prompt must have n >= 1 vectors of width d_w");
  }
}

template <typename Real>
FuseTrace<Real> FrozenFuser<Real>::fuse_with_trace(const Matrix<Real>& images,
                                                   const Matrix<Real>& prompt) const {
  check_inputs(images, prompt);
  FuseTrace<Real> t;
  t.queries = matmul_bt(images, weights_.query);
  t.keys = matmul_bt(prompt, weights_.key);
  t.values = matmul_bt(prompt, weights_.value);
  Matrix<Real> scores = matmul_bt(t.queries, t.keys);
  for (Real& s : scores.values()) s /= temperature_;
  t.attention = softmax_rows(scores);
  t.context = matmul(t.attention, t.values);
  t.fused = matmul_bt(images, weights_.residual);
  add_in_place(t.fused, matmul_bt(t.context, weights_.output));
  return t;
}

template <typename Real>
Matrix<Real> FrozenFuser<Real>::fuse(const Matrix<Real>& images,
                                     const Matrix<Real>& prompt) const {
  return fuse_with_trace(images, prompt).fused;
}

template <typename Real>
std::vector<Real> FrozenFuser<Real>::fuse(std::span<const Real> image,
                                          const Matrix<Real>& prompt) const {
  Matrix<Real> single(1, image.size(), std::vector<Real>(image.begin(), image.end()));
  return fuse(single, prompt).data();
}

template <typename Real>
Matrix<Real> FrozenFuser<Real>::prompt_gradient(const FuseTrace<Real>& trace,
                                                const Matrix<Real>& prompt,
                                                const Matrix<Real>& grad_fused) const {
  if (grad_fused.rows() != trace.fused.rows() || grad_fused.cols() != d_h()) {
    throw Error(ErrorCode::DimMismatch, "fused gradient shape mismatch");
  }
  const Matrix<Real> grad_context = matmul(grad_fused, weights_.output);
  const Matrix<Real> grad_attention = matmul_bt(grad_context, trace.values);
  const Matrix<Real> grad_values = matmul_at(trace.attention, grad_context);
  Matrix<Real> grad_scores = softmax_rows_backward(trace.attention, grad_attention);
  for (Real& g : grad_scores.values()) g /= temperature_;
  const Matrix<Real> grad_keys = matmul_at(grad_scores, trace.queries);

  Matrix<Real> grad_prompt = matmul(grad_keys, weights_.key);
  add_in_place(grad_prompt, matmul(grad_values, weights_.value));
  if (grad_prompt.rows() != prompt.rows() || grad_prompt.cols() != prompt.cols()) {
    throw Error(ErrorCode::DimMismatch, "trace does not belong to this prompt");
  }
  return grad_prompt;
}

template class FrozenFuser<float>;
template class FrozenFuser<double>;
template class FrozenFuser<long double>;

}  // namespace updp
