#include "updp/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace updp {

namespace {

template <typename Real>
void require_same_shape(const Matrix<Real>& a, const Matrix<Real>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::DimMismatch, std::string(what) + ": shape mismatch");
  }
}

template <typename Real>
Real row_norm(std::span<const Real> v) {
  Real sq = 0;
  for (const Real x : v) sq += x * x;
  return std::sqrt(sq);
}

}  // namespace

template <typename Real>
bool all_finite(std::span<const Real> values) {
  return std::all_of(values.begin(), values.end(),
                     [](Real v) { return std::isfinite(v); });
}

template <typename Real>
Matrix<Real> matmul(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::DimMismatch, "matmul: inner dimensions differ");
  }
  const std::size_t n = a.rows();
  const std::size_t inner = a.cols();
  const std::size_t m = b.cols();
  Matrix<Real> out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    Real* out_row = out.row(i).data();
    const Real* a_row = a.row(i).data();
    for (std::size_t k = 0; k < inner; ++k) {
      const Real scale = a_row[k];
      const Real* b_row = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) out_row[j] += scale * b_row[j];
    }
  }
  return out;
}

template <typename Real>
Matrix<Real> matmul_bt(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::DimMismatch, "matmul_bt: inner dimensions differ");
  }
  return matmul(a, b.transposed());
}

template <typename Real>
Matrix<Real> matmul_at(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.rows() != b.rows()) {
    throw Error(ErrorCode::DimMismatch, "matmul_at: inner dimensions differ");
  }
  const std::size_t inner = a.rows();
  const std::size_t n = a.cols();
  const std::size_t m = b.cols();
  Matrix<Real> out(n, m);
  for (std::size_t k = 0; k < inner; ++k) {
    const Real* a_row = a.row(k).data();
    const Real* b_row = b.row(k).data();
    for (std::size_t i = 0; i < n; ++i) {
      const Real scale = a_row[i];
      Real* out_row = out.row(i).data();
      for (std::size_t j = 0; j < m; ++j) out_row[j] += scale * b_row[j];
    }
  }
  return out;
}

template <typename Real>
Matrix<Real> affine(const Matrix<Real>& x, const Matrix<Real>& weight,
                    std::span<const Real> bias) {
  if (bias.size() != weight.rows()) {
    throw Error(ErrorCode::DimMismatch, "affine: bias length differs from output width");
  }
  Matrix<Real> out = matmul_bt(x, weight);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
  }
  return out;
}

template <typename Real>
std::vector<Real> column_sums(const Matrix<Real>& m) {
  std::vector<Real> sums(m.cols(), Real{0});
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) sums[j] += row[j];
  }
  return sums;
}

template <typename Real>
void add_in_place(Matrix<Real>& target, const Matrix<Real>& other) {
  require_same_shape(target, other, "add_in_place");
  auto dst = target.values();
  const auto src = other.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename Real>
std::vector<Real> l2_normalize(std::span<const Real> v) {
  const Real norm = row_norm(v);
  if (!(norm > static_cast<Real>(kNormEpsilon))) {
    throw Error(ErrorCode::ZeroVector, "cannot normalize a vector with (near) zero norm");
  }
  std::vector<Real> out(v.begin(), v.end());
  for (Real& x : out) x /= norm;
  return out;
}

template <typename Real>
Matrix<Real> l2_normalize_rows(const Matrix<Real>& m) {
  Matrix<Real> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto normalized = l2_normalize<Real>(m.row(i));
    std::copy(normalized.begin(), normalized.end(), out.row(i).begin());
  }
  return out;
}

template <typename Real>
Matrix<Real> l2_normalize_rows_backward(const Matrix<Real>& input,
                                        const Matrix<Real>& output,
                                        const Matrix<Real>& grad_output) {
  require_same_shape(input, output, "l2_normalize_rows_backward");
  require_same_shape(input, grad_output, "l2_normalize_rows_backward");
  Matrix<Real> grad(input.rows(), input.cols());
  for (std::size_t i = 0; i < input.rows(); ++i) {
    const Real norm = row_norm(input.row(i));
    const auto y = output.row(i);
    const auto g = grad_output.row(i);
    Real projection = 0;
    for (std::size_t j = 0; j < y.size(); ++j) projection += y[j] * g[j];
    auto dx = grad.row(i);
    for (std::size_t j = 0; j < y.size(); ++j) dx[j] = (g[j] - y[j] * projection) / norm;
  }
  return grad;
}

template <typename Real>
Matrix<Real> cosine_sim_matrix(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::DimMismatch, "cosine_sim_matrix: feature widths differ");
  }
  return matmul_bt(l2_normalize_rows(a), l2_normalize_rows(b));
}

template <typename Real>
Matrix<Real> softmax_rows(const Matrix<Real>& m) {
  Matrix<Real> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto in = m.row(i);
    auto dst = out.row(i);
    if (in.empty()) continue;
    const Real shift = *std::max_element(in.begin(), in.end());
    Real total = 0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      dst[j] = std::exp(in[j] - shift);
      total += dst[j];
    }
    for (Real& v : dst) v /= total;
  }
  return out;
}

template <typename Real>
Matrix<Real> softmax_rows_backward(const Matrix<Real>& output,
                                   const Matrix<Real>& grad_output) {
  require_same_shape(output, grad_output, "softmax_rows_backward");
  Matrix<Real> grad(output.rows(), output.cols());
  for (std::size_t i = 0; i < output.rows(); ++i) {
    const auto y = output.row(i);
    const auto g = grad_output.row(i);
    Real inner = 0;
    for (std::size_t j = 0; j < y.size(); ++j) inner += y[j] * g[j];
    auto dx = grad.row(i);
    for (std::size_t j = 0; j < y.size(); ++j) dx[j] = y[j] * (g[j] - inner);
  }
  return grad;
}

template <typename Real>
Matrix<Real> relu(const Matrix<Real>& m) {
  Matrix<Real> out = m;
  for (Real& v : out.values()) v = v > Real{0} ? v : Real{0};
  return out;
}

template <typename Real>
Matrix<Real> relu_backward(const Matrix<Real>& pre_activation,
                           const Matrix<Real>& grad_output) {
  require_same_shape(pre_activation, grad_output, "relu_backward");
  Matrix<Real> grad = grad_output;
  const auto pre = pre_activation.values();
  auto g = grad.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(pre[i] > Real{0})) g[i] = Real{0};
  }
  return grad;
}

GradCheckReport finite_diff_check(const DifferentiableFunction& fn,
                                  std::span<const double> params, double eps) {
  if (!(eps > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "finite_diff_check: eps must be positive");
  }
  const std::vector<double> analytic = fn.gradient(params);
  if (analytic.size() != params.size()) {
    throw Error(ErrorCode::DimMismatch, "finite_diff_check: gradient length differs");
  }
  if (!all_finite<double>(analytic)) {
    throw Error(ErrorCode::NonFiniteGradient, "finite_diff_check: analytic gradient not finite");
  }

  GradCheckReport report;
  report.eps = eps;
  std::vector<double> probe(params.begin(), params.end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + eps;
    const double plus = fn.value(probe);
    probe[i] = original - eps;
    const double minus = fn.value(probe);
    probe[i] = original;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw Error(ErrorCode::NonFiniteLoss,
                  "finite_diff_check: probe at index " + std::to_string(i) + " is not finite");
    }
    const double numeric = (plus - minus) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_parameter_index = i;
    }
  }
  return report;
}

#define UPDP_INSTANTIATE(Real)                                                        \
  template bool all_finite<Real>(std::span<const Real>);                              \
  template Matrix<Real> matmul(const Matrix<Real>&, const Matrix<Real>&);             \
  template Matrix<Real> matmul_bt(const Matrix<Real>&, const Matrix<Real>&);          \
  template Matrix<Real> matmul_at(const Matrix<Real>&, const Matrix<Real>&);          \
  template Matrix<Real> affine(const Matrix<Real>&, const Matrix<Real>&,              \
                               std::span<const Real>);                                \
  template std::vector<Real> column_sums(const Matrix<Real>&);                        \
  template void add_in_place(Matrix<Real>&, const Matrix<Real>&);                     \
  template std::vector<Real> l2_normalize(std::span<const Real>);                     \
  template Matrix<Real> l2_normalize_rows(const Matrix<Real>&);                       \
  template Matrix<Real> l2_normalize_rows_backward(const Matrix<Real>&,               \
                                                   const Matrix<Real>&,               \
                                                   const Matrix<Real>&);              \
  template Matrix<Real> cosine_sim_matrix(const Matrix<Real>&, const Matrix<Real>&);  \
  template Matrix<Real> softmax_rows(const Matrix<Real>&);                            \
  template Matrix<Real> softmax_rows_backward(const Matrix<Real>&, const Matrix<Real>&); \
  template Matrix<Real> relu(const Matrix<Real>&);                                    \
  template Matrix<Real> relu_backward(const Matrix<Real>&, const Matrix<Real>&);

UPDP_INSTANTIATE(float)
UPDP_INSTANTIATE(double)
UPDP_INSTANTIATE(long double)

#undef UPDP_INSTANTIATE

}  // namespace updp
