#include "updp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace updp {

LossBreakdown LossBreakdown::from_components(double l_instance, double l_cluster_contrastive,
                                             double entropy) {
  LossBreakdown b;
  b.l_instance = l_instance;
  b.l_cluster_contrastive = l_cluster_contrastive;
  b.entropy = entropy;
  b.l_cluster = l_cluster_contrastive - entropy;
  b.total = l_instance + b.l_cluster;
  return b;
}

namespace {

template <typename Real>
void check_temperature(Real tau) {
  if (!(tau > Real{0}) || !std::isfinite(tau)) {
    throw Error(ErrorCode::InvalidTemperature, "temperature must be positive and finite");
  }
}

template <typename Real>
void check_pair(const Matrix<Real>& a, const Matrix<Real>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::DimMismatch, std::string(what) + ": view shapes differ");
  }
}

template <typename Real>
Matrix<Real> stack_rows(const Matrix<Real>& top, const Matrix<Real>& bottom) {
  Matrix<Real> out(top.rows() + bottom.rows(), top.cols());
  std::copy(top.values().begin(), top.values().end(), out.values().begin());
  std::copy(bottom.values().begin(), bottom.values().end(),
            out.values().begin() + static_cast<std::ptrdiff_t>(top.size()));
  return out;
}

template <typename Real>
std::pair<Matrix<Real>, Matrix<Real>> split_rows(const Matrix<Real>& stacked,
                                                 std::size_t top_rows) {
  const std::size_t cols = stacked.cols();
  const auto values = stacked.values();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(top_rows * cols);
  Matrix<Real> top(top_rows, cols, std::vector<Real>(values.begin(), mid));
  Matrix<Real> bottom(stacked.rows() - top_rows, cols, std::vector<Real>(mid, values.end()));
  return {std::move(top), std::move(bottom)};
}

template <typename Real>
struct ContrastiveResult {
  Real value = 0;
  Matrix<Real> grad_a;
  Matrix<Real> grad_b;
};

// Shared by both levels. Row r of `a` is positive with row r of `b`; every
// other row of the 2R stack is a negative. Returns (1/2R) sum of the 2R
// anchor losses and, optionally, gradients w.r.t. the unnormalized rows.
template <typename Real>
ContrastiveResult<Real> contrastive_term(const Matrix<Real>& a, const Matrix<Real>& b,
                                         Real tau, bool exclude_self, bool want_gradient) {
  const std::size_t half = a.rows();
  const std::size_t total = 2 * half;
  const Matrix<Real> stacked = stack_rows(a, b);
  const Matrix<Real> unit = l2_normalize_rows(stacked);
  const Matrix<Real> sims = matmul_bt(unit, unit);

  ContrastiveResult<Real> result;
  Matrix<Real> grad_sims;
  if (want_gradient) grad_sims = Matrix<Real>(total, total);
  const Real inv_count = Real{1} / static_cast<Real>(total);

  std::vector<Real> weights(total);
  Real sum = 0;
  for (std::size_t r = 0; r < total; ++r) {
    const std::size_t positive = r < half ? r + half : r - half;
    const auto row = sims.row(r);
    Real shift = -std::numeric_limits<Real>::infinity();
    for (std::size_t c = 0; c < total; ++c) {
      if (exclude_self && c == r) continue;
      shift = std::max(shift, row[c] / tau);
    }
    Real denom = 0;
    for (std::size_t c = 0; c < total; ++c) {
      if (exclude_self && c == r) {
        weights[c] = 0;
        continue;
      }
      weights[c] = std::exp(row[c] / tau - shift);
      denom += weights[c];
    }
    sum += shift + std::log(denom) - row[positive] / tau;

    if (want_gradient) {
      auto g = grad_sims.row(r);
      const Real scale = inv_count / tau;
      for (std::size_t c = 0; c < total; ++c) g[c] = scale * (weights[c] / denom);
      g[positive] -= scale;
    }
  }
  result.value = sum * inv_count;

  if (want_gradient) {
    // sims = U U^T, so dU = (dS + dS^T) U.
    Matrix<Real> grad_unit = matmul(grad_sims, unit);
    add_in_place(grad_unit, matmul_at(grad_sims, unit));
    const Matrix<Real> grad_stacked = l2_normalize_rows_backward(stacked, unit, grad_unit);
    auto [ga, gb] = split_rows(grad_stacked, half);
    result.grad_a = std::move(ga);
    result.grad_b = std::move(gb);
  }
  return result;
}

template <typename Real>
void check_instance_inputs(const Matrix<Real>& z_a, const Matrix<Real>& z_b, Real tau) {
  check_pair(z_a, z_b, "instance_loss");
  check_temperature(tau);
  if (z_a.rows() < 2) {
    throw Error(ErrorCode::TooFewInstances, "instance loss needs at least 2 instances");
  }
}

template <typename Real>
void check_cluster_inputs(const Matrix<Real>& c_a, const Matrix<Real>& c_b, Real tau) {
  check_pair(c_a, c_b, "cluster_contrastive");
  check_temperature(tau);
  if (c_a.cols() < 2) {
    throw Error(ErrorCode::InvalidConfig, "cluster loss needs at least 2 clusters");
  }
  if (c_a.rows() == 0) {
    throw Error(ErrorCode::TooFewInstances, "cluster loss needs at least 1 instance");
  }
}

template <typename Real>
std::vector<Real> column_means(const Matrix<Real>& c) {
  std::vector<Real> means = column_sums(c);
  const Real n = static_cast<Real>(c.rows());
  for (Real& m : means) m /= n;
  return means;
}

template <typename Real>
Real view_entropy(const Matrix<Real>& c) {
  Real h = 0;
  for (const Real p : column_means(c)) {
    if (p > Real{0}) h -= p * std::log(p);
  }
  return h;
}

template <typename Real>
Matrix<Real> view_entropy_gradient(const Matrix<Real>& c) {
  const std::vector<Real> means = column_means(c);
  const Real n = static_cast<Real>(c.rows());
  std::vector<Real> per_column(means.size());
  for (std::size_t m = 0; m < means.size(); ++m) {
    // d(-p ln p)/dp = -(ln p + 1); clamp so an underflowed column stays finite.
    const Real p = std::max(means[m], std::numeric_limits<Real>::min());
    per_column[m] = -(std::log(p) + Real{1}) / n;
  }
  Matrix<Real> grad(c.rows(), c.cols());
  for (std::size_t i = 0; i < c.rows(); ++i) {
    std::copy(per_column.begin(), per_column.end(), grad.row(i).begin());
  }
  return grad;
}

}  // namespace

template <typename Real>
Real instance_loss(const Matrix<Real>& z_a, const Matrix<Real>& z_b, Real tau,
                   bool exclude_self) {
  check_instance_inputs(z_a, z_b, tau);
  return contrastive_term(z_a, z_b, tau, exclude_self, false).value;
}

template <typename Real>
Real cluster_contrastive(const Matrix<Real>& c_a, const Matrix<Real>& c_b, Real tau,
                         bool exclude_self) {
  check_cluster_inputs(c_a, c_b, tau);
  return contrastive_term(c_a.transposed(), c_b.transposed(), tau, exclude_self, false).value;
}

template <typename Real>
Real assignment_entropy(const Matrix<Real>& c_a, const Matrix<Real>& c_b) {
  check_pair(c_a, c_b, "assignment_entropy");
  if (c_a.rows() == 0) return Real{0};
  return view_entropy(c_a) + view_entropy(c_b);
}

template <typename Real>
std::pair<Matrix<Real>, Matrix<Real>> assignment_entropy_gradient(const Matrix<Real>& c_a,
                                                                  const Matrix<Real>& c_b) {
  check_pair(c_a, c_b, "assignment_entropy_gradient");
  return {view_entropy_gradient(c_a), view_entropy_gradient(c_b)};
}

template <typename Real>
LossBreakdown total_loss(const Matrix<Real>& z_a, const Matrix<Real>& z_b,
                         const Matrix<Real>& c_a, const Matrix<Real>& c_b,
                         const LossConfig& cfg) {
  const Real li = instance_loss(z_a, z_b, static_cast<Real>(cfg.tau_instance), cfg.exclude_self);
  const Real lc =
      cluster_contrastive(c_a, c_b, static_cast<Real>(cfg.tau_cluster), cfg.exclude_self);
  const Real h = assignment_entropy(c_a, c_b);
  return LossBreakdown::from_components(li, lc, h);
}

template <typename Real>
LossGradients<Real> total_loss_with_gradients(const Matrix<Real>& z_a,
                                              const Matrix<Real>& z_b,
                                              const Matrix<Real>& c_a,
                                              const Matrix<Real>& c_b,
                                              const LossConfig& cfg) {
  const Real tau_i = static_cast<Real>(cfg.tau_instance);
  const Real tau_c = static_cast<Real>(cfg.tau_cluster);
  check_instance_inputs(z_a, z_b, tau_i);
  check_cluster_inputs(c_a, c_b, tau_c);
  if (z_a.rows() != c_a.rows()) {
    throw Error(ErrorCode::DimMismatch, "Z and C disagree on the batch size");
  }

  auto inst = contrastive_term(z_a, z_b, tau_i, cfg.exclude_self, true);
  auto clus = contrastive_term(c_a.transposed(), c_b.transposed(), tau_c, cfg.exclude_self,
                               true);
  const Real h = view_entropy(c_a) + view_entropy(c_b);

  LossGradients<Real> out;
  out.loss = LossBreakdown::from_components(inst.value, clus.value, h);
  out.z_a = std::move(inst.grad_a);
  out.z_b = std::move(inst.grad_b);
  out.c_a = clus.grad_a.transposed();
  out.c_b = clus.grad_b.transposed();

  // L_C subtracts H, so the entropy gradient enters with a minus sign.
  const Matrix<Real> dh_a = view_entropy_gradient(c_a);
  const Matrix<Real> dh_b = view_entropy_gradient(c_b);
  auto ga = out.c_a.values();
  auto gb = out.c_b.values();
  for (std::size_t i = 0; i < ga.size(); ++i) {
    ga[i] -= dh_a.values()[i];
    gb[i] -= dh_b.values()[i];
  }
  return out;
}

#define UPDP_INSTANTIATE(Real)                                                               \
  template Real instance_loss(const Matrix<Real>&, const Matrix<Real>&, Real, bool);         \
  template Real cluster_contrastive(const Matrix<Real>&, const Matrix<Real>&, Real, bool);   \
  template Real assignment_entropy(const Matrix<Real>&, const Matrix<Real>&);                \
  template std::pair<Matrix<Real>, Matrix<Real>> assignment_entropy_gradient(                \
      const Matrix<Real>&, const Matrix<Real>&);                                             \
  template LossBreakdown total_loss(const Matrix<Real>&, const Matrix<Real>&,                \
                                    const Matrix<Real>&, const Matrix<Real>&,                \
                                    const LossConfig&);                                      \
  template LossGradients<Real> total_loss_with_gradients(                                    \
      const Matrix<Real>&, const Matrix<Real>&, const Matrix<Real>&, const Matrix<Real>&,    \
      const LossConfig&);

UPDP_INSTANTIATE(float)
UPDP_INSTANTIATE(double)
UPDP_INSTANTIATE(long double)

#undef UPDP_INSTANTIATE

}  // namespace updp
