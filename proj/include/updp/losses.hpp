#pragma once

// Training objective: instance-level contrastive loss over the rows of Z,
// cluster-level contrastive loss over the columns of C, and the entropy of
// the batch-mean cluster assignment.
//
//   L = L_I + (L_C_contrastive - H(C))
//
// By default the softmax denominators include the anchor's own similarity
// (2N terms for instances, 2M for clusters). `exclude_self` drops it, giving
// the usual NT-Xent form.

#include "updp/numerics.hpp"

namespace updp {

struct LossConfig {
  double tau_instance = 0.5;
  double tau_cluster = 1.0;
  bool exclude_self = false;
};

struct LossBreakdown {
  double l_instance = 0.0;
  double l_cluster_contrastive = 0.0;
  double entropy = 0.0;
  double l_cluster = 0.0;  // l_cluster_contrastive - entropy
  double total = 0.0;      // l_instance + l_cluster

  /// Assembles a breakdown from its three independent components.
  static LossBreakdown from_components(double l_instance, double l_cluster_contrastive,
                                       double entropy);
};

template <typename Real>
Real instance_loss(const Matrix<Real>& z_a, const Matrix<Real>& z_b, Real tau,
                   bool exclude_self = false);

template <typename Real>
Real cluster_contrastive(const Matrix<Real>& c_a, const Matrix<Real>& c_b, Real tau,
                         bool exclude_self = false);

/// Sum over both views of -sum_m P_m ln P_m, P = column means of C.
template <typename Real>
Real assignment_entropy(const Matrix<Real>& c_a, const Matrix<Real>& c_b);

template <typename Real>
LossBreakdown total_loss(const Matrix<Real>& z_a, const Matrix<Real>& z_b,
                         const Matrix<Real>& c_a, const Matrix<Real>& c_b,
                         const LossConfig& cfg);

/// Loss value and d total / d (Z_a, Z_b, C_a, C_b).
template <typename Real>
struct LossGradients {
  LossBreakdown loss;
  Matrix<Real> z_a;
  Matrix<Real> z_b;
  Matrix<Real> c_a;
  Matrix<Real> c_b;
};

template <typename Real>
LossGradients<Real> total_loss_with_gradients(const Matrix<Real>& z_a,
                                              const Matrix<Real>& z_b,
                                              const Matrix<Real>& c_a,
                                              const Matrix<Real>& c_b,
                                              const LossConfig& cfg);

/// Gradient of assignment_entropy w.r.t. each view's assignment matrix.
template <typename Real>
std::pair<Matrix<Real>, Matrix<Real>> assignment_entropy_gradient(const Matrix<Real>& c_a,
                                                                  const Matrix<Real>& c_b);

}  // namespace updp
