#pragma once

// Brute-force reference implementations used by the unit and acceptance
// tests. They work on nested vectors with scalar loops and share no code with
// the library beyond the Matrix container used to pass data in.

#include <cmath>
#include <cstddef>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "updp/numerics.hpp"
#include "updp/random.hpp"

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline Rows rows_of(const updp::DenseMatrix& m) {
  Rows out(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

inline Rows columns_of(const updp::DenseMatrix& m) {
  Rows out(m.cols(), std::vector<double>(m.rows()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[j][i] = m(i, j);
  return out;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    dot += a[d] * b[d];
    na += a[d] * a[d];
    nb += b[d] * b[d];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Mean over anchors of -log(exp(pos) / sum over both views of exp(sim)), with
// each view taking a turn as the anchor side.
inline double contrastive(const Rows& a, const Rows& b, double tau, bool exclude_self) {
  const std::size_t n = a.size();
  const Rows* views[2] = {&a, &b};
  double total = 0.0;
  for (int side = 0; side < 2; ++side) {
    const Rows& anchor = *views[side];
    const Rows& other = *views[1 - side];
    for (std::size_t i = 0; i < n; ++i) {
      double denom = 0.0;
      for (int k = 0; k < 2; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
          if (exclude_self && k == side && j == i) continue;
          denom += std::exp(cosine(anchor[i], (*views[k])[j]) / tau);
        }
      }
      const double pos = std::exp(cosine(anchor[i], other[i]) / tau);
      total += -std::log(pos / denom);
    }
  }
  return total / (2.0 * static_cast<double>(n));
}

inline double instance_loss(const updp::DenseMatrix& za, const updp::DenseMatrix& zb, double tau,
                            bool exclude_self) {
  return contrastive(rows_of(za), rows_of(zb), tau, exclude_self);
}

inline double cluster_contrastive(const updp::DenseMatrix& ca, const updp::DenseMatrix& cb,
                                  double tau, bool exclude_self) {
  return contrastive(columns_of(ca), columns_of(cb), tau, exclude_self);
}

inline double entropy(const updp::DenseMatrix& ca, const updp::DenseMatrix& cb) {
  double h = 0.0;
  for (const updp::DenseMatrix* c : {&ca, &cb}) {
    for (std::size_t m = 0; m < c->cols(); ++m) {
      double p = 0.0;
      for (std::size_t i = 0; i < c->rows(); ++i) p += (*c)(i, m);
      p /= static_cast<double>(c->rows());
      if (p > 0.0) h -= p * std::log(p);
    }
  }
  return h;
}

// Mean cosine dissimilarity of every member to all members (self included).
inline std::vector<double> medoid_scores(const updp::DenseMatrix& features,
                                         const std::vector<std::size_t>& members) {
  const Rows f = rows_of(features);
  std::vector<double> scores;
  for (const std::size_t i : members) {
    double s = 0.0;
    for (const std::size_t j : members) s += 1.0 - cosine(f[i], f[j]);
    scores.push_back(s / static_cast<double>(members.size()));
  }
  return scores;
}

// Index (into the dataset) of the minimal score; first member within 1e-12 of
// the minimum, since the self term 1 - cos(a, a) is not exactly 0 here.
inline std::size_t medoid(const updp::DenseMatrix& features,
                          const std::vector<std::size_t>& members) {
  const std::vector<double> scores = medoid_scores(features, members);
  double lowest = scores[0];
  for (const double s : scores) lowest = std::min(lowest, s);
  std::size_t k = 0;
  while (scores[k] > lowest + 1e-12) ++k;
  return members[k];
}

inline double kl_to_uniform(const std::vector<std::size_t>& counts) {
  double total = 0.0;
  for (const std::size_t c : counts) total += static_cast<double>(c);
  double kl = 0.0;
  for (const std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    kl += p * std::log(p * static_cast<double>(counts.size()));
  }
  return kl;
}

// k nearest by cosine, ties to the lower index; votes ties to the lower class.
inline std::int32_t knn_predict(const Rows& labeled, const std::vector<std::int32_t>& labels,
                                const std::vector<double>& query, std::size_t k,
                                std::size_t num_classes) {
  std::vector<bool> used(labeled.size(), false);
  std::vector<std::size_t> votes(num_classes, 0);
  for (std::size_t round = 0; round < k; ++round) {
    std::size_t best = labeled.size();
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < labeled.size(); ++j) {
      if (used[j]) continue;
      const double s = cosine(query, labeled[j]);
      if (s > best_sim) {
        best_sim = s;
        best = j;
      }
    }
    used[best] = true;
    ++votes[static_cast<std::size_t>(labels[best])];
  }
  std::size_t winner = 0;
  for (std::size_t c = 1; c < num_classes; ++c)
    if (votes[c] > votes[winner]) winner = c;
  return static_cast<std::int32_t>(winner);
}

inline updp::DenseMatrix random_matrix(updp::Rng& rng, std::size_t rows, std::size_t cols,
                                       double sd = 1.0) {
  updp::DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal(0.0, sd);
  return m;
}

// Rows drawn from a softmax of Gaussian logits, so every entry is positive.
inline updp::DenseMatrix random_assignment(updp::Rng& rng, std::size_t rows, std::size_t cols,
                                           double logit_sd = 1.5) {
  updp::DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      m(i, j) = std::exp(rng.normal(0.0, logit_sd));
      sum += m(i, j);
    }
    for (std::size_t j = 0; j < cols; ++j) m(i, j) /= sum;
  }
  return m;
}

}  // namespace oracle
