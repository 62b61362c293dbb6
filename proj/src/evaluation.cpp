#include "updp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace updp {

namespace {

void check_labels(const DenseMatrix& features, std::span<const std::int32_t> labels,
                  const char* what) {
  if (features.rows() != labels.size()) {
    throw Error(ErrorCode::DimMismatch, std::string(what) + ": feature rows differ from labels");
  }
  for (const std::int32_t y : labels) {
    if (y < 0) throw Error(ErrorCode::LabelOutOfRange, std::string(what) + ": negative label");
  }
}

std::size_t max_class(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
  std::int32_t top = -1;
  for (const std::int32_t y : a) top = std::max(top, y);
  for (const std::int32_t y : b) top = std::max(top, y);
  return static_cast<std::size_t>(top + 1);
}

void check_selection(std::span<const std::int32_t> labels, std::size_t num_classes) {
  if (labels.empty()) throw Error(ErrorCode::EmptySelection, "selection is empty");
  if (num_classes == 0) throw Error(ErrorCode::InvalidConfig, "need at least one class");
  for (const std::int32_t y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw Error(ErrorCode::LabelOutOfRange, "selected label outside [0, K)");
    }
  }
}

}  // namespace

std::size_t default_knn_k(std::size_t labeled_count) { return labeled_count < 5 ? 1 : 5; }

double knn_accuracy(const DenseMatrix& labeled, std::span<const std::int32_t> labeled_labels,
                    const DenseMatrix& test, std::span<const std::int32_t> test_labels,
                    std::size_t k) {
  check_labels(labeled, labeled_labels, "knn_accuracy");
  check_labels(test, test_labels, "knn_accuracy");
  if (k == 0 || k > labeled.rows()) {
    throw Error(ErrorCode::NotEnoughNeighbors, "need 1 <= k <= number of labeled points");
  }
  if (test.rows() == 0) throw Error(ErrorCode::EmptyTestSet, "test set is empty");

  const DenseMatrix sims = cosine_sim_matrix(test, labeled);
  const std::size_t num_classes = max_class(labeled_labels, test_labels);
  std::vector<std::size_t> order(labeled.rows());
  std::vector<std::size_t> votes(num_classes);
  std::size_t correct = 0;
  for (std::size_t t = 0; t < test.rows(); ++t) {
    const auto row = sims.row(t);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Highest similarity first; the stable sort keeps lower indices first on ties.
    std::stable_sort(order.begin(), order.end(),
                     [&row](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    std::fill(votes.begin(), votes.end(), 0);
    for (std::size_t j = 0; j < k; ++j) ++votes[static_cast<std::size_t>(labeled_labels[order[j]])];
    const auto winner = std::max_element(votes.begin(), votes.end()) - votes.begin();
    if (winner == test_labels[t]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.rows());
}

std::int32_t LinearProbe::predict(std::span<const double> x) const {
  std::int32_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < weights.rows(); ++c) {
    double score = bias[c];
    const auto w = weights.row(c);
    for (std::size_t d = 0; d < x.size(); ++d) score += w[d] * x[d];
    if (score > best_score) {
      best_score = score;
      best = static_cast<std::int32_t>(c);
    }
  }
  return best;
}

LinearProbe fit_linear_probe(const DenseMatrix& features, std::span<const std::int32_t> labels,
                             std::size_t num_classes, const ProbeConfig& cfg) {
  check_labels(features, labels, "linear_probe");
  std::vector<std::int32_t> distinct(labels.begin(), labels.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2) {
    throw Error(ErrorCode::SingleClass, "linear probe needs at least 2 distinct classes");
  }
  if (static_cast<std::size_t>(distinct.back()) >= num_classes) {
    throw Error(ErrorCode::LabelOutOfRange, "label outside [0, K)");
  }

  const DenseMatrix x = cfg.normalize_features ? l2_normalize_rows(features) : features;
  const std::size_t n = x.rows();
  const std::size_t dim = x.cols();
  LinearProbe probe{DenseMatrix(num_classes, dim), std::vector<double>(num_classes, 0.0)};

  DenseMatrix grad_w(num_classes, dim);
  std::vector<double> grad_b(num_classes);
  for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
    const DenseMatrix probs = softmax_rows(affine(x, probe.weights, std::span<const double>(probe.bias)));
    std::fill(grad_w.values().begin(), grad_w.values().end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = probs.row(i);
      const auto xi = x.row(i);
      for (std::size_t c = 0; c < num_classes; ++c) {
        const double err = (p[c] - (static_cast<std::size_t>(labels[i]) == c ? 1.0 : 0.0)) /
                           static_cast<double>(n);
        grad_b[c] += err;
        auto gw = grad_w.row(c);
        for (std::size_t d = 0; d < dim; ++d) gw[d] += err * xi[d];
      }
    }
    auto w = probe.weights.values();
    const auto gw = grad_w.values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      w[j] -= cfg.learning_rate * (gw[j] + cfg.weight_decay * w[j]);
    }
    for (std::size_t c = 0; c < num_classes; ++c) probe.bias[c] -= cfg.learning_rate * grad_b[c];
  }
  return probe;
}

double linear_probe(const DenseMatrix& labeled, std::span<const std::int32_t> labeled_labels,
                    const DenseMatrix& test, std::span<const std::int32_t> test_labels,
                    const ProbeConfig& cfg) {
  check_labels(test, test_labels, "linear_probe");
  if (test.rows() == 0) throw Error(ErrorCode::EmptyTestSet, "test set is empty");
  const LinearProbe probe =
      fit_linear_probe(labeled, labeled_labels, max_class(labeled_labels, test_labels), cfg);
  const DenseMatrix x = cfg.normalize_features ? l2_normalize_rows(test) : test;
  std::size_t correct = 0;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    if (probe.predict(x.row(t)) == test_labels[t]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(x.rows());
}

std::vector<std::size_t> class_counts(std::span<const std::int32_t> labels,
                                      std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const std::int32_t y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw Error(ErrorCode::LabelOutOfRange, "label outside [0, K)");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

double kl_balance(std::span<const std::int32_t> selected_labels, std::size_t num_classes) {
  check_selection(selected_labels, num_classes);
  const double total = static_cast<double>(selected_labels.size());
  double kl = 0.0;
  for (const std::size_t count : class_counts(selected_labels, num_classes)) {
    if (count == 0) continue;
    const double p = static_cast<double>(count) / total;
    // p K = count K / total, formed from integers so uniform counts give ln 1 = 0 exactly.
    kl += p * std::log(static_cast<double>(count * num_classes) / total);
  }
  return std::max(kl, 0.0);
}

double class_coverage(std::span<const std::int32_t> selected_labels, std::size_t num_classes) {
  check_selection(selected_labels, num_classes);
  const auto counts = class_counts(selected_labels, num_classes);
  const auto hit = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
  return static_cast<double>(hit) / static_cast<double>(num_classes);
}

}  // namespace updp
