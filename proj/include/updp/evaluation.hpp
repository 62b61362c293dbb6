#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "updp/numerics.hpp"

namespace updp {

/// KNN by cosine distance with majority vote. Neighbor ties go to the lower
/// labeled index, vote ties to the smaller class id. Returns the fraction of
/// test points classified correctly.
double knn_accuracy(const DenseMatrix& labeled, std::span<const std::int32_t> labeled_labels,
                    const DenseMatrix& test, std::span<const std::int32_t> test_labels,
                    std::size_t k);

/// k = 5, falling back to 1 when fewer than 5 labeled points exist.
std::size_t default_knn_k(std::size_t labeled_count);

struct ProbeConfig {
  double learning_rate = 0.1;
  std::size_t iterations = 500;
  double weight_decay = 1e-4;
  /// L2-normalize rows before fitting (and before predicting).
  bool normalize_features = true;
};

struct LinearProbe {
  DenseMatrix weights;  // K x d
  std::vector<double> bias;

  std::int32_t predict(std::span<const double> x) const;
};

/// Multinomial logistic regression, full-batch gradient descent from zero.
/// Throws SingleClass when the labels hold fewer than 2 distinct classes.
LinearProbe fit_linear_probe(const DenseMatrix& features, std::span<const std::int32_t> labels,
                             std::size_t num_classes, const ProbeConfig& cfg = {});

/// Fits on the labeled subset and returns accuracy on the test set.
double linear_probe(const DenseMatrix& labeled, std::span<const std::int32_t> labeled_labels,
                    const DenseMatrix& test, std::span<const std::int32_t> test_labels,
                    const ProbeConfig& cfg = {});

/// KL(p || uniform) = sum_i p_i ln(p_i K), p = class frequencies of the
/// selection. Throws EmptySelection.
double kl_balance(std::span<const std::int32_t> selected_labels, std::size_t num_classes);

/// Fraction of the K classes hit at least once. Throws EmptySelection.
double class_coverage(std::span<const std::int32_t> selected_labels, std::size_t num_classes);

std::vector<std::size_t> class_counts(std::span<const std::int32_t> labels,
                                      std::size_t num_classes);

struct EvalReport {
  double knn_accuracy = 0.0;
  /// KNN on fused features; present when the run has a model.
  std::optional<double> knn_accuracy_fused;
  /// Absent when the selection holds a single class.
  std::optional<double> probe_accuracy;
  double kl_balance = 0.0;
  double class_coverage = 0.0;
  std::vector<std::size_t> class_counts;
  std::size_t knn_k = 0;
};

}  // namespace updp
