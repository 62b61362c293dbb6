#pragma once

// Single-pass budgeted selection: one pick per cluster, either the most
// confident member (cluster head) or the medoid under mean cosine
// dissimilarity, plus random and k-means medoid baselines.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "updp/dataset.hpp"
#include "updp/model.hpp"
#include "updp/numerics.hpp"

namespace updp {

enum class Strategy {
  Random,
  Confidence,         // most confident member of each cluster-head cluster
  MedoidFused,        // medoid on fused features h
  MedoidInstance,     // medoid on instance-head features z
  KMeansMedoid,       // k-means + medoid on the stored image features
  KMeansMedoidFused,  // k-means + medoid on fused features h
};

std::string_view strategy_name(Strategy strategy);
/// Throws InvalidConfig on an unknown name.
Strategy parse_strategy(std::string_view name);

struct ClusterAssignment {
  DenseMatrix soft;                 // N x M
  std::vector<std::size_t> hard;    // argmax per row, ties to the lowest cluster id
  std::vector<double> confidence;   // soft[i][hard[i]]

  std::size_t num_clusters() const noexcept { return soft.cols(); }
};

ClusterAssignment assignment_from_soft(DenseMatrix soft);

/// Encodes every instance's first view in fixed-size chunks (rows are
/// independent, so chunking does not change any value).
template <typename Real>
Encoding<double> encode_dataset(const ModelState<Real>& model, const EmbeddingDataset& dataset);

template <typename Real>
ClusterAssignment assign_clusters(const ModelState<Real>& model, const EmbeddingDataset& dataset);

struct Provenance {
  Strategy strategy = Strategy::Random;
  std::optional<std::size_t> cluster_id;
  double score = 0.0;

  bool operator==(const Provenance&) const = default;
};

struct SelectionResult {
  Strategy strategy = Strategy::Random;
  std::size_t budget = 0;
  std::vector<std::size_t> indices;
  std::vector<Provenance> provenance;

  bool operator==(const SelectionResult&) const = default;
};

SelectionResult select_confidence(const ClusterAssignment& assignment, std::size_t budget);

SelectionResult select_medoid(const DenseMatrix& features, const ClusterAssignment& assignment,
                              std::size_t budget, Strategy tag = Strategy::MedoidFused);

SelectionResult select_random(std::size_t dataset_size, std::size_t budget, std::uint64_t seed);

SelectionResult select_kmeans_medoid(const DenseMatrix& features, std::size_t budget,
                                     std::uint64_t seed, Strategy tag = Strategy::KMeansMedoid);

/// (1/N_k) sum_j (1 - cos(f_i, f_j)) for every member i of `members`, self
/// term included.
std::vector<double> mean_dissimilarities(const DenseMatrix& features,
                                         std::span<const std::size_t> members);

struct KMeansResult {
  std::vector<std::size_t> labels;
  DenseMatrix centroids;
  double inertia = 0.0;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Runs on the rows as given.
KMeansResult kmeans(const DenseMatrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iterations = 100, double tolerance = 1e-6);

}  // namespace updp
