#include "updp/selection.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

#include "updp/random.hpp"

namespace updp {

std::string_view strategy_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::Random: return "random";
    case Strategy::Confidence: return "confidence";
    case Strategy::MedoidFused: return "medoid-f";
    case Strategy::MedoidInstance: return "medoid-z";
    case Strategy::KMeansMedoid: return "kmeans-medoid";
    case Strategy::KMeansMedoidFused: return "kmeans-medoid-f";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (const Strategy s : {Strategy::Random, Strategy::Confidence, Strategy::MedoidFused,
                           Strategy::MedoidInstance, Strategy::KMeansMedoid,
                           Strategy::KMeansMedoidFused}) {
    if (strategy_name(s) == name) return s;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown strategy '" + std::string(name) + "'");
}

ClusterAssignment assignment_from_soft(DenseMatrix soft) {
  ClusterAssignment a;
  a.hard.resize(soft.rows());
  a.confidence.resize(soft.rows());
  for (std::size_t i = 0; i < soft.rows(); ++i) {
    const auto row = soft.row(i);
    std::size_t best = 0;
    for (std::size_t m = 1; m < row.size(); ++m) {
      if (row[m] > row[best]) best = m;
    }
    a.hard[i] = best;
    a.confidence[i] = row.empty() ? 0.0 : row[best];
  }
  a.soft = std::move(soft);
  return a;
}

template <typename Real>
Encoding<double> encode_dataset(const ModelState<Real>& model, const EmbeddingDataset& dataset) {
  if (dataset.dim != model.fuser.d_in()) {
    throw Error(ErrorCode::DimMismatch, "dataset dimension differs from the model's d_in");
  }
  constexpr std::size_t kChunk = 1024;
  const std::size_t n = dataset.count;
  Encoding<double> out{DenseMatrix(n, model.fuser.d_h()),
                       DenseMatrix(n, model.config.d_z),
                       DenseMatrix(n, model.num_clusters())};
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t end = std::min(n, begin + kChunk);
    Matrix<Real> x(end - begin, dataset.dim);
    for (std::size_t i = begin; i < end; ++i) {
      const auto src = dataset.feature(i, 0);
      std::copy(src.begin(), src.end(), x.row(i - begin).begin());
    }
    const Encoding<Real> chunk = encode(model, x);
    auto copy_rows = [begin](const Matrix<Real>& src, DenseMatrix& dst) {
      std::copy(src.values().begin(), src.values().end(),
                dst.values().begin() + static_cast<std::ptrdiff_t>(begin * dst.cols()));
    };
    copy_rows(chunk.h, out.h);
    copy_rows(chunk.z, out.z);
    copy_rows(chunk.c, out.c);
  }
  return out;
}

template <typename Real>
ClusterAssignment assign_clusters(const ModelState<Real>& model, const EmbeddingDataset& dataset) {
  return assignment_from_soft(encode_dataset(model, dataset).c);
}

namespace {

void check_budget(std::size_t budget, std::size_t n) {
  if (budget == 0) throw Error(ErrorCode::InvalidConfig, "budget must be at least 1");
  if (budget > n) {
    throw Error(ErrorCode::BudgetExceedsDataset,
                "budget " + std::to_string(budget) + " exceeds dataset size " + std::to_string(n));
  }
}

struct Pick {
  std::size_t index;
  double score;
};

using PickFn = std::function<Pick(std::size_t cluster, std::span<const std::size_t> members)>;

// Shared cluster-to-selection logic. One pick per nonempty cluster; with more
// nonempty clusters than budget only the largest clusters keep their picks
// (ties to the lower id); with fewer, the remaining slots go to the globally
// highest-ranked unselected instances (ties to the lower index).
SelectionResult select_per_cluster(Strategy tag, std::span<const std::size_t> hard,
                                   std::size_t num_clusters, std::span<const double> fill_rank,
                                   std::size_t budget, const PickFn& pick) {
  const std::size_t n = hard.size();
  check_budget(budget, n);

  std::vector<std::vector<std::size_t>> members(num_clusters);
  for (std::size_t i = 0; i < n; ++i) {
    if (hard[i] >= num_clusters) {
      throw Error(ErrorCode::DimMismatch, "cluster label outside [0, M)");
    }
    members[hard[i]].push_back(i);
  }

  std::vector<std::size_t> clusters;
  for (std::size_t c = 0; c < num_clusters; ++c) {
    if (!members[c].empty()) clusters.push_back(c);
  }
  if (clusters.size() > budget) {
    std::stable_sort(clusters.begin(), clusters.end(), [&](std::size_t x, std::size_t y) {
      return members[x].size() > members[y].size();
    });
    clusters.resize(budget);
    std::sort(clusters.begin(), clusters.end());
  }

  SelectionResult result;
  result.strategy = tag;
  result.budget = budget;
  std::vector<bool> taken(n, false);
  for (const std::size_t c : clusters) {
    const Pick p = pick(c, members[c]);
    result.indices.push_back(p.index);
    result.provenance.push_back({tag, c, p.score});
    taken[p.index] = true;
  }

  if (result.indices.size() < budget) {
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i]) rest.push_back(i);
    }
    std::stable_sort(rest.begin(), rest.end(),
                     [&](std::size_t x, std::size_t y) { return fill_rank[x] > fill_rank[y]; });
    for (std::size_t r = 0; result.indices.size() < budget; ++r) {
      result.indices.push_back(rest[r]);
      result.provenance.push_back({tag, hard[rest[r]], fill_rank[rest[r]]});
    }
  }
  return result;
}

Pick medoid_pick(const DenseMatrix& unit, std::span<const std::size_t> members) {
  const std::vector<double> scores = mean_dissimilarities(unit, members);
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] < scores[best]) best = i;
  }
  return {members[best], scores[best]};
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    d += diff * diff;
  }
  return d;
}

}  // namespace

std::vector<double> mean_dissimilarities(const DenseMatrix& features,
                                         std::span<const std::size_t> members) {
  std::vector<std::vector<double>> unit;
  unit.reserve(members.size());
  for (const std::size_t m : members) unit.push_back(l2_normalize<double>(features.row(m)));

  const double count = static_cast<double>(members.size());
  std::vector<double> scores(members.size());
  for (std::size_t i = 0; i < unit.size(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < unit.size(); ++j) {
      // The self term is 0; computing 1 - u.u would leave ulp noise that
      // breaks exact ties between mirrored members.
      if (j == i) continue;
      double dot = 0.0;
      for (std::size_t d = 0; d < unit[i].size(); ++d) dot += unit[i][d] * unit[j][d];
      total += 1.0 - dot;
    }
    scores[i] = total / count;
  }
  return scores;
}

SelectionResult select_confidence(const ClusterAssignment& assignment, std::size_t budget) {
  const auto& conf = assignment.confidence;
  return select_per_cluster(
      Strategy::Confidence, assignment.hard, assignment.num_clusters(), conf, budget,
      [&conf](std::size_t, std::span<const std::size_t> members) {
        std::size_t best = members[0];
        for (const std::size_t i : members) {
          if (conf[i] > conf[best]) best = i;
        }
        return Pick{best, conf[best]};
      });
}

SelectionResult select_medoid(const DenseMatrix& features, const ClusterAssignment& assignment,
                              std::size_t budget, Strategy tag) {
  if (features.rows() != assignment.hard.size()) {
    throw Error(ErrorCode::DimMismatch, "feature rows differ from the assignment size");
  }
  return select_per_cluster(tag, assignment.hard, assignment.num_clusters(),
                            assignment.confidence, budget,
                            [&features](std::size_t, std::span<const std::size_t> members) {
                              return medoid_pick(features, members);
                            });
}

SelectionResult select_random(std::size_t dataset_size, std::size_t budget, std::uint64_t seed) {
  check_budget(budget, dataset_size);
  std::vector<std::size_t> pool(dataset_size);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "random_selection"));
  SelectionResult result;
  result.strategy = Strategy::Random;
  result.budget = budget;
  for (std::size_t i = 0; i < budget; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(dataset_size - i));
    std::swap(pool[i], pool[j]);
    result.indices.push_back(pool[i]);
    result.provenance.push_back({Strategy::Random, std::nullopt, 0.0});
  }
  return result;
}

KMeansResult kmeans(const DenseMatrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iterations, double tolerance) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  if (k == 0 || k > n) {
    throw Error(ErrorCode::BudgetExceedsDataset, "k-means needs 1 <= k <= N");
  }
  Rng rng(derive_seed(seed, "kmeans"));

  // k-means++ seeding.
  KMeansResult result;
  result.centroids = DenseMatrix(k, dim);
  std::vector<bool> is_center(n, false);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t chosen = static_cast<std::size_t>(rng.below(n));
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += is_center[i] ? 0.0 : nearest[i];
      chosen = n;
      if (total > 0.0) {
        double target = rng.uniform() * total;
        for (std::size_t i = 0; i < n; ++i) {
          if (is_center[i] || nearest[i] <= 0.0) continue;
          chosen = i;
          target -= nearest[i];
          if (target < 0.0) break;
        }
      }
      if (chosen == n) {
        // Every remaining point duplicates a center: take a uniform non-center.
        std::vector<std::size_t> free;
        for (std::size_t i = 0; i < n; ++i) {
          if (!is_center[i]) free.push_back(i);
        }
        chosen = free[static_cast<std::size_t>(rng.below(free.size()))];
      }
    }
    is_center[chosen] = true;
    std::copy(points.row(chosen).begin(), points.row(chosen).end(),
              result.centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(points.row(i), points.row(chosen)));
    }
  }

  result.labels.assign(n, 0);
  std::vector<double> distance(n, 0.0);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    result.iterations = iter + 1;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(points.row(i), result.centroids.row(0));
      for (std::size_t c = 1; c < k; ++c) {
        const double d = squared_distance(points.row(i), result.centroids.row(c));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      result.labels[i] = best;
      distance[i] = best_d;
    }

    // Re-seed empty clusters from the point farthest from its centroid.
    std::vector<std::size_t> sizes(k, 0);
    for (const std::size_t l : result.labels) ++sizes[l];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[result.labels[i]] <= 1) continue;
        if (far == n || distance[i] > distance[far]) far = i;
      }
      if (far == n) break;
      --sizes[result.labels[far]];
      result.labels[far] = c;
      sizes[c] = 1;
      distance[far] = 0.0;
    }

    DenseMatrix sums(k, dim);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = sums.row(result.labels[i]);
      const auto src = points.row(i);
      for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;
      auto dst = result.centroids.row(c);
      const auto src = sums.row(c);
      for (std::size_t d = 0; d < dim; ++d) dst[d] = src[d] / static_cast<double>(sizes[c]);
    }

    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      inertia += squared_distance(points.row(i), result.centroids.row(result.labels[i]));
    }
    result.inertia = inertia;
    if (std::isfinite(previous) && std::abs(previous - inertia) <= tolerance * previous) break;
    previous = inertia;
  }
  return result;
}

SelectionResult select_kmeans_medoid(const DenseMatrix& features, std::size_t budget,
                                     std::uint64_t seed, Strategy tag) {
  check_budget(budget, features.rows());
  const DenseMatrix unit = l2_normalize_rows(features);
  const KMeansResult km = kmeans(unit, budget, seed);
  // No confidences here: the fill rank prefers lower indices.
  std::vector<double> rank(features.rows());
  for (std::size_t i = 0; i < rank.size(); ++i) rank[i] = -static_cast<double>(i);
  return select_per_cluster(tag, km.labels, budget, rank, budget,
                            [&unit](std::size_t, std::span<const std::size_t> members) {
                              return medoid_pick(unit, members);
                            });
}

template Encoding<double> encode_dataset(const ModelState<float>&, const EmbeddingDataset&);
template Encoding<double> encode_dataset(const ModelState<double>&, const EmbeddingDataset&);
template ClusterAssignment assign_clusters(const ModelState<float>&, const EmbeddingDataset&);
template ClusterAssignment assign_clusters(const ModelState<double>&, const EmbeddingDataset&);

}  // namespace updp
