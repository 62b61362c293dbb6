#pragma once

// Finite-difference check of the full training gradient (fuse, heads,
// normalization, softmax, both contrastive terms and the entropy) over a set
// of small random configurations, in double precision.

#include <cstdint>
#include <vector>

#include "updp/losses.hpp"
#include "updp/model.hpp"
#include "updp/numerics.hpp"

namespace updp {

struct GradientCase {
  ModelConfig model;
  std::size_t batch = 0;
  LossConfig loss;
  GradCheckReport report;
};

struct GradientSuiteReport {
  std::vector<GradientCase> cases;
  double max_relative_error = 0.0;
  double tolerance = 0.0;

  bool passed() const noexcept { return max_relative_error < tolerance; }
};

/// Random cases with N <= 8 and M <= 4. The prompt is scaled up so that the
/// attention weights are far from uniform and its gradient is exercised.
GradientSuiteReport run_gradient_suite(std::uint64_t seed, std::size_t cases = 20,
                                       double eps = 1e-6, double tolerance = 1e-4);

}  // namespace updp
