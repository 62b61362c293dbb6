#include "updp/gradcheck.hpp"

#include <algorithm>

#include "updp/random.hpp"

namespace updp {

namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

DenseMatrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double sd) {
  DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal(0.0, sd);
  return m;
}

using Wide = long double;

template <typename To, typename From>
MlpHead<To> cast_head(const MlpHead<From>& h) {
  return {h.w1.template cast<To>(), std::vector<To>(h.b1.begin(), h.b1.end()),
          h.w2.template cast<To>(), std::vector<To>(h.b2.begin(), h.b2.end())};
}

ModelState<Wide> widen(const ModelState<double>& m) {
  const FuserWeights<double>& w = m.fuser.weights();
  FuserWeights<Wide> wide{w.query.cast<Wide>(), w.key.cast<Wide>(), w.value.cast<Wide>(),
                          w.output.cast<Wide>(), w.residual.cast<Wide>()};
  return ModelState<Wide>{m.config,
                          PromptContext<Wide>{m.prompt.vectors.cast<Wide>()},
                          FrozenFuser<Wide>::from_weights(m.fuser.seed(), std::move(wide)),
                          cast_head<Wide>(m.instance_head),
                          cast_head<Wide>(m.cluster_head),
                          m.rng_seed};
}

Wide wide_total(const ModelState<Wide>& model, const Matrix<Wide>& x_a, const Matrix<Wide>& x_b,
                const LossConfig& cfg) {
  const ForwardBatch<Wide> out = forward(model, x_a, x_b);
  return instance_loss(out.z_a, out.z_b, static_cast<Wide>(cfg.tau_instance), cfg.exclude_self) +
         cluster_contrastive(out.c_a, out.c_b, static_cast<Wide>(cfg.tau_cluster),
                             cfg.exclude_self) -
         assignment_entropy(out.c_a, out.c_b);
}

}  // namespace

GradientSuiteReport run_gradient_suite(std::uint64_t seed, std::size_t cases, double eps,
                                       double tolerance) {
  GradientSuiteReport suite;
  suite.tolerance = tolerance;
  for (std::size_t c = 0; c < cases; ++c) {
    Rng rng(derive_seed(seed, "gradcheck", c));
    GradientCase gc;
    gc.batch = pick(rng, 2, 8);
    gc.model.d_in = pick(rng, 3, 6);
    gc.model.d_w = pick(rng, 2, 4);
    gc.model.d_h = pick(rng, 3, 6);
    gc.model.d_z = pick(rng, 3, 5);
    gc.model.d_hidden = pick(rng, 6, 10);
    gc.model.context_length = pick(rng, 1, 3);
    gc.model.num_clusters = pick(rng, 2, 4);
    gc.model.fuser_seed = rng.next_u64();
    gc.loss.tau_instance = rng.uniform(0.3, 1.0);
    gc.loss.tau_cluster = rng.uniform(0.5, 1.5);
    gc.loss.exclude_self = (c % 2) == 1;

    ModelState<double> model = init_model<double>(gc.model, rng.next_u64());
    model.prompt.vectors = gaussian(rng, gc.model.context_length, gc.model.d_w, 1.0);
    const DenseMatrix x_a = gaussian(rng, gc.batch, gc.model.d_in, 1.0);
    const DenseMatrix x_b = gaussian(rng, gc.batch, gc.model.d_in, 1.0);

    // The reference side evaluates the same graph in extended precision and
    // returns f(p) - f(p0), so the central difference is not swamped by the
    // rounding of f itself.
    ModelState<double> probe = model;
    ModelState<Wide> wide = widen(model);
    const Matrix<Wide> wx_a = x_a.cast<Wide>();
    const Matrix<Wide> wx_b = x_b.cast<Wide>();
    const Wide base = wide_total(wide, wx_a, wx_b, gc.loss);
    const DifferentiableFunction fn{
        [&](std::span<const double> p) {
          const std::vector<Wide> wp(p.begin(), p.end());
          set_trainable_parameters<Wide>(wide, wp);
          return static_cast<double>(wide_total(wide, wx_a, wx_b, gc.loss) - base);
        },
        [&](std::span<const double> p) {
          set_trainable_parameters(probe, p);
          return loss_and_gradient(probe, x_a, x_b, gc.loss).gradient;
        }};
    const std::vector<double> params = trainable_parameters(model);
    gc.report = finite_diff_check(fn, params, eps);
    suite.max_relative_error = std::max(suite.max_relative_error, gc.report.max_relative_error);
    suite.cases.push_back(gc);
  }
  return suite;
}

}  // namespace updp
