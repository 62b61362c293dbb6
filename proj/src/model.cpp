#include "updp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "updp/random.hpp"

namespace updp {

void ModelConfig::validate() const {
  if (d_in == 0 || d_w == 0 || d_h == 0 || d_z == 0 || context_length == 0) {
    throw Error(ErrorCode::InvalidConfig, "model widths and context length must be positive");
  }
  if (num_clusters < 2) {
    throw Error(ErrorCode::InvalidConfig, "the cluster head needs at least 2 clusters");
  }
}

namespace {

template <typename Real>
MlpHead<Real> init_head(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out) {
  auto fill = [&rng](std::span<Real> values, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Real& v : values) v = static_cast<Real>(rng.uniform(-bound, bound));
  };
  MlpHead<Real> head;
  head.w1 = Matrix<Real>(hidden, in);
  head.b1.assign(hidden, Real{0});
  head.w2 = Matrix<Real>(out, hidden);
  head.b2.assign(out, Real{0});
  fill(head.w1.values(), in);
  fill(head.b1, in);
  fill(head.w2.values(), hidden);
  fill(head.b2, hidden);
  return head;
}

template <typename Real>
struct HeadTrace {
  Matrix<Real> pre_hidden;
  Matrix<Real> hidden;
  Matrix<Real> output;
};

template <typename Real>
HeadTrace<Real> head_forward(const MlpHead<Real>& head, const Matrix<Real>& input) {
  HeadTrace<Real> t;
  t.pre_hidden = affine(input, head.w1, std::span<const Real>(head.b1));
  t.hidden = relu(t.pre_hidden);
  t.output = affine(t.hidden, head.w2, std::span<const Real>(head.b2));
  return t;
}

template <typename Real>
struct HeadGradient {
  Matrix<Real> w1;
  std::vector<Real> b1;
  Matrix<Real> w2;
  std::vector<Real> b2;
  Matrix<Real> input;
};

template <typename Real>
HeadGradient<Real> head_backward(const MlpHead<Real>& head, const HeadTrace<Real>& trace,
                                 const Matrix<Real>& input, const Matrix<Real>& grad_output) {
  HeadGradient<Real> g;
  g.w2 = matmul_at(grad_output, trace.hidden);
  g.b2 = column_sums(grad_output);
  const Matrix<Real> grad_pre = relu_backward(trace.pre_hidden, matmul(grad_output, head.w2));
  g.w1 = matmul_at(grad_pre, input);
  g.b1 = column_sums(grad_pre);
  g.input = matmul(grad_pre, head.w1);
  return g;
}

template <typename Real>
Matrix<Real> stack_views(const Matrix<Real>& x_a, const Matrix<Real>& x_b) {
  if (x_a.rows() != x_b.rows() || x_a.cols() != x_b.cols()) {
    throw Error(ErrorCode::DimMismatch, "the two views must have the same shape");
  }
  std::vector<Real> data;
  data.reserve(x_a.size() + x_b.size());
  data.insert(data.end(), x_a.values().begin(), x_a.values().end());
  data.insert(data.end(), x_b.values().begin(), x_b.values().end());
  return Matrix<Real>(x_a.rows() * 2, x_a.cols(), std::move(data));
}

template <typename Real>
std::pair<Matrix<Real>, Matrix<Real>> unstack(const Matrix<Real>& m) {
  const std::size_t half = m.rows() / 2;
  const auto values = m.values();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(half * m.cols());
  return {Matrix<Real>(half, m.cols(), std::vector<Real>(values.begin(), mid)),
          Matrix<Real>(half, m.cols(), std::vector<Real>(mid, values.end()))};
}

// Forward intermediates for a stacked batch of both views.
template <typename Real>
struct GraphTrace {
  FuseTrace<Real> fuse;
  HeadTrace<Real> instance;
  HeadTrace<Real> cluster;
  Matrix<Real> z;
  Matrix<Real> c;
};

template <typename Real>
GraphTrace<Real> graph_forward(const ModelState<Real>& model, const Matrix<Real>& x) {
  GraphTrace<Real> t;
  t.fuse = model.fuser.fuse_with_trace(x, model.prompt.vectors);
  t.instance = head_forward(model.instance_head, t.fuse.fused);
  t.cluster = head_forward(model.cluster_head, t.fuse.fused);
  t.z = l2_normalize_rows(t.instance.output);
  t.c = softmax_rows(t.cluster.output);
  return t;
}

template <typename Real>
void append(std::vector<Real>& out, std::span<const Real> values) {
  out.insert(out.end(), values.begin(), values.end());
}

template <typename Real>
void append_head(std::vector<Real>& out, const MlpHead<Real>& head) {
  append<Real>(out, head.w1.values());
  append<Real>(out, head.b1);
  append<Real>(out, head.w2.values());
  append<Real>(out, head.b2);
}

template <typename Real>
std::size_t take(std::span<Real> dst, std::span<const Real> src, std::size_t offset) {
  std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
  return offset + dst.size();
}

template <typename Real>
std::size_t take_head(MlpHead<Real>& head, std::span<const Real> src, std::size_t offset) {
  offset = take<Real>(head.w1.values(), src, offset);
  offset = take<Real>(head.b1, src, offset);
  offset = take<Real>(head.w2.values(), src, offset);
  return take<Real>(head.b2, src, offset);
}

}  // namespace

template <typename Real>
ModelState<Real> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PromptContext<Real> prompt{Matrix<Real>(cfg.context_length, cfg.d_w)};
  Rng prompt_rng(derive_seed(seed, "prompt"));
  for (Real& v : prompt.vectors.values()) v = static_cast<Real>(prompt_rng.normal(0.0, 0.02));

  Rng instance_rng(derive_seed(seed, "instance_head"));
  Rng cluster_rng(derive_seed(seed, "cluster_head"));
  return ModelState<Real>{
      cfg,
      std::move(prompt),
      FrozenFuser<Real>::create(cfg.fuser_seed, cfg.d_in, cfg.d_w, cfg.d_h),
      init_head<Real>(instance_rng, cfg.d_h, cfg.hidden_width(), cfg.d_z),
      init_head<Real>(cluster_rng, cfg.d_h, cfg.hidden_width(), cfg.num_clusters),
      seed,
  };
}

template <typename Real>
Encoding<Real> encode(const ModelState<Real>& model, const Matrix<Real>& x) {
  GraphTrace<Real> t = graph_forward(model, x);
  return Encoding<Real>{std::move(t.fuse.fused), std::move(t.z), std::move(t.c)};
}

template <typename Real>
ForwardBatch<Real> forward(const ModelState<Real>& model, const Matrix<Real>& x_a,
                           const Matrix<Real>& x_b) {
  // Rows never interact before the losses, so both views share one pass.
  Encoding<Real> both = encode(model, stack_views(x_a, x_b));
  ForwardBatch<Real> out;
  std::tie(out.h_a, out.h_b) = unstack(both.h);
  std::tie(out.z_a, out.z_b) = unstack(both.z);
  std::tie(out.c_a, out.c_b) = unstack(both.c);
  return out;
}

template <typename Real>
StepEvaluation<Real> loss_and_gradient(const ModelState<Real>& model, const Matrix<Real>& x_a,
                                       const Matrix<Real>& x_b, const LossConfig& loss_cfg) {
  const Matrix<Real> x = stack_views(x_a, x_b);
  const GraphTrace<Real> t = graph_forward(model, x);
  auto [z_a, z_b] = unstack(t.z);
  auto [c_a, c_b] = unstack(t.c);
  const LossGradients<Real> lg = total_loss_with_gradients(z_a, z_b, c_a, c_b, loss_cfg);

  const Matrix<Real> grad_z = stack_views(lg.z_a, lg.z_b);
  const Matrix<Real> grad_c = stack_views(lg.c_a, lg.c_b);
  const Matrix<Real> grad_inst_out = l2_normalize_rows_backward(t.instance.output, t.z, grad_z);
  const Matrix<Real> grad_clus_out = softmax_rows_backward(t.c, grad_c);

  const HeadGradient<Real> gi =
      head_backward(model.instance_head, t.instance, t.fuse.fused, grad_inst_out);
  const HeadGradient<Real> gc =
      head_backward(model.cluster_head, t.cluster, t.fuse.fused, grad_clus_out);
  Matrix<Real> grad_fused = gi.input;
  add_in_place(grad_fused, gc.input);
  const Matrix<Real> grad_prompt =
      model.fuser.prompt_gradient(t.fuse, model.prompt.vectors, grad_fused);

  StepEvaluation<Real> out;
  out.loss = lg.loss;
  out.gradient.reserve(trainable_parameter_count(model));
  append<Real>(out.gradient, grad_prompt.values());
  for (const HeadGradient<Real>* g : {&gi, &gc}) {
    append<Real>(out.gradient, g->w1.values());
    append<Real>(out.gradient, g->b1);
    append<Real>(out.gradient, g->w2.values());
    append<Real>(out.gradient, g->b2);
  }
  return out;
}

template <typename Real>
std::size_t trainable_parameter_count(const ModelState<Real>& model) {
  return model.prompt.vectors.size() + model.instance_head.parameter_count() +
         model.cluster_head.parameter_count();
}

template <typename Real>
std::vector<Real> trainable_parameters(const ModelState<Real>& model) {
  std::vector<Real> out;
  out.reserve(trainable_parameter_count(model));
  append<Real>(out, model.prompt.vectors.values());
  append_head(out, model.instance_head);
  append_head(out, model.cluster_head);
  return out;
}

template <typename Real>
void set_trainable_parameters(ModelState<Real>& model, std::span<const Real> params) {
  if (params.size() != trainable_parameter_count(model)) {
    throw Error(ErrorCode::DimMismatch, "parameter vector length differs from the model");
  }
  std::size_t offset = take<Real>(model.prompt.vectors.values(), params, 0);
  offset = take_head(model.instance_head, params, offset);
  take_head(model.cluster_head, params, offset);
}

template <typename Real>
void replace_prompt(ModelState<Real>& model, const PromptContext<Real>& prompt) {
  if (prompt.width() != model.prompt.width() || prompt.length() == 0) {
    throw Error(ErrorCode::DimMismatch, "prompt width differs from the fuser's d_w");
  }
  if (!all_finite(prompt.vectors)) {
    throw Error(ErrorCode::NonFiniteFeature, "prompt contains non-finite entries");
  }
  model.prompt = prompt;
  model.config.context_length = prompt.length();
}

template <typename Real>
std::string parameter_checksum(const ModelState<Real>& model) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const Real v : trainable_parameters(model)) {
    unsigned char bytes[sizeof(Real)];
    std::memcpy(bytes, &v, sizeof(Real));
    for (const unsigned char b : bytes) {
      hash ^= b;
      hash *= 0x100000001b3ULL;
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << hash;
  return out.str();
}

#define UPDP_INSTANTIATE(Real)                                                                 \
  template ModelState<Real> init_model(const ModelConfig&, std::uint64_t);                     \
  template Encoding<Real> encode(const ModelState<Real>&, const Matrix<Real>&);                \
  template ForwardBatch<Real> forward(const ModelState<Real>&, const Matrix<Real>&,            \
                                      const Matrix<Real>&);                                    \
  template StepEvaluation<Real> loss_and_gradient(const ModelState<Real>&,                     \
                                                  const Matrix<Real>&, const Matrix<Real>&,    \
                                                  const LossConfig&);                          \
  template std::size_t trainable_parameter_count(const ModelState<Real>&);                     \
  template std::vector<Real> trainable_parameters(const ModelState<Real>&);                    \
  template void set_trainable_parameters(ModelState<Real>&, std::span<const Real>);            \
  template void replace_prompt(ModelState<Real>&, const PromptContext<Real>&);                 \
  template std::string parameter_checksum(const ModelState<Real>&);

UPDP_INSTANTIATE(float)
UPDP_INSTANTIATE(double)
UPDP_INSTANTIATE(long double)

#undef UPDP_INSTANTIATE

}  // namespace updp
