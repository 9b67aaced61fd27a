// SPDX-License-Identifier: Apache-2.0

#include "domainshift/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace domainshift {

namespace {

Tensor uniform_init(Rng& rng, Shape shape, double limit) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

DenseLayer::DenseLayer(ParameterStore& ps, const std::string& name, std::size_t in,
                       std::size_t out, Init init, Rng& rng) {
  const double limit = (init == Init::kReluFan)
                           ? std::sqrt(6.0 / static_cast<double>(in))
                           : std::sqrt(6.0 / static_cast<double>(in + out));
  weight = ps.create(name + ".weight", uniform_init(rng, {out, in}, limit));
  bias = ps.create(name + ".bias", Tensor({out}));
}

Tensor DenseLayer::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.shape()[1] != weight.shape()[1])
    throw std::invalid_argument("dense_forward: input " + shape_str(x.shape()) +
                                " does not match weight " + shape_str(weight.shape()));
  return add(matmul(x, transpose(weight)), bias);
}

NormLayer::NormLayer(ParameterStore& ps, const std::string& name, NormKind kind_,
                     std::size_t features) {
  kind = kind_;
  gamma = ps.create(name + ".gamma", Tensor({features}, std::vector<double>(features, 1.0)));
  beta = ps.create(name + ".beta", Tensor({features}));
  if (kind == NormKind::kBatch) {
    running_mean = ps.create(name + ".running_mean", Tensor({features}), false);
    running_var =
        ps.create(name + ".running_var", Tensor({features}, std::vector<double>(features, 1.0)),
                  false);
  }
}

Tensor NormLayer::forward(const Tensor& x, Mode mode) {
  const std::size_t f = gamma.size();
  if (x.rank() < 1 || x.shape().back() != f)
    throw std::invalid_argument("norm_forward: input " + shape_str(x.shape()) +
                                " does not end in " + std::to_string(f) + " features");
  if (kind == NormKind::kLayer)
    return add(multiply(layer_norm(x, epsilon), gamma), beta);

  if (x.rank() != 2)
    throw std::invalid_argument("norm_forward: batch kind expects rank 2, got " +
                                shape_str(x.shape()));
  const std::size_t n = x.shape()[0];
  const bool use_batch_stats = (mode == Mode::kTrain) && !frozen();
  if (use_batch_stats) {
    if (n < 2)
      throw std::invalid_argument("norm_forward: batch kind needs batch size >= 2 in "
                                  "train mode, got " + std::to_string(n));
    Tensor mu = mean(x, 0);
    Tensor centered = subtract(x, mu);
    Tensor var = mean(multiply(centered, centered), 0);
    Tensor out = add(multiply(multiply(centered, pow(add_scalar(var, epsilon), -0.5)), gamma),
                     beta);
    // Running buffers track raw batch statistics off the tape; variance is
    // stored with the unbiased correction.
    const double corr = static_cast<double>(n) / static_cast<double>(n - 1);
    for (std::size_t j = 0; j < f; ++j) {
      running_mean.values()[j] =
          (1.0 - momentum) * running_mean.values()[j] + momentum * mu.values()[j];
      running_var.values()[j] =
          (1.0 - momentum) * running_var.values()[j] + momentum * corr * var.values()[j];
    }
    return out;
  }
  Tensor centered = subtract(x, running_mean);
  Tensor scaled = multiply(centered, pow(add_scalar(running_var, epsilon), -0.5));
  return add(multiply(scaled, gamma), beta);
}

Tensor DropoutLayer::forward(const Tensor& x, Mode mode, Rng& rng) const {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must lie in [0,1)");
  if (mode == Mode::kEval || rate == 0.0) return x;
  Tensor mask(x.shape());
  const double scale = 1.0 / (1.0 - rate);
  for (auto& m : mask.values()) m = rng.bernoulli(rate) ? 0.0 : scale;
  return multiply(x, mask);
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& ps, const std::string& name,
                                       std::size_t heads_, std::size_t model_dim_,
                                       Rng& rng) {
  heads = heads_;
  model_dim = model_dim_;
  if (heads == 0 || model_dim % heads != 0)
    throw std::invalid_argument("mha: model_dim " + std::to_string(model_dim) +
                                " not divisible by " + std::to_string(heads) + " heads");
  wq = DenseLayer(ps, name + ".wq", model_dim, model_dim, Init::kAttention, rng);
  wk = DenseLayer(ps, name + ".wk", model_dim, model_dim, Init::kAttention, rng);
  wv = DenseLayer(ps, name + ".wv", model_dim, model_dim, Init::kAttention, rng);
  wo = DenseLayer(ps, name + ".wo", model_dim, model_dim, Init::kAttention, rng);
}

Tensor MultiHeadAttention::forward(const Tensor& x, const Tensor& mask) const {
  if (x.rank() != 2 || x.shape()[1] != model_dim)
    throw std::invalid_argument("mha_forward: input " + shape_str(x.shape()) +
                                " does not match model_dim " + std::to_string(model_dim));
  const std::size_t seq = x.shape()[0];
  if (mask.size() != seq)
    throw std::invalid_argument("mha_forward: mask " + shape_str(mask.shape()) +
                                " does not cover " + std::to_string(seq) + " tokens");
  bool any_real = false;
  for (double m : mask.values()) any_real = any_real || (m == 1.0);
  if (!any_real) throw std::invalid_argument("mha_forward: every token is masked");

  const std::size_t dh = model_dim / heads;
  Tensor q = wq.forward(x), k = wk.forward(x), v = wv.forward(x);
  std::vector<Tensor> per_head;
  per_head.reserve(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice(q, 1, h * dh, dh);
    Tensor kh = slice(k, 1, h * dh, dh);
    Tensor vh = slice(v, 1, h * dh, dh);
    Tensor scores = multiply_scalar(matmul(qh, transpose(kh)), scale);
    Tensor att = softmax(add_mask(scores, mask));
    per_head.push_back(matmul(att, vh));
  }
  return wo.forward(concat(per_head, 1));
}

EdgeList edges_from_neighbors(const std::vector<std::vector<std::size_t>>& neighbors) {
  EdgeList e;
  e.n_nodes = neighbors.size();
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    if (neighbors[i].empty()) {
      e.src.push_back(i);
      e.dst.push_back(i);
      continue;
    }
    for (std::size_t j : neighbors[i]) {
      e.src.push_back(j);
      e.dst.push_back(i);
    }
  }
  return e;
}

EdgeConvBlock::EdgeConvBlock(ParameterStore& ps, const std::string& name,
                             std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  lin0 = DenseLayer(ps, name + ".lin0", 2 * in_dim, out_dim, Init::kReluFan, rng);
  lin1 = DenseLayer(ps, name + ".lin1", out_dim, out_dim, Init::kReluFan, rng);
  norm = NormLayer(ps, name + ".norm", NormKind::kBatch, out_dim);
}

Tensor EdgeConvBlock::forward(const Tensor& nodes, const EdgeList& edges, Mode mode,
                              Rng& rng) {
  if (nodes.rank() != 2 || nodes.shape()[0] != edges.n_nodes)
    throw std::invalid_argument("edgeconv_forward: nodes " + shape_str(nodes.shape()) +
                                " do not match edge list over " +
                                std::to_string(edges.n_nodes) + " nodes");
  Tensor xi = index_select(nodes, edges.dst);
  Tensor xj = index_select(nodes, edges.src);
  Tensor message = concat({xi, subtract(xj, xi)}, 1);
  Tensor h = relu(lin1.forward(relu(lin0.forward(message))));
  Tensor agg = segment_mean(h, edges.dst, edges.n_nodes);
  return dropout.forward(norm.forward(agg, mode), mode, rng);
}

Tensor EdgeConvBlock::forward(const Tensor& nodes,
                              const std::vector<std::vector<std::size_t>>& neighbors,
                              Mode mode, Rng& rng) {
  return forward(nodes, edges_from_neighbors(neighbors), mode, rng);
}

Tensor global_mean_pool(const Tensor& nodes, const std::vector<bool>& real_mask) {
  if (nodes.rank() != 2 || real_mask.size() != nodes.shape()[0])
    throw std::invalid_argument("global_mean_pool: mask size " +
                                std::to_string(real_mask.size()) + " vs nodes " +
                                shape_str(nodes.shape()));
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < real_mask.size(); ++i)
    if (real_mask[i]) keep.push_back(i);
  if (keep.empty())
    throw std::invalid_argument("global_mean_pool: no real nodes");
  return mean(index_select(nodes, keep), 0);
}

}  // namespace domainshift
