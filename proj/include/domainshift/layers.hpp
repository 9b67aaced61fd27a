// SPDX-License-Identifier: Apache-2.0
//
// Neural layers over the autodiff tensor core. Layers are value objects
// holding their parameter tensors; construction registers those tensors in
// a ParameterStore under a dotted name prefix. Train and eval behavior is
// selected per call, never stored.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "domainshift/params.hpp"
#include "domainshift/rng.hpp"
#include "domainshift/tensor.hpp"

namespace domainshift {

enum class Mode { kTrain, kEval };

enum class Init {
  kReluFan,    // Kaiming uniform, limit sqrt(6 / fan_in)
  kAttention,  // Xavier uniform, limit sqrt(6 / (fan_in + fan_out))
};

struct DenseLayer {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  DenseLayer() = default;
  DenseLayer(ParameterStore& ps, const std::string& name, std::size_t in,
             std::size_t out, Init init, Rng& rng);

  // x [batch, in] -> x.W^T + b [batch, out]
  Tensor forward(const Tensor& x) const;
};

enum class NormKind { kBatch, kLayer };

// Batch kind normalizes each feature over the batch axis in train mode and
// tracks running statistics; a frozen instance (gamma detached from
// gradients) always normalizes with the running statistics and never
// updates them. Layer kind normalizes each row over its feature axis.
struct NormLayer {
  NormKind kind = NormKind::kLayer;
  Tensor gamma, beta;                    // [features]
  Tensor running_mean, running_var;      // batch kind only
  double epsilon = 1e-5;
  double momentum = 0.1;

  NormLayer() = default;
  NormLayer(ParameterStore& ps, const std::string& name, NormKind kind,
            std::size_t features);

  Tensor forward(const Tensor& x, Mode mode);
  bool frozen() const { return !gamma.requires_grad(); }
};

struct DropoutLayer {
  double rate = 0.1;

  // Train mode zeroes each unit with probability `rate` and scales the
  // keepers by 1/(1-rate); eval mode is the exact identity.
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) const;
};

struct MultiHeadAttention {
  std::size_t heads = 0, model_dim = 0;
  DenseLayer wq, wk, wv, wo;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& ps, const std::string& name,
                     std::size_t heads, std::size_t model_dim, Rng& rng);

  // Self-attention over one sequence. mask holds 1 for real tokens, 0 for
  // padding; padded keys get zero attention weight. Outputs at padded
  // positions are defined but meaningless.
  Tensor forward(const Tensor& x, const Tensor& mask) const;
};

// Flat edge list: edge e runs from node src[e] into node dst[e]. Every node
// in [0, n_nodes) must appear as a destination at least once.
struct EdgeList {
  std::vector<std::size_t> src, dst;
  std::size_t n_nodes = 0;
};

// Converts per-node neighbor lists; a node with no neighbors pairs with
// itself so its edge feature difference is zero.
EdgeList edges_from_neighbors(const std::vector<std::vector<std::size_t>>& neighbors);

struct EdgeConvBlock {
  DenseLayer lin0;  // 2 F_in -> F_out
  DenseLayer lin1;  // F_out -> F_out
  NormLayer norm;   // batch kind over F_out
  DropoutLayer dropout;

  EdgeConvBlock() = default;
  EdgeConvBlock(ParameterStore& ps, const std::string& name, std::size_t in_dim,
                std::size_t out_dim, Rng& rng);

  // out_i = mean over incoming edges of relu-MLP(concat(x_i, x_j - x_i)),
  // then batch norm and dropout. Works on single graphs and on several
  // graphs flattened into one node block.
  Tensor forward(const Tensor& nodes, const EdgeList& edges, Mode mode, Rng& rng);
  Tensor forward(const Tensor& nodes,
                 const std::vector<std::vector<std::size_t>>& neighbors, Mode mode,
                 Rng& rng);
};

// Mean of the rows flagged real. At least one row must be real.
Tensor global_mean_pool(const Tensor& nodes, const std::vector<bool>& real_mask);

}  // namespace domainshift
