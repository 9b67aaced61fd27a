// SPDX-License-Identifier: Apache-2.0
//
// The three task architectures, their losses, canonical freeze lists and
// bundle persistence. Every model registers its parameters in a caller-owned
// ParameterStore under a fixed dotted prefix, so freeze specs and snapshots
// are stable across runs.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "domainshift/features.hpp"
#include "domainshift/layers.hpp"
#include "domainshift/params.hpp"

namespace domainshift {

enum class Task { kSB, kQG, kMET };

std::string to_string(Task t);
Task task_from_string(const std::string& s);

// Dense stack 12 -> 64 -> 64 -> 32 -> 1, relu and dropout on hidden layers,
// sigmoid output.
struct SBClassifier {
  DenseLayer dense0, dense1, dense2, out;
  DropoutLayer dropout;

  SBClassifier() = default;
  SBClassifier(ParameterStore& ps, Rng& rng);

  // x [batch, 12], standardized and finite -> probabilities [batch, 1]
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) const;
};

// Several jets flattened into one node block so batch statistics in the
// EdgeConv norms see the whole minibatch.
struct JetBatch {
  Tensor nodes;                          // [total real tracks, 6]
  EdgeList edges;
  std::vector<std::size_t> jet_of_node;
  std::size_t n_jets = 0;
  std::vector<double> labels;
};

JetBatch build_jet_batch(const std::vector<const JetSample*>& samples, std::size_t k,
                         const Standardizer* standardizer);

// Three EdgeConv blocks (32, 64, 128), concatenated per-node features pooled
// by jet mean, head 224 -> 128 -> 64 -> 1 with a linear logit.
struct QGTagger {
  EdgeConvBlock conv0, conv1, conv2;
  DenseLayer head0, head1, out;
  DropoutLayer dropout;

  QGTagger() = default;
  QGTagger(ParameterStore& ps, Rng& rng);

  Tensor forward(const JetBatch& batch, Mode mode, Rng& rng);  // [n_jets, 1] logits
  // Single-jet path; the graph must describe exactly the sample's real rows.
  Tensor forward_sample(const JetSample& sample, const KnnGraph& graph, Mode mode,
                        Rng& rng, const Standardizer* standardizer = nullptr);
};

// Pre-norm transformer encoder layer, 4 heads, feed-forward 64 -> 128 -> 64
// with gelu.
struct EncoderLayer {
  MultiHeadAttention attn;
  NormLayer norm0, norm1;
  DenseLayer ff0, ff1;
  DropoutLayer dropout;

  EncoderLayer() = default;
  EncoderLayer(ParameterStore& ps, const std::string& name, std::size_t model_dim,
               std::size_t ff_dim, std::size_t heads, Rng& rng);

  Tensor forward(const Tensor& x, const Tensor& mask, Mode mode, Rng& rng);
};

// Track embedding (4 -> 64, gelu, layer norm), learnable CLS token, three
// encoder layers, regression head on the CLS output. Sequences are processed
// unpadded, one event at a time; the prediction is the MET magnitude.
struct METRegressor {
  DenseLayer embed;
  NormLayer embed_norm;
  Tensor cls;  // [1, 64]
  EncoderLayer enc0, enc1, enc2;
  NormLayer head_norm;
  DenseLayer head0, head1;
  DropoutLayer dropout;

  METRegressor() = default;
  METRegressor(ParameterStore& ps, Rng& rng);

  Tensor forward(const Tensor& tracks, Mode mode, Rng& rng);  // [n, 4] -> [1, 1]
  Tensor forward_sample(const METSample& sample, Mode mode, Rng& rng,
                        const Standardizer* standardizer = nullptr);
};

// Mean of -[y log p + (1-y) log(1-p)] with p clamped to [1e-7, 1-1e-7].
// Labels outside {0, 1} are an error.
Tensor bce_loss(const Tensor& p, const std::vector<double>& labels);

// mean((pred-true)^2) + lambda_bias * mean(pred-true)^2, batches of length
// two or more.
Tensor met_loss(const Tensor& pred, const std::vector<double>& truth,
                double lambda_bias = 1.0);

struct FreezeSpec {
  std::vector<std::string> prefixes;
};

// The shipped per-task freeze lists: first hidden layer for the dense
// classifier, all EdgeConv blocks for the tagger, embedding plus encoders
// plus CLS token for the regressor.
FreezeSpec canonical_freeze(Task task);

// Bundle directory: parameter snapshot plus a metadata record with the
// architecture tag, input transform and provenance fields.
struct BundleMeta {
  Task task = Task::kSB;
  std::string source_tag;    // free-form domain / dataset tag
  std::string config_hash;
  std::size_t k = kDefaultKnn;             // tagger graphs
  std::size_t n_max = kDefaultMetTracks;   // regressor capacity
  Standardizer standardizer;
};

void save_bundle(const std::string& dir, const ParameterStore& ps,
                 const BundleMeta& meta);
BundleMeta load_bundle_meta(const std::string& dir);
// The store must already hold the matching architecture's parameters.
void load_bundle_params(const std::string& dir, ParameterStore& ps);

}  // namespace domainshift
