// SPDX-License-Identifier: Apache-2.0

#include "domainshift/models.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "domainshift/hash.hpp"

namespace domainshift {

namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void check_finite_input(const Tensor& x, const char* who) {
  for (double v : x.values())
    if (!std::isfinite(v)) fail(std::string(who) + ": non-finite input");
}

// Real rows of a padded sample as a fresh row-major block, standardized with
// the model's frozen transform when one is supplied.
std::vector<double> real_rows(const std::vector<double>& features,
                              const std::vector<std::uint8_t>& mask, std::size_t width,
                              const Standardizer* standardizer) {
  std::vector<double> rows;
  for (std::size_t r = 0; r < mask.size(); ++r)
    if (mask[r])
      rows.insert(rows.end(), features.begin() + static_cast<std::ptrdiff_t>(r * width),
                  features.begin() + static_cast<std::ptrdiff_t>((r + 1) * width));
  if (standardizer) {
    if (standardizer->width() != width) fail("standardizer width mismatch");
    apply_standardizer(*standardizer, rows);
  }
  return rows;
}

}  // namespace

std::string to_string(Task t) {
  switch (t) {
    case Task::kSB: return "sb";
    case Task::kQG: return "qg";
    case Task::kMET: return "met";
  }
  fail("unknown task");
}

Task task_from_string(const std::string& s) {
  if (s == "sb") return Task::kSB;
  if (s == "qg") return Task::kQG;
  if (s == "met") return Task::kMET;
  fail("unknown task: " + s);
}

SBClassifier::SBClassifier(ParameterStore& ps, Rng& rng)
    : dense0(ps, "sb.dense0", kSBFeatureCount, 64, Init::kReluFan, rng),
      dense1(ps, "sb.dense1", 64, 64, Init::kReluFan, rng),
      dense2(ps, "sb.dense2", 64, 32, Init::kReluFan, rng),
      out(ps, "sb.out", 32, 1, Init::kAttention, rng) {}

Tensor SBClassifier::forward(const Tensor& x, Mode mode, Rng& rng) const {
  if (x.rank() != 2 || x.shape()[1] != kSBFeatureCount)
    fail("classifier expects [batch, 12] input");
  check_finite_input(x, "classifier");
  Tensor h = dropout.forward(relu(dense0.forward(x)), mode, rng);
  h = dropout.forward(relu(dense1.forward(h)), mode, rng);
  h = dropout.forward(relu(dense2.forward(h)), mode, rng);
  return sigmoid(out.forward(h));
}

JetBatch build_jet_batch(const std::vector<const JetSample*>& samples, std::size_t k,
                         const Standardizer* standardizer) {
  if (samples.empty()) fail("empty jet batch");
  JetBatch batch;
  batch.n_jets = samples.size();
  std::vector<double> nodes;
  for (const JetSample* s : samples) {
    const std::size_t base = batch.jet_of_node.size();
    const std::size_t n = s->n_real();
    if (n == 0) fail("jet sample has no real tracks");
    const auto rows = real_rows(s->features, s->real_mask, kJetFeatureCount, standardizer);
    nodes.insert(nodes.end(), rows.begin(), rows.end());
    for (std::size_t i = 0; i < n; ++i) batch.jet_of_node.push_back(batch.labels.size());

    const KnnGraph graph = knn_graph(*s, k);
    for (std::size_t i = 0; i < graph.neighbors.size(); ++i)
      for (std::size_t j : graph.neighbors[i]) {
        batch.edges.src.push_back(base + j);
        batch.edges.dst.push_back(base + i);
      }
    batch.labels.push_back(static_cast<double>(s->label));
  }
  batch.edges.n_nodes = batch.jet_of_node.size();
  batch.nodes = Tensor({batch.edges.n_nodes, kJetFeatureCount}, std::move(nodes));
  return batch;
}

QGTagger::QGTagger(ParameterStore& ps, Rng& rng)
    : conv0(ps, "qg.conv0", kJetFeatureCount, 32, rng),
      conv1(ps, "qg.conv1", 32, 64, rng),
      conv2(ps, "qg.conv2", 64, 128, rng),
      head0(ps, "qg.head0", 224, 128, Init::kReluFan, rng),
      head1(ps, "qg.head1", 128, 64, Init::kReluFan, rng),
      out(ps, "qg.out", 64, 1, Init::kAttention, rng) {}

Tensor QGTagger::forward(const JetBatch& batch, Mode mode, Rng& rng) {
  if (!batch.nodes.defined() || batch.nodes.shape()[0] != batch.jet_of_node.size() ||
      batch.edges.n_nodes != batch.jet_of_node.size())
    fail("tagger batch is inconsistent");
  check_finite_input(batch.nodes, "tagger");
  Tensor x0 = conv0.forward(batch.nodes, batch.edges, mode, rng);
  Tensor x1 = conv1.forward(x0, batch.edges, mode, rng);
  Tensor x2 = conv2.forward(x1, batch.edges, mode, rng);
  Tensor cat = concat({x0, x1, x2}, 1);
  Tensor pooled = segment_mean(cat, batch.jet_of_node, batch.n_jets);
  Tensor h = dropout.forward(relu(head0.forward(pooled)), mode, rng);
  h = dropout.forward(relu(head1.forward(h)), mode, rng);
  return out.forward(h);
}

Tensor QGTagger::forward_sample(const JetSample& sample, const KnnGraph& graph,
                                Mode mode, Rng& rng, const Standardizer* standardizer) {
  const std::size_t n = sample.n_real();
  if (graph.neighbors.size() != n) fail("graph does not match the sample's real tracks");

  JetBatch batch;
  batch.n_jets = 1;
  batch.labels = {static_cast<double>(sample.label)};
  batch.jet_of_node.assign(n, 0);
  batch.nodes = Tensor({n, kJetFeatureCount},
                       real_rows(sample.features, sample.real_mask, kJetFeatureCount,
                                 standardizer));
  for (std::size_t i = 0; i < n; ++i) {
    if (graph.neighbors[i].empty()) fail("graph node without neighbors");
    for (std::size_t j : graph.neighbors[i]) {
      if (j >= n) fail("graph neighbor points outside the real tracks");
      batch.edges.src.push_back(j);
      batch.edges.dst.push_back(i);
    }
  }
  batch.edges.n_nodes = n;
  return forward(batch, mode, rng);
}

EncoderLayer::EncoderLayer(ParameterStore& ps, const std::string& name,
                           std::size_t model_dim, std::size_t ff_dim, std::size_t heads,
                           Rng& rng)
    : attn(ps, name + ".attn", heads, model_dim, rng),
      norm0(ps, name + ".norm0", NormKind::kLayer, model_dim),
      norm1(ps, name + ".norm1", NormKind::kLayer, model_dim),
      ff0(ps, name + ".ff0", model_dim, ff_dim, Init::kAttention, rng),
      ff1(ps, name + ".ff1", ff_dim, model_dim, Init::kAttention, rng) {}

Tensor EncoderLayer::forward(const Tensor& x, const Tensor& mask, Mode mode, Rng& rng) {
  Tensor h = add(x, dropout.forward(attn.forward(norm0.forward(x, mode), mask), mode, rng));
  Tensor f = ff1.forward(gelu(ff0.forward(norm1.forward(h, mode))));
  return add(h, dropout.forward(f, mode, rng));
}

METRegressor::METRegressor(ParameterStore& ps, Rng& rng) {
  constexpr std::size_t dim = 64;
  embed = DenseLayer(ps, "met.embed", kMetFeatureCount, dim, Init::kAttention, rng);
  embed_norm = NormLayer(ps, "met.embed_norm", NormKind::kLayer, dim);
  std::vector<double> cls_init(dim);
  for (double& v : cls_init) v = rng.normal(0.0, 0.02);
  cls = ps.create("met.cls", Tensor({1, dim}, std::move(cls_init)));
  enc0 = EncoderLayer(ps, "met.enc0", dim, 128, 4, rng);
  enc1 = EncoderLayer(ps, "met.enc1", dim, 128, 4, rng);
  enc2 = EncoderLayer(ps, "met.enc2", dim, 128, 4, rng);
  head_norm = NormLayer(ps, "met.head_norm", NormKind::kLayer, dim);
  head0 = DenseLayer(ps, "met.head0", dim, 32, Init::kAttention, rng);
  head1 = DenseLayer(ps, "met.head1", 32, 1, Init::kAttention, rng);
}

Tensor METRegressor::forward(const Tensor& tracks, Mode mode, Rng& rng) {
  if (tracks.rank() != 2 || tracks.shape()[1] != kMetFeatureCount)
    fail("regressor expects [tracks, 4] input");
  if (tracks.shape()[0] == 0) fail("regressor needs at least one track");
  check_finite_input(tracks, "regressor");

  Tensor e = embed_norm.forward(gelu(embed.forward(tracks)), mode);
  Tensor seq = concat({cls, e}, 0);
  const Tensor mask(Shape{seq.shape()[0]}, 1.0);
  seq = enc0.forward(seq, mask, mode, rng);
  seq = enc1.forward(seq, mask, mode, rng);
  seq = enc2.forward(seq, mask, mode, rng);
  Tensor rep = slice(seq, 0, 0, 1);
  Tensor h = dropout.forward(gelu(head0.forward(head_norm.forward(rep, mode))), mode, rng);
  return head1.forward(h);
}

Tensor METRegressor::forward_sample(const METSample& sample, Mode mode, Rng& rng,
                                    const Standardizer* standardizer) {
  const std::size_t n = sample.n_real();
  if (n == 0) fail("regressor needs at least one real track");
  Tensor tracks(Shape{n, kMetFeatureCount},
                real_rows(sample.features, sample.real_mask, kMetFeatureCount,
                          standardizer));
  return forward(tracks, mode, rng);
}

Tensor bce_loss(const Tensor& p, const std::vector<double>& labels) {
  if (p.size() != labels.size()) fail("probability/label length mismatch");
  if (labels.empty()) fail("empty batch");
  std::vector<double> y(labels.size()), ym(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0.0 && labels[i] != 1.0) fail("labels must be 0 or 1");
    y[i] = labels[i];
    ym[i] = 1.0 - labels[i];
  }
  const Tensor yt(p.shape(), std::move(y));
  const Tensor ymt(p.shape(), std::move(ym));
  const Tensor pc = clamp(p, 1e-7, 1.0 - 1e-7);
  const Tensor onem = add_scalar(multiply_scalar(pc, -1.0), 1.0);
  return multiply_scalar(mean_all(add(multiply(yt, log(pc)), multiply(ymt, log(onem)))),
                         -1.0);
}

Tensor met_loss(const Tensor& pred, const std::vector<double>& truth,
                double lambda_bias) {
  if (pred.size() != truth.size()) fail("prediction/target length mismatch");
  if (truth.size() < 2) fail("bias term needs a batch of at least two");
  const Tensor t(pred.shape(), truth);
  const Tensor diff = subtract(pred, t);
  const Tensor mse = mean_all(multiply(diff, diff));
  const Tensor bias = mean_all(diff);
  return add(mse, multiply_scalar(multiply(bias, bias), lambda_bias));
}

FreezeSpec canonical_freeze(Task task) {
  switch (task) {
    case Task::kSB: return {{"sb.dense0"}};
    case Task::kQG: return {{"qg.conv0", "qg.conv1", "qg.conv2"}};
    case Task::kMET: return {{"met.embed", "met.cls", "met.enc"}};
  }
  fail("unknown task");
}

void save_bundle(const std::string& dir, const ParameterStore& ps,
                 const BundleMeta& meta) {
  std::filesystem::create_directories(dir);
  ps.save(dir + "/params.txt");

  ordered_json j;
  j["format"] = "domainshift-bundle v1";
  j["task"] = to_string(meta.task);
  j["source_tag"] = meta.source_tag;
  j["config_hash"] = meta.config_hash;
  j["k"] = meta.k;
  j["n_max"] = meta.n_max;
  j["standardizer"]["mean"] = meta.standardizer.mean;
  j["standardizer"]["stdev"] = meta.standardizer.stdev;
  std::ofstream out(dir + "/meta.json", std::ios::binary);
  if (!out) fail("cannot write bundle metadata in " + dir);
  out << j.dump(2) << "\n";
  if (!out) fail("bundle metadata write failed in " + dir);
}

BundleMeta load_bundle_meta(const std::string& dir) {
  std::ifstream in(dir + "/meta.json", std::ios::binary);
  if (!in) fail("missing bundle metadata: " + dir + "/meta.json");
  ordered_json j;
  in >> j;
  BundleMeta meta;
  meta.task = task_from_string(j.at("task").get<std::string>());
  meta.source_tag = j.value("source_tag", "");
  meta.config_hash = j.value("config_hash", "");
  meta.k = j.value("k", kDefaultKnn);
  meta.n_max = j.value("n_max", kDefaultMetTracks);
  if (j.contains("standardizer")) {
    meta.standardizer.mean = j["standardizer"].at("mean").get<std::vector<double>>();
    meta.standardizer.stdev = j["standardizer"].at("stdev").get<std::vector<double>>();
  }
  return meta;
}

void load_bundle_params(const std::string& dir, ParameterStore& ps) {
  ps.load(dir + "/params.txt");
}

}  // namespace domainshift
