// SPDX-License-Identifier: Apache-2.0

#include "domainshift/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <thread>
#include <utility>

#include "domainshift/hash.hpp"
#include "domainshift/rng.hpp"
#include "domainshift/version.hpp"

namespace fs = std::filesystem;

namespace domainshift {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

// Stream labels for derived RNGs; runs must not share draws.
enum PathWord : std::uint64_t {
  kWordPretrain = 1,
  kWordSubset = 2,
  kWordRun = 3,
  kWordMix = 4,
  kWordShuffle = 5,
  kWordDropout = 6,
};

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
}

double elapsed_seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kScratch: return "scratch";
    case Strategy::kPretrainFull: return "pretrain_full";
    case Strategy::kPretrainFrozen: return "pretrain_frozen";
  }
  fail("bad strategy value");
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "scratch") return Strategy::kScratch;
  if (s == "pretrain_full") return Strategy::kPretrainFull;
  if (s == "pretrain_frozen") return Strategy::kPretrainFrozen;
  fail("unknown strategy: " + s);
}

void TrainConfig::validate() const {
  if (!(adam.lr > 0.0)) fail("learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    fail("adam betas must lie in [0, 1)");
  if (!(adam.eps > 0.0)) fail("adam eps must be positive");
  if (batch_size == 0) fail("batch size must be positive");
  if (patience == 0) fail("patience must be at least one");
  if (strategy != Strategy::kScratch && bundle.empty())
    fail("transfer strategies need a bundle path");
}

TrainConfig default_config(Task task) {
  TrainConfig c;
  c.task = task;
  c.adam.lr = task == Task::kMET ? 3e-4 : 1e-3;
  return c;
}

nlohmann::ordered_json config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["task"] = to_string(c.task);
  j["adam"] = {{"lr", c.adam.lr},
               {"beta1", c.adam.beta1},
               {"beta2", c.adam.beta2},
               {"eps", c.adam.eps}};
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["strategy"] = to_string(c.strategy);
  j["bundle"] = c.bundle;
  return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
  const Task task = task_from_string(j.at("task").get<std::string>());
  TrainConfig c = default_config(task);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    c.adam.lr = a.value("lr", c.adam.lr);
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.eps = a.value("eps", c.adam.eps);
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  if (j.contains("strategy")) c.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  c.bundle = j.value("bundle", c.bundle);
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open config: " + path);
  nlohmann::json j;
  in >> j;
  return config_from_json(j);
}

std::string hash_config(const TrainConfig& c) {
  // The bundle path is a filesystem location, not a semantic knob; the
  // bundle's own provenance lives in its metadata.
  nlohmann::ordered_json j = config_to_json(c);
  j.erase("bundle");
  return hex64(fnv1a64(j.dump()));
}

Adam::Adam(ParameterStore& store, AdamConfig cfg) : store_(&store), cfg_(cfg) {}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& p : store_->items()) {
    if (!p.trainable || !p.value.has_grad()) continue;
    auto& [m, v] = state_[p.name];
    auto& values = p.value.values();
    const auto& grad = p.value.grad();
    if (m.empty()) {
      m.assign(values.size(), 0.0);
      v.assign(values.size(), 0.0);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      values[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

DatasetSplit split_dataset(std::size_t n, double train_frac, double val_frac,
                           double test_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(test_frac > 0.0))
    fail("split fractions must be positive");
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    fail("split fractions must sum to one");
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_frac));
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_frac));
  if (n_test == 0 || n_val == 0 || n_test + n_val >= n)
    fail("dataset too small for non-empty train/val/test splits");

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng = Rng::from_seed(seed);
  shuffle_indices(idx, rng);

  DatasetSplit split;
  split.seed = seed;
  split.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test),
                   idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  split.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), idx.end());
  return split;
}

std::size_t TaskData::size() const {
  switch (task) {
    case Task::kSB: return sb.samples.size();
    case Task::kQG: return qg.samples.size();
    case Task::kMET: return met.samples.size();
  }
  fail("bad task value");
}

TaskData load_task_data(Task task, const std::string& path) {
  TaskData d;
  d.task = task;
  switch (task) {
    case Task::kSB: d.sb = read_sb_dataset(path); break;
    case Task::kQG: d.qg = read_qg_dataset(path); break;
    case Task::kMET: d.met = read_met_dataset(path); break;
  }
  return d;
}

TaskData subset(const TaskData& d, const std::vector<std::size_t>& indices) {
  TaskData out;
  out.task = d.task;
  out.qg.k = d.qg.k;
  out.met.n_max = d.met.n_max;
  const std::size_t n = d.size();
  for (std::size_t i : indices) {
    if (i >= n) fail("subset index out of range");
    switch (d.task) {
      case Task::kSB: out.sb.samples.push_back(d.sb.samples[i]); break;
      case Task::kQG: out.qg.samples.push_back(d.qg.samples[i]); break;
      case Task::kMET: out.met.samples.push_back(d.met.samples[i]); break;
    }
  }
  return out;
}

MixResult mix_domains(const TaskData& a, const TaskData& b, std::size_t total,
                      double fraction_a, std::uint64_t seed) {
  if (a.task != b.task) fail("cannot mix datasets of different tasks");
  if (!(fraction_a >= 0.0 && fraction_a <= 1.0)) fail("fraction_a must lie in [0, 1]");
  if (a.task == Task::kQG && a.qg.k != b.qg.k) fail("mixed tagger datasets need equal k");
  if (a.task == Task::kMET && a.met.n_max != b.met.n_max)
    fail("mixed regressor datasets need equal n_max");
  const auto n_a =
      static_cast<std::size_t>(std::llround(static_cast<double>(total) * fraction_a));
  const std::size_t n_b = total - n_a;
  if (n_a > a.size()) fail("mix needs more samples than dataset a holds");
  if (n_b > b.size()) fail("mix needs more samples than dataset b holds");

  Rng rng = Rng::from_seed(seed);
  std::vector<std::size_t> order_a(a.size()), order_b(b.size());
  for (std::size_t i = 0; i < order_a.size(); ++i) order_a[i] = i;
  for (std::size_t i = 0; i < order_b.size(); ++i) order_b[i] = i;
  Rng rng_a = rng.derive(1);
  Rng rng_b = rng.derive(2);
  shuffle_indices(order_a, rng_a);
  shuffle_indices(order_b, rng_b);

  // (source, index) pairs, then one joint shuffle for the sample order.
  std::vector<std::pair<std::uint8_t, std::size_t>> picks;
  picks.reserve(total);
  for (std::size_t i = 0; i < n_a; ++i) picks.emplace_back(1, order_a[i]);
  for (std::size_t i = 0; i < n_b; ++i) picks.emplace_back(0, order_b[i]);
  Rng rng_join = rng.derive(3);
  for (std::size_t i = picks.size(); i > 1; --i)
    std::swap(picks[i - 1], picks[rng_join.uniform_int(i)]);

  MixResult out;
  out.n_a = n_a;
  out.n_b = n_b;
  out.data.task = a.task;
  out.data.qg.k = a.qg.k;
  out.data.met.n_max = a.met.n_max;
  for (const auto& [from_a, i] : picks) {
    out.from_a.push_back(from_a);
    const TaskData& src = from_a ? a : b;
    switch (a.task) {
      case Task::kSB: out.data.sb.samples.push_back(src.sb.samples[i]); break;
      case Task::kQG: out.data.qg.samples.push_back(src.qg.samples[i]); break;
      case Task::kMET: out.data.met.samples.push_back(src.met.samples[i]); break;
    }
  }
  return out;
}

TaskModel make_model(Task task, std::uint64_t init_seed) {
  TaskModel m;
  m.task = task;
  Rng rng = Rng::from_seed(init_seed);
  switch (task) {
    case Task::kSB: m.sb.emplace(m.store, rng); break;
    case Task::kQG: m.qg.emplace(m.store, rng); break;
    case Task::kMET: m.met.emplace(m.store, rng); break;
  }
  return m;
}

TaskModel load_model(const std::string& bundle_dir) {
  const BundleMeta meta = load_bundle_meta(bundle_dir);
  TaskModel m = make_model(meta.task, 0);
  load_bundle_params(bundle_dir, m.store);
  m.standardizer = meta.standardizer;
  m.k = meta.k;
  m.n_max = meta.n_max;
  return m;
}

void save_model(const TaskModel& m, const std::string& bundle_dir,
                const std::string& source_tag, const std::string& cfg_hash) {
  BundleMeta meta;
  meta.task = m.task;
  meta.source_tag = source_tag;
  meta.config_hash = cfg_hash;
  meta.k = m.k;
  meta.n_max = m.n_max;
  meta.standardizer = m.standardizer;
  save_bundle(bundle_dir, m.store, meta);
}

namespace {

Standardizer fit_input_transform(const TaskData& d) {
  std::vector<double> rows;
  std::vector<std::uint8_t> mask;
  switch (d.task) {
    case Task::kSB:
      for (const auto& s : d.sb.samples)
        rows.insert(rows.end(), s.features.begin(), s.features.end());
      return fit_standardizer(rows, kSBFeatureCount);
    case Task::kQG:
      for (const auto& s : d.qg.samples) {
        rows.insert(rows.end(), s.features.begin(), s.features.end());
        mask.insert(mask.end(), s.real_mask.begin(), s.real_mask.end());
      }
      return fit_standardizer(rows, kJetFeatureCount, mask);
    case Task::kMET:
      for (const auto& s : d.met.samples) {
        rows.insert(rows.end(), s.features.begin(), s.features.end());
        mask.insert(mask.end(), s.real_mask.begin(), s.real_mask.end());
      }
      return fit_standardizer(rows, kMetFeatureCount, mask);
  }
  fail("bad task value");
}

Tensor sb_matrix(const TaskData& d, const std::vector<std::size_t>& idx,
                 const Standardizer& st) {
  std::vector<double> rows;
  rows.reserve(idx.size() * kSBFeatureCount);
  for (std::size_t i : idx)
    rows.insert(rows.end(), d.sb.samples[i].features.begin(),
                d.sb.samples[i].features.end());
  if (st.width()) apply_standardizer(st, rows);
  return Tensor(Shape{idx.size(), kSBFeatureCount}, std::move(rows));
}

const Standardizer* transform_of(const TaskModel& m) {
  return m.standardizer.width() ? &m.standardizer : nullptr;
}

// Batch loss in train mode; gradients are left on the parameters.
double train_batch(TaskModel& model, const TaskData& d, const std::vector<std::size_t>& batch,
                   Rng& rng_dropout, Adam& adam) {
  TapeScope scope;
  Tensor loss;
  switch (model.task) {
    case Task::kSB: {
      std::vector<double> labels;
      for (std::size_t i : batch) labels.push_back(static_cast<double>(d.sb.samples[i].label));
      const Tensor p =
          model.sb->forward(sb_matrix(d, batch, model.standardizer), Mode::kTrain, rng_dropout);
      loss = bce_loss(p, labels);
      break;
    }
    case Task::kQG: {
      std::vector<const JetSample*> samples;
      for (std::size_t i : batch) samples.push_back(&d.qg.samples[i]);
      const JetBatch jb = build_jet_batch(samples, model.k, transform_of(model));
      const Tensor logits = model.qg->forward(jb, Mode::kTrain, rng_dropout);
      loss = bce_loss(sigmoid(logits), jb.labels);
      break;
    }
    case Task::kMET: {
      std::vector<Tensor> preds;
      std::vector<double> truth;
      for (std::size_t i : batch) {
        preds.push_back(
            model.met->forward_sample(d.met.samples[i], Mode::kTrain, rng_dropout,
                                      transform_of(model)));
        truth.push_back(d.met.samples[i].target);
      }
      loss = met_loss(concat(preds, 0), truth);
      break;
    }
  }
  const double value = loss.values()[0];
  if (std::isfinite(value)) {
    model.store.zero_grads();
    backward(loss);
    adam.step();
  }
  return value;
}

std::vector<std::vector<double>> snapshot_params(const ParameterStore& store) {
  std::vector<std::vector<double>> snap;
  snap.reserve(store.items().size());
  for (const auto& p : store.items()) snap.push_back(p.value.values());
  return snap;
}

void restore_params(ParameterStore& store, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < snap.size(); ++i) store.items()[i].value.values() = snap[i];
}

std::vector<double> labels_of(const TaskData& d, const std::vector<std::size_t>& idx) {
  std::vector<double> labels;
  for (std::size_t i : idx)
    labels.push_back(static_cast<double>(d.task == Task::kSB ? d.sb.samples[i].label
                                                             : d.qg.samples[i].label));
  return labels;
}

}  // namespace

std::vector<double> predict(TaskModel& m, const TaskData& d,
                            const std::vector<std::size_t>& idx) {
  if (m.task != d.task) fail("model and data task mismatch");
  std::vector<double> out;
  out.reserve(idx.size());
  Rng rng_unused = Rng::from_seed(0);
  const std::size_t chunk = m.task == Task::kSB ? 1024 : 256;
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    const std::vector<std::size_t> part(
        idx.begin() + static_cast<std::ptrdiff_t>(start),
        idx.begin() + static_cast<std::ptrdiff_t>(std::min(start + chunk, idx.size())));
    switch (m.task) {
      case Task::kSB: {
        const Tensor p = m.sb->forward(sb_matrix(d, part, m.standardizer), Mode::kEval, rng_unused);
        out.insert(out.end(), p.values().begin(), p.values().end());
        break;
      }
      case Task::kQG: {
        std::vector<const JetSample*> samples;
        for (std::size_t i : part) samples.push_back(&d.qg.samples[i]);
        const JetBatch jb = build_jet_batch(samples, m.k, transform_of(m));
        const Tensor logits = m.qg->forward(jb, Mode::kEval, rng_unused);
        out.insert(out.end(), logits.values().begin(), logits.values().end());
        break;
      }
      case Task::kMET: {
        for (std::size_t i : part)
          out.push_back(m.met
                            ->forward_sample(d.met.samples[i], Mode::kEval, rng_unused,
                                             transform_of(m))
                            .values()[0]);
        break;
      }
    }
  }
  return out;
}

namespace {

double met_metric(const std::vector<double>& preds, const std::vector<double>& truth) {
  if (preds.size() < 2) fail("regression metric needs at least two samples");
  double se = 0.0, bias = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double diff = preds[i] - truth[i];
    se += diff * diff;
    bias += diff;
  }
  const double n = static_cast<double>(preds.size());
  return se / n + (bias / n) * (bias / n);
}

}  // namespace

double evaluate_metric(TaskModel& m, const TaskData& d, const std::vector<std::size_t>& idx) {
  const std::vector<double> scores = predict(m, d, idx);
  if (m.task == Task::kMET) {
    std::vector<double> truth;
    for (std::size_t i : idx) truth.push_back(d.met.samples[i].target);
    return met_metric(scores, truth);
  }
  std::vector<int> labels;
  for (std::size_t i : idx)
    labels.push_back(d.task == Task::kSB ? d.sb.samples[i].label : d.qg.samples[i].label);
  return roc_auc(scores, labels).auc;
}

RunResult train(TaskModel& model, const TaskData& train_data, const TaskData& eval_data,
                const std::vector<std::size_t>& val_idx,
                const std::vector<std::size_t>& test_idx, const TrainConfig& cfg) {
  cfg.validate();
  if (model.task != cfg.task || train_data.task != cfg.task || eval_data.task != cfg.task)
    fail("task mismatch between model, data and config");
  const std::size_t n = train_data.size();
  if (n == 0) fail("empty training set");
  if (val_idx.empty() || test_idx.empty()) fail("empty validation or test set");
  const auto t0 = std::chrono::steady_clock::now();

  // A fresh model adopts the training data's transform and hyperparameters;
  // a bundle-loaded model keeps what it shipped with.
  if (model.standardizer.width() == 0) {
    model.standardizer = fit_input_transform(train_data);
    model.k = train_data.qg.k;
    model.n_max = train_data.met.n_max;
  }

  Rng rng_root = Rng::from_seed(cfg.seed);
  Rng rng_shuffle = rng_root.derive(kWordShuffle);
  Rng rng_dropout = rng_root.derive(kWordDropout);
  Adam adam(model.store, cfg.adam);
  const bool higher = cfg.task != Task::kMET;
  const auto better = [higher](double a, double b) { return higher ? a > b : a < b; };

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  double best_val = evaluate_metric(model, eval_data, val_idx);
  const double epoch0_val = best_val;
  auto best_snap = snapshot_params(model.store);
  std::size_t epochs_run = 0, since_improve = 0;

  std::vector<std::size_t> order = all;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_indices(order, rng_shuffle);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::vector<std::size_t> batch(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() + static_cast<std::ptrdiff_t>(std::min(start + cfg.batch_size, n)));
      if (cfg.task == Task::kMET && batch.size() < 2) continue;
      const double loss = train_batch(model, train_data, batch, rng_dropout, adam);
      if (!std::isfinite(loss))
        fail("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
             std::to_string(start / cfg.batch_size) + ", lr " + std::to_string(cfg.adam.lr));
    }
    ++epochs_run;
    const double val = evaluate_metric(model, eval_data, val_idx);
    if (better(val, best_val)) {
      best_val = val;
      best_snap = snapshot_params(model.store);
      since_improve = 0;
    } else if (++since_improve >= cfg.patience) {
      break;
    }
  }

  restore_params(model.store, best_snap);

  RunResult r;
  r.task = to_string(cfg.task);
  r.strategy = to_string(cfg.strategy);
  r.train_size = n;
  r.seed = cfg.seed;
  r.val_metric = best_val;
  r.epochs_run = epochs_run;
  r.extras["epoch0_val"] = epoch0_val;
  r.config_hash = hash_config(cfg);
  r.code_version = kCodeVersion;

  const std::vector<double> test_scores = predict(model, eval_data, test_idx);
  if (cfg.task == Task::kMET) {
    std::vector<double> truth;
    for (std::size_t i : test_idx) truth.push_back(eval_data.met.samples[i].target);
    r.test_metric = met_metric(test_scores, truth);
    const ResolutionProfile prof = resolution_profile(test_scores, truth, met_profile_edges());
    const int b = bin_index(prof.edges, 40.0);
    if (b >= 0 && prof.filled[static_cast<std::size_t>(b)]) {
      r.extras["bias_40_60"] = prof.bias[static_cast<std::size_t>(b)];
      r.extras["width_40_60"] = prof.width[static_cast<std::size_t>(b)];
    }
  } else {
    std::vector<int> labels;
    for (std::size_t i : test_idx)
      labels.push_back(cfg.task == Task::kSB ? eval_data.sb.samples[i].label
                                             : eval_data.qg.samples[i].label);
    r.test_metric = roc_auc(test_scores, labels).auc;
  }

  r.wall_seconds = elapsed_seconds(t0);
  return r;
}

RunResult fine_tune(TaskModel& model, const TaskData& train_data, const TaskData& eval_data,
                    const std::vector<std::size_t>& val_idx,
                    const std::vector<std::size_t>& test_idx, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.strategy == Strategy::kScratch) fail("fine_tune needs a transfer strategy");
  model = load_model(cfg.bundle);
  if (model.task != cfg.task) fail("bundle architecture does not match the configured task");
  if (cfg.strategy == Strategy::kPretrainFrozen)
    model.store.apply_freeze(canonical_freeze(model.task).prefixes);
  return train(model, train_data, eval_data, val_idx, test_idx, cfg);
}

std::vector<std::size_t> sweep_subset_order(const std::vector<std::size_t>& train_pool,
                                            std::uint64_t global_seed, std::size_t seed_idx) {
  std::vector<std::size_t> order = train_pool;
  Rng rng = Rng::from_seed(global_seed).derive({kWordSubset, seed_idx});
  shuffle_indices(order, rng);
  return order;
}

std::vector<std::size_t> default_size_grid() { return {1000, 2500, 5000, 10000, 20000, 40000}; }

namespace {

std::uint64_t run_seed(std::uint64_t global_seed, std::size_t size, std::size_t seed_idx,
                       std::uint64_t strategy_word) {
  return Rng::from_seed(global_seed).derive({kWordRun, size, seed_idx, strategy_word}).next_u64();
}

void run_pool(std::size_t jobs, std::size_t n, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w)
    workers.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
    });
  for (auto& t : workers) t.join();
}

void write_sweep_outputs(const std::string& out_dir, const std::vector<RunResult>& runs) {
  write_runs((fs::path(out_dir) / "runs.jsonl").string(), runs);
  write_csv((fs::path(out_dir) / "curves.csv").string(), [&] {
    CsvTable rows{{"task", "strategy", "train_size", "mean", "std", "n"}};
    for (const auto& p : aggregate_curve(runs))
      rows.push_back({p.task, p.strategy, std::to_string(p.train_size), format_double(p.mean),
                      p.has_std ? format_double(p.stdev) : std::string(),
                      std::to_string(p.n)});
    return rows;
  }());
  // Timings are intentionally separate: wall time is not reproducible.
  std::string timings;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    nlohmann::ordered_json j;
    j["index"] = i;
    j["task"] = runs[i].task;
    j["strategy"] = runs[i].strategy;
    j["train_size"] = runs[i].train_size;
    j["seed"] = runs[i].seed;
    j["wall_seconds"] = runs[i].wall_seconds;
    timings += j.dump() + "\n";
  }
  std::ofstream out((fs::path(out_dir) / "timings.jsonl").string(), std::ios::binary);
  out << timings;
}

RunResult failed_run(const TrainConfig& cfg, std::size_t size, const std::string& what) {
  RunResult r;
  r.task = to_string(cfg.task);
  r.strategy = to_string(cfg.strategy);
  r.train_size = size;
  r.seed = cfg.seed;
  r.failed = true;
  r.error = what;
  r.config_hash = hash_config(cfg);
  r.code_version = kCodeVersion;
  return r;
}

void check_sweep_config(const SweepConfig& cfg) {
  if (cfg.sizes.empty()) fail("sweep needs a non-empty size grid");
  if (cfg.n_seeds == 0) fail("sweep needs at least one seed");
  if (cfg.strategies.empty()) fail("sweep needs at least one strategy");
}

}  // namespace

std::vector<RunResult> learning_curve_sweep(const SweepConfig& cfg, const TaskData& source,
                                            const TaskData& target, const std::string& out_dir) {
  check_sweep_config(cfg);
  if (source.task != cfg.task || target.task != cfg.task) fail("sweep data task mismatch");
  fs::create_directories(out_dir);

  const DatasetSplit split = split_dataset(target.size(), 0.7, 0.15, 0.15, cfg.global_seed);
  for (std::size_t s : cfg.sizes)
    if (s > split.train.size())
      fail("requested size " + std::to_string(s) + " exceeds the target train pool (" +
           std::to_string(split.train.size()) + ")");

  const bool needs_bundle = std::any_of(cfg.strategies.begin(), cfg.strategies.end(),
                                        [](Strategy s) { return s != Strategy::kScratch; });
  const std::string bundle_dir = (fs::path(out_dir) / "pretrained").string();
  if (needs_bundle) {
    const DatasetSplit source_split =
        split_dataset(source.size(), 0.7, 0.15, 0.15, cfg.global_seed);
    TrainConfig pcfg = cfg.base;
    pcfg.task = cfg.task;
    pcfg.strategy = Strategy::kScratch;
    pcfg.bundle.clear();
    pcfg.seed = Rng::from_seed(cfg.global_seed).derive(kWordPretrain).next_u64();
    TaskModel pre = make_model(cfg.task, pcfg.seed);
    train(pre, subset(source, source_split.train), source, source_split.val, source_split.test,
          pcfg);
    save_model(pre, bundle_dir, "source", hash_config(pcfg));
  }

  std::vector<std::vector<std::size_t>> orders;
  for (std::size_t s = 0; s < cfg.n_seeds; ++s)
    orders.push_back(sweep_subset_order(split.train, cfg.global_seed, s));

  struct Job {
    TrainConfig cfg;
    std::size_t size = 0;
    std::size_t seed_idx = 0;
  };
  std::vector<Job> jobs;
  for (std::size_t size : cfg.sizes)
    for (std::size_t seed_idx = 0; seed_idx < cfg.n_seeds; ++seed_idx)
      for (std::size_t si = 0; si < cfg.strategies.size(); ++si) {
        Job job;
        job.cfg = cfg.base;
        job.cfg.task = cfg.task;
        job.cfg.strategy = cfg.strategies[si];
        job.cfg.bundle = job.cfg.strategy == Strategy::kScratch ? "" : bundle_dir;
        job.cfg.seed = run_seed(cfg.global_seed, size, seed_idx,
                                static_cast<std::uint64_t>(job.cfg.strategy) + 10);
        job.size = size;
        job.seed_idx = seed_idx;
        jobs.push_back(std::move(job));
      }

  std::vector<RunResult> results(jobs.size());
  run_pool(cfg.jobs, jobs.size(), [&](std::size_t i) {
    const Job& job = jobs[i];
    try {
      const std::vector<std::size_t> prefix(orders[job.seed_idx].begin(),
                                            orders[job.seed_idx].begin() +
                                                static_cast<std::ptrdiff_t>(job.size));
      const TaskData train_data = subset(target, prefix);
      TaskModel model;
      RunResult r;
      if (job.cfg.strategy == Strategy::kScratch) {
        model = make_model(cfg.task, job.cfg.seed);
        r = train(model, train_data, target, split.val, split.test, job.cfg);
      } else {
        r = fine_tune(model, train_data, target, split.val, split.test, job.cfg);
      }
      r.seed = job.seed_idx;
      results[i] = std::move(r);
    } catch (const std::exception& e) {
      results[i] = failed_run(job.cfg, job.size, e.what());
      results[i].seed = job.seed_idx;
    }
  });

  write_sweep_outputs(out_dir, results);
  return results;
}

std::vector<RunResult> mix_sweep(const SweepConfig& cfg, const TaskData& a, const TaskData& b,
                                 double fraction_a, const std::string& out_dir) {
  check_sweep_config(cfg);
  if (a.task != cfg.task || b.task != cfg.task) fail("sweep data task mismatch");
  if (!(fraction_a >= 0.0 && fraction_a <= 1.0)) fail("fraction_a must lie in [0, 1]");
  fs::create_directories(out_dir);

  const DatasetSplit split = split_dataset(a.size(), 0.7, 0.15, 0.15, cfg.global_seed);
  const TaskData pool_a = subset(a, split.train);
  for (std::size_t s : cfg.sizes) {
    if (s > pool_a.size())
      fail("requested size " + std::to_string(s) + " exceeds the pure-domain train pool");
    const auto n_a =
        static_cast<std::size_t>(std::llround(static_cast<double>(s) * fraction_a));
    if (s - n_a > b.size()) fail("mixture needs more samples than dataset b holds");
  }

  struct Job {
    TrainConfig cfg;
    std::size_t size = 0;
    std::size_t seed_idx = 0;
    bool mixed = false;
  };
  std::vector<Job> jobs;
  for (std::size_t size : cfg.sizes)
    for (std::size_t seed_idx = 0; seed_idx < cfg.n_seeds; ++seed_idx)
      for (const bool mixed : {false, true}) {
        Job job;
        job.cfg = cfg.base;
        job.cfg.task = cfg.task;
        job.cfg.strategy = Strategy::kScratch;
        job.cfg.bundle.clear();
        job.cfg.seed = run_seed(cfg.global_seed, size, seed_idx, mixed ? 101 : 100);
        job.size = size;
        job.seed_idx = seed_idx;
        job.mixed = mixed;
        jobs.push_back(std::move(job));
      }

  std::vector<RunResult> results(jobs.size());
  run_pool(cfg.jobs, jobs.size(), [&](std::size_t i) {
    const Job& job = jobs[i];
    try {
      // One mixing stream per seed regardless of size, so subsets nest.
      const std::uint64_t mix_key =
          Rng::from_seed(cfg.global_seed).derive({kWordMix, job.seed_idx}).next_u64();
      const MixResult mr =
          mix_domains(pool_a, b, job.size, job.mixed ? fraction_a : 1.0, mix_key);
      TaskModel model = make_model(cfg.task, job.cfg.seed);
      RunResult r = train(model, mr.data, a, split.val, split.test, job.cfg);
      r.seed = job.seed_idx;
      r.strategy = job.mixed ? "mixed" : "pure_a";
      r.extras["fraction_a"] = job.mixed ? fraction_a : 1.0;
      r.extras["n_from_a"] = static_cast<double>(mr.n_a);
      r.extras["n_from_b"] = static_cast<double>(mr.n_b);
      results[i] = std::move(r);
    } catch (const std::exception& e) {
      results[i] = failed_run(job.cfg, job.size, e.what());
      results[i].seed = job.seed_idx;
      results[i].strategy = job.mixed ? "mixed" : "pure_a";
    }
  });

  write_sweep_outputs(out_dir, results);
  return results;
}

}  // namespace domainshift
