// SPDX-License-Identifier: Apache-2.0
//
// Optimization loop, transfer strategies, dataset splitting and mixing, and
// the multi-seed learning-curve sweep engine. Every run is deterministic
// given its config: RNG streams derive from (global seed, size, seed index,
// strategy), so sweep outputs are byte-identical regardless of job count.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "domainshift/evalkit.hpp"
#include "domainshift/features.hpp"
#include "domainshift/models.hpp"

namespace domainshift {

enum class Strategy { kScratch, kPretrainFull, kPretrainFrozen };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Mirrors the JSON config files field for field. Transfer strategies need a
// bundle path; lr must be positive and patience at least one.
struct TrainConfig {
  Task task = Task::kSB;
  AdamConfig adam;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::kScratch;
  std::string bundle;

  void validate() const;
};

// lr 1e-3 for the classifiers, 3e-4 for the regressor; batch 128, at most
// 100 epochs, patience 10.
TrainConfig default_config(Task task);

nlohmann::ordered_json config_to_json(const TrainConfig& c);
// Missing fields fall back to the task defaults.
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::string& path);
// Hash of the canonical serialized form, recorded in every run result.
std::string hash_config(const TrainConfig& c);

// Per-parameter first/second moment state keyed by parameter name; frozen
// parameters are skipped entirely.
class Adam {
 public:
  Adam(ParameterStore& store, AdamConfig cfg);
  void step();
  std::size_t steps() const { return t_; }

 private:
  ParameterStore* store_;
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> state_;
};

struct DatasetSplit {
  std::vector<std::size_t> train, val, test;
  std::uint64_t seed = 0;
};

// Deterministic shuffle by seed; test indices are drawn first so varying the
// training size never perturbs them. Fractions must be positive and sum to
// one; every part must come out non-empty.
DatasetSplit split_dataset(std::size_t n, double train_frac, double val_frac,
                           double test_frac, std::uint64_t seed);

// One prepared dataset; exactly the member matching the task is populated.
struct TaskData {
  Task task = Task::kSB;
  SBDataset sb;
  QGDataset qg;
  METDataset met;

  std::size_t size() const;
};

TaskData load_task_data(Task task, const std::string& path);
TaskData subset(const TaskData& d, const std::vector<std::size_t>& indices);

// Mixture drawn without replacement: round(total * fraction_a) samples from
// a, the rest from b, shuffled together with per-sample provenance.
struct MixResult {
  TaskData data;
  std::vector<std::uint8_t> from_a;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

MixResult mix_domains(const TaskData& a, const TaskData& b, std::size_t total,
                      double fraction_a, std::uint64_t seed);

// A model plus the input transform it was trained with. Move-only: copying
// would alias the underlying parameter tensors.
struct TaskModel {
  Task task = Task::kSB;
  ParameterStore store;
  std::optional<SBClassifier> sb;
  std::optional<QGTagger> qg;
  std::optional<METRegressor> met;
  Standardizer standardizer;
  std::size_t k = kDefaultKnn;
  std::size_t n_max = kDefaultMetTracks;

  TaskModel() = default;
  TaskModel(const TaskModel&) = delete;
  TaskModel& operator=(const TaskModel&) = delete;
  TaskModel(TaskModel&&) = default;
  TaskModel& operator=(TaskModel&&) = default;
};

TaskModel make_model(Task task, std::uint64_t init_seed);
TaskModel load_model(const std::string& bundle_dir);
void save_model(const TaskModel& m, const std::string& bundle_dir,
                const std::string& source_tag, const std::string& cfg_hash);

// Eval-mode outputs for the listed samples: signal probability for the
// classifier, logits for the tagger, MET magnitude for the regressor.
std::vector<double> predict(TaskModel& m, const TaskData& d,
                            const std::vector<std::size_t>& idx);

// AUC for the classifiers (maximize), regression loss for met (minimize).
double evaluate_metric(TaskModel& m, const TaskData& d,
                       const std::vector<std::size_t>& idx);

// Trains the model in place on every sample of train_data. The validation
// metric is evaluated after each epoch; the best checkpoint (including the
// initial state) is restored before the single test evaluation. A model
// without a fitted standardizer gets one from train_data; a bundle-loaded
// model keeps its source-domain transform. NaN loss aborts with the epoch,
// batch index and learning rate in the message.
RunResult train(TaskModel& model, const TaskData& train_data, const TaskData& eval_data,
                const std::vector<std::size_t>& val_idx,
                const std::vector<std::size_t>& test_idx, const TrainConfig& cfg);

// Loads cfg.bundle into a fresh model (architecture must match cfg.task),
// applies the canonical freeze when the strategy asks for it, then trains.
RunResult fine_tune(TaskModel& model, const TaskData& train_data, const TaskData& eval_data,
                    const std::vector<std::size_t>& val_idx,
                    const std::vector<std::size_t>& test_idx, const TrainConfig& cfg);

// Per-seed shuffle of a training pool. Learning-curve subsets are prefixes
// of this order, so smaller sizes nest inside larger ones.
std::vector<std::size_t> sweep_subset_order(const std::vector<std::size_t>& train_pool,
                                            std::uint64_t global_seed, std::size_t seed_idx);

struct SweepConfig {
  Task task = Task::kSB;
  std::vector<std::size_t> sizes;
  std::size_t n_seeds = 5;
  std::vector<Strategy> strategies{Strategy::kScratch, Strategy::kPretrainFull,
                                   Strategy::kPretrainFrozen};
  std::uint64_t global_seed = 0;
  std::size_t jobs = 1;
  TrainConfig base;  // template; task/seed/strategy/bundle are filled per run
};

std::vector<std::size_t> default_size_grid();

// Full (size x seed x strategy) grid on the target domain. Transfer
// strategies share one bundle pretrained on the full source train split
// (saved under out_dir/pretrained). Emits runs.jsonl, curves.csv and
// timings.jsonl into out_dir; failed runs are recorded and the sweep
// continues.
std::vector<RunResult> learning_curve_sweep(const SweepConfig& cfg, const TaskData& source,
                                            const TaskData& target, const std::string& out_dir);

// Pure-vs-mixed comparison at fixed total size: for each (size, seed) one
// run trains on a pure-a subset and one on a fraction_a mixture of a and b,
// both scored on the same fixed pure-a validation and test splits.
std::vector<RunResult> mix_sweep(const SweepConfig& cfg, const TaskData& a, const TaskData& b,
                                 double fraction_a, const std::string& out_dir);

}  // namespace domainshift
