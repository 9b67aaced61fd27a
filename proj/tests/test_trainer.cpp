// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "domainshift/trainer.hpp"
#include "domainshift/version.hpp"

using namespace domainshift;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("domainshift_trainer_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Balanced binary set separable along the first feature; ideal AUC ~ 0.998.
TaskData make_sb_data(std::size_t n, std::uint64_t seed, double shift = 2.0) {
  TaskData d;
  d.task = Task::kSB;
  Rng rng = Rng::from_seed(seed);
  for (std::size_t i = 0; i < n; ++i) {
    SBSample s;
    s.label = static_cast<int>(i % 2);
    for (auto& v : s.features) v = rng.normal(0.0, 1.0);
    s.features[0] += s.label ? shift : -shift;
    d.sb.samples.push_back(s);
  }
  return d;
}

TaskData make_qg_data(std::size_t n, std::uint64_t seed, std::size_t k = 3) {
  TaskData d;
  d.task = Task::kQG;
  d.qg.k = k;
  Rng rng = Rng::from_seed(seed);
  for (std::size_t i = 0; i < n; ++i) {
    JetSample s;
    s.label = static_cast<int>(i % 2);
    s.jet_pt = 60.0;
    const std::size_t n_real = s.label ? 4 : 7;
    s.features.assign(kJetMaxTracks * kJetFeatureCount, 0.0);
    s.real_mask.assign(kJetMaxTracks, 0);
    for (std::size_t t = 0; t < n_real; ++t) {
      double* row = s.features.data() + t * kJetFeatureCount;
      row[0] = rng.uniform(0.5, s.label ? 3.0 : 1.5);
      row[1] = rng.uniform(-0.3, 0.3);
      row[2] = rng.uniform(-0.3, 0.3);
      row[3] = rng.sign();
      row[4] = rng.normal(0.0, 0.05);
      row[5] = rng.normal(0.0, 1.0);
      s.real_mask[t] = 1;
    }
    d.qg.samples.push_back(s);
  }
  return d;
}

TaskData make_met_data(std::size_t n, std::uint64_t seed, std::size_t n_max = 6) {
  TaskData d;
  d.task = Task::kMET;
  d.met.n_max = n_max;
  Rng rng = Rng::from_seed(seed);
  for (std::size_t i = 0; i < n; ++i) {
    METSample s;
    s.features.assign(n_max * kMetFeatureCount, 0.0);
    s.real_mask.assign(n_max, 0);
    s.target = 42.0 + rng.uniform(0.0, 16.0);
    const std::size_t n_real = 2 + rng.uniform_int(n_max - 1);
    for (std::size_t t = 0; t < n_real; ++t) {
      double* row = s.features.data() + t * kMetFeatureCount;
      row[0] = rng.normal(0.0, 10.0);
      row[1] = rng.normal(0.0, 10.0);
      row[2] = rng.normal(0.0, 20.0);
      row[3] = rng.normal(0.0, 0.05);
      s.real_mask[t] = 1;
    }
    d.met.samples.push_back(s);
  }
  return d;
}

std::vector<std::size_t> iota_idx(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> idx;
  for (std::size_t i = lo; i < hi; ++i) idx.push_back(i);
  return idx;
}

TrainConfig quick_config(Task task, std::uint64_t seed, std::size_t epochs) {
  TrainConfig c = default_config(task);
  c.max_epochs = epochs;
  c.patience = epochs == 0 ? 1 : epochs;
  c.batch_size = 16;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("configs round-trip through json and hash canonically") {
  TrainConfig c = default_config(Task::kSB);
  CHECK(c.adam.lr == 1e-3);
  CHECK(default_config(Task::kMET).adam.lr == 3e-4);
  CHECK(default_config(Task::kQG).adam.lr == 1e-3);
  CHECK(c.batch_size == 128);
  CHECK(c.max_epochs == 100);
  CHECK(c.patience == 10);

  c.task = Task::kQG;
  c.adam.lr = 5e-4;
  c.batch_size = 64;
  c.seed = 99;
  c.strategy = Strategy::kPretrainFrozen;
  c.bundle = "some/dir";
  const TrainConfig back = config_from_json(config_to_json(c));
  CHECK(back.task == c.task);
  CHECK(back.adam.lr == c.adam.lr);
  CHECK(back.adam.beta1 == c.adam.beta1);
  CHECK(back.batch_size == c.batch_size);
  CHECK(back.max_epochs == c.max_epochs);
  CHECK(back.patience == c.patience);
  CHECK(back.seed == c.seed);
  CHECK(back.strategy == c.strategy);
  CHECK(back.bundle == c.bundle);
  CHECK(hash_config(back) == hash_config(c));

  TrainConfig other = c;
  other.adam.lr = 6e-4;
  CHECK(hash_config(other) != hash_config(c));

  // Missing fields fall back to task defaults.
  const TrainConfig sparse = config_from_json(nlohmann::json{{"task", "met"}});
  CHECK(sparse.adam.lr == 3e-4);
  CHECK(sparse.batch_size == 128);
  CHECK(sparse.strategy == Strategy::kScratch);
}

TEST_CASE("bad configs are rejected") {
  TrainConfig c = default_config(Task::kSB);
  c.adam.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), std::runtime_error);
  c = default_config(Task::kSB);
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(), std::runtime_error);
  c = default_config(Task::kSB);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::runtime_error);
  c = default_config(Task::kSB);
  c.strategy = Strategy::kPretrainFull;
  CHECK_THROWS_AS(c.validate(), std::runtime_error);
  c.bundle = "b";
  CHECK_NOTHROW(c.validate());
  CHECK_THROWS_AS(strategy_from_string("warm_start"), std::runtime_error);
  for (const Strategy s :
       {Strategy::kScratch, Strategy::kPretrainFull, Strategy::kPretrainFrozen})
    CHECK(strategy_from_string(to_string(s)) == s);
}

TEST_CASE("splits are deterministic, disjoint and exhaustive") {
  const DatasetSplit s = split_dataset(100, 0.7, 0.15, 0.15, 42);
  CHECK(s.train.size() == 70);
  CHECK(s.val.size() == 15);
  CHECK(s.test.size() == 15);

  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.val.begin(), s.val.end());
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 100; ++i) CHECK(all[i] == i);

  const DatasetSplit again = split_dataset(100, 0.7, 0.15, 0.15, 42);
  CHECK(again.train == s.train);
  CHECK(again.val == s.val);
  CHECK(again.test == s.test);
  CHECK(split_dataset(100, 0.7, 0.15, 0.15, 43).train != s.train);
}

TEST_CASE("test indices never move when the other fractions change") {
  const DatasetSplit a = split_dataset(200, 0.70, 0.15, 0.15, 7);
  const DatasetSplit b = split_dataset(200, 0.55, 0.30, 0.15, 7);
  CHECK(a.test == b.test);
  // Validation is drawn second, so it is a prefix of the wider draw.
  CHECK(std::equal(a.val.begin(), a.val.end(), b.val.begin()));
}

TEST_CASE("degenerate splits are rejected") {
  CHECK_THROWS_AS(split_dataset(100, 0.5, 0.25, 0.30, 1), std::runtime_error);
  CHECK_THROWS_AS(split_dataset(100, 0.7, 0.15, -0.15, 1), std::runtime_error);
  CHECK_THROWS_AS(split_dataset(2, 0.7, 0.15, 0.15, 1), std::runtime_error);
  CHECK_NOTHROW(split_dataset(10, 0.8, 0.1, 0.1, 1));
}

TEST_CASE("adam drives a quadratic to its minimum and skips frozen tensors") {
  ParameterStore ps;
  Tensor w = ps.create("w", Tensor(Shape{3}, {5.0, -4.0, 2.5}));
  Tensor frozen = ps.create("side.buf", Tensor(Shape{2}, {1.0, 2.0}), false);
  const std::vector<double> target{1.0, 2.0, -3.0};
  const std::vector<double> frozen_before = frozen.values();

  AdamConfig ac;
  ac.lr = 0.1;
  Adam adam(ps, ac);
  for (int step = 0; step < 400; ++step) {
    TapeScope scope;
    const Tensor diff = subtract(w, Tensor(Shape{3}, std::vector<double>(target)));
    const Tensor loss = sum_all(multiply(diff, diff));
    ps.zero_grads();
    backward(loss);
    adam.step();
  }
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(std::abs(w.values()[i] - target[i]) < 1e-3);
  CHECK(frozen.values() == frozen_before);
  CHECK_FALSE(frozen.has_grad());
  CHECK(adam.steps() == 400);
}

TEST_CASE("mixtures honor the requested ratio and record provenance") {
  TaskData a = make_sb_data(60, 1);
  TaskData b = make_sb_data(60, 2);
  for (auto& s : a.sb.samples) s.features[1] = 1000.0;
  for (auto& s : b.sb.samples) s.features[1] = -1000.0;

  const MixResult m = mix_domains(a, b, 40, 0.5, 9);
  CHECK(m.n_a == 20);
  CHECK(m.n_b == 20);
  CHECK(m.data.size() == 40);
  CHECK(m.from_a.size() == 40);
  std::size_t seen_a = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    const bool marked_a = m.data.sb.samples[i].features[1] > 0.0;
    CHECK(marked_a == static_cast<bool>(m.from_a[i]));
    seen_a += marked_a;
  }
  CHECK(seen_a == 20);

  const MixResult pure = mix_domains(a, b, 30, 1.0, 9);
  CHECK(pure.n_b == 0);
  for (std::size_t i = 0; i < 30; ++i) CHECK(pure.data.sb.samples[i].features[1] > 0.0);

  CHECK_THROWS_AS(mix_domains(a, b, 130, 0.5, 9), std::runtime_error);
  CHECK_THROWS_AS(mix_domains(a, b, 40, 1.5, 9), std::runtime_error);
  TaskData qg = make_qg_data(4, 3);
  CHECK_THROWS_AS(mix_domains(a, qg, 4, 0.5, 9), std::runtime_error);
  TaskData qg2 = make_qg_data(4, 4, 5);
  CHECK_THROWS_AS(mix_domains(qg, qg2, 4, 0.5, 9), std::runtime_error);
}

TEST_CASE("mixtures drawn at growing sizes nest for a fixed seed") {
  TaskData a = make_sb_data(50, 5);
  TaskData b = make_sb_data(50, 6);
  for (std::size_t i = 0; i < 50; ++i) {
    a.sb.samples[i].features[2] = static_cast<double>(i);
    b.sb.samples[i].features[2] = static_cast<double>(100 + i);
  }
  const MixResult small = mix_domains(a, b, 20, 0.5, 77);
  const MixResult big = mix_domains(a, b, 40, 0.5, 77);
  std::set<double> small_ids, big_ids;
  for (const auto& s : small.data.sb.samples) small_ids.insert(s.features[2]);
  for (const auto& s : big.data.sb.samples) big_ids.insert(s.features[2]);
  CHECK(small_ids.size() == 20);
  CHECK(std::includes(big_ids.begin(), big_ids.end(), small_ids.begin(), small_ids.end()));
}

TEST_CASE("subset copies the selected samples and keeps dataset metadata") {
  const TaskData d = make_qg_data(10, 8, 4);
  const TaskData s = subset(d, {7, 2, 2});
  CHECK(s.size() == 3);
  CHECK(s.qg.k == 4);
  CHECK(s.qg.samples[0].label == d.qg.samples[7].label);
  CHECK(s.qg.samples[1].features == d.qg.samples[2].features);
  CHECK(s.qg.samples[2].features == d.qg.samples[2].features);
  CHECK_THROWS_AS(subset(d, {10}), std::runtime_error);
}

TEST_CASE("training separates an easy classification set and reproduces bitwise") {
  const TaskData train_data = make_sb_data(48, 21);
  const TaskData eval_data = make_sb_data(60, 22);
  const auto val_idx = iota_idx(0, 30);
  const auto test_idx = iota_idx(30, 60);
  TrainConfig cfg = quick_config(Task::kSB, 5, 30);
  cfg.adam.lr = 3e-3;

  TaskModel m1 = make_model(Task::kSB, 101);
  const RunResult r1 = train(m1, train_data, eval_data, val_idx, test_idx, cfg);
  CHECK(r1.test_metric > 0.95);
  CHECK(r1.val_metric >= r1.extras.at("epoch0_val"));
  CHECK(r1.epochs_run >= 1);
  CHECK(r1.epochs_run <= 30);
  CHECK(r1.task == "sb");
  CHECK(r1.strategy == "scratch");
  CHECK(r1.train_size == 48);
  CHECK(r1.config_hash == hash_config(cfg));
  CHECK(r1.code_version == kCodeVersion);
  CHECK(r1.wall_seconds > 0.0);
  CHECK_FALSE(r1.failed);

  // The restored checkpoint must reproduce the recorded validation metric.
  TaskModel m1b = std::move(m1);
  CHECK(evaluate_metric(m1b, eval_data, val_idx) == r1.val_metric);

  TaskModel m2 = make_model(Task::kSB, 101);
  const RunResult r2 = train(m2, train_data, eval_data, val_idx, test_idx, cfg);
  CHECK(run_to_json(r1).dump() == run_to_json(r2).dump());
  for (std::size_t i = 0; i < m1b.store.items().size(); ++i)
    CHECK(m1b.store.items()[i].value.values() == m2.store.items()[i].value.values());
}

TEST_CASE("zero allowed epochs reports the untrained metrics") {
  const TaskData train_data = make_sb_data(32, 31);
  const TaskData eval_data = make_sb_data(40, 32);
  const TrainConfig cfg = quick_config(Task::kSB, 5, 0);
  TaskModel m = make_model(Task::kSB, 77);
  const RunResult r = train(m, train_data, eval_data, iota_idx(0, 20), iota_idx(20, 40), cfg);
  CHECK(r.epochs_run == 0);
  CHECK(r.val_metric == r.extras.at("epoch0_val"));
}

TEST_CASE("the tagger and regressor loops run end to end") {
  const TaskData qg_train = make_qg_data(12, 41);
  const TaskData qg_eval = make_qg_data(12, 42);
  TrainConfig qcfg = quick_config(Task::kQG, 3, 1);
  qcfg.batch_size = 6;
  TaskModel qm = make_model(Task::kQG, 9);
  const RunResult qr = train(qm, qg_train, qg_eval, iota_idx(0, 6), iota_idx(6, 12), qcfg);
  CHECK(qr.epochs_run == 1);
  CHECK(qr.val_metric >= 0.0);
  CHECK(qr.val_metric <= 1.0);
  CHECK(qm.k == 3);

  const TaskData met_train = make_met_data(10, 43);
  const TaskData met_eval = make_met_data(8, 44);
  TrainConfig mcfg = quick_config(Task::kMET, 3, 1);
  mcfg.batch_size = 4;
  TaskModel mm = make_model(Task::kMET, 9);
  const RunResult mr = train(mm, met_train, met_eval, iota_idx(0, 4), iota_idx(4, 8), mcfg);
  CHECK(mr.epochs_run == 1);
  CHECK(mr.test_metric > 0.0);
  // Every synthetic target sits in [42, 58), so the profile bin is filled.
  CHECK(mr.extras.count("bias_40_60") == 1);
  CHECK(mr.extras.count("width_40_60") == 1);
}

TEST_CASE("a diverging run aborts with a diagnostic") {
  const TaskData train_data = make_met_data(4, 51, 4);
  const TaskData eval_data = make_met_data(6, 52, 4);
  TrainConfig cfg = quick_config(Task::kMET, 5, 1);
  cfg.batch_size = 2;
  cfg.adam.lr = 1e160;
  TaskModel m = make_model(Task::kMET, 3);
  CHECK_THROWS_WITH_AS(train(m, train_data, eval_data, iota_idx(0, 3), iota_idx(3, 6), cfg),
                       doctest::Contains("non-finite loss"), std::runtime_error);
}

TEST_CASE("fine-tuning reuses the bundle transform and freezing pins weights") {
  const std::string dir = tmp_dir("bundle");
  const TaskData source = make_sb_data(80, 61);
  const DatasetSplit split = split_dataset(80, 0.7, 0.15, 0.15, 3);
  TrainConfig pcfg = quick_config(Task::kSB, 5, 4);
  TaskModel pre = make_model(Task::kSB, 11);
  train(pre, subset(source, split.train), source, split.val, split.test, pcfg);
  save_model(pre, dir, "domain_a", hash_config(pcfg));

  const TaskData target = make_sb_data(48, 62);
  const TaskData target_eval = make_sb_data(40, 63);
  TrainConfig fcfg = quick_config(Task::kSB, 6, 3);
  fcfg.strategy = Strategy::kPretrainFrozen;
  fcfg.bundle = dir;

  TaskModel tuned;
  const RunResult r =
      fine_tune(tuned, target, target_eval, iota_idx(0, 20), iota_idx(20, 40), fcfg);
  CHECK(r.strategy == "pretrain_frozen");
  CHECK_FALSE(r.failed);

  TaskModel shipped = load_model(dir);
  CHECK(tuned.standardizer.mean == shipped.standardizer.mean);
  CHECK(tuned.standardizer.stdev == shipped.standardizer.stdev);
  bool some_trainable_moved = false;
  for (std::size_t i = 0; i < tuned.store.items().size(); ++i) {
    const auto& p = tuned.store.items()[i];
    const auto& q = shipped.store.items()[i];
    if (p.name.rfind("sb.dense0", 0) == 0) {
      CHECK(p.value.values() == q.value.values());
      CHECK_FALSE(p.trainable);
    } else if (p.value.values() != q.value.values()) {
      some_trainable_moved = true;
    }
  }
  CHECK(some_trainable_moved);

  // Zero epochs of full fine-tuning is exactly the shipped model.
  TrainConfig zcfg = quick_config(Task::kSB, 6, 0);
  zcfg.strategy = Strategy::kPretrainFull;
  zcfg.bundle = dir;
  TaskModel zero;
  const RunResult zr =
      fine_tune(zero, target, target_eval, iota_idx(0, 20), iota_idx(20, 40), zcfg);
  CHECK(zr.epochs_run == 0);
  for (std::size_t i = 0; i < zero.store.items().size(); ++i)
    CHECK(zero.store.items()[i].value.values() == shipped.store.items()[i].value.values());

  TrainConfig bad = quick_config(Task::kQG, 6, 1);
  bad.strategy = Strategy::kPretrainFull;
  bad.bundle = dir;
  TaskModel wrong;
  CHECK_THROWS_AS(fine_tune(wrong, make_qg_data(8, 1), make_qg_data(8, 2), iota_idx(0, 4),
                            iota_idx(4, 8), bad),
                  std::runtime_error);

  TrainConfig scratch = quick_config(Task::kSB, 6, 1);
  TaskModel sm;
  CHECK_THROWS_AS(
      fine_tune(sm, target, target_eval, iota_idx(0, 20), iota_idx(20, 40), scratch),
      std::runtime_error);
}

TEST_CASE("per-seed subset orders nest and differ across seeds") {
  const std::vector<std::size_t> pool = iota_idx(100, 150);
  const auto o0 = sweep_subset_order(pool, 13, 0);
  const auto o0_again = sweep_subset_order(pool, 13, 0);
  const auto o1 = sweep_subset_order(pool, 13, 1);
  CHECK(o0 == o0_again);
  CHECK(o0 != o1);
  std::vector<std::size_t> sorted = o0;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == pool);
}

TEST_CASE("the learning-curve sweep covers the grid identically at any job count") {
  const TaskData source = make_sb_data(120, 71);
  const TaskData target = make_sb_data(160, 72);
  SweepConfig cfg;
  cfg.task = Task::kSB;
  cfg.sizes = {16, 32};
  cfg.n_seeds = 2;
  cfg.global_seed = 7;
  cfg.base = quick_config(Task::kSB, 0, 2);

  const std::string dir1 = tmp_dir("sweep_serial");
  cfg.jobs = 1;
  const std::vector<RunResult> runs = learning_curve_sweep(cfg, source, target, dir1);
  REQUIRE(runs.size() == 12);

  std::size_t i = 0;
  for (const std::size_t size : cfg.sizes)
    for (std::uint64_t seed = 0; seed < 2; ++seed)
      for (const char* strat : {"scratch", "pretrain_full", "pretrain_frozen"}) {
        CHECK(runs[i].train_size == size);
        CHECK(runs[i].seed == seed);
        CHECK(runs[i].strategy == strat);
        CHECK_FALSE(runs[i].failed);
        CHECK(runs[i].task == "sb");
        ++i;
      }

  CHECK(fs::exists(fs::path(dir1) / "runs.jsonl"));
  CHECK(fs::exists(fs::path(dir1) / "curves.csv"));
  CHECK(fs::exists(fs::path(dir1) / "timings.jsonl"));
  CHECK(fs::exists(fs::path(dir1) / "pretrained" / "params.txt"));
  CHECK(fs::exists(fs::path(dir1) / "pretrained" / "meta.json"));
  CHECK(read_runs((fs::path(dir1) / "runs.jsonl").string()).size() == 12);

  const std::string dir2 = tmp_dir("sweep_parallel");
  cfg.jobs = 2;
  learning_curve_sweep(cfg, source, target, dir2);
  CHECK(slurp((fs::path(dir1) / "runs.jsonl").string()) ==
        slurp((fs::path(dir2) / "runs.jsonl").string()));
  CHECK(slurp((fs::path(dir1) / "curves.csv").string()) ==
        slurp((fs::path(dir2) / "curves.csv").string()));
}

TEST_CASE("the mix sweep trains pure and blended sets on one footing") {
  const TaskData a = make_sb_data(160, 81);
  const TaskData b = make_sb_data(120, 82);
  SweepConfig cfg;
  cfg.task = Task::kSB;
  cfg.sizes = {16, 32};
  cfg.n_seeds = 2;
  cfg.global_seed = 5;
  cfg.base = quick_config(Task::kSB, 0, 2);

  const std::string dir1 = tmp_dir("mix_serial");
  cfg.jobs = 1;
  const std::vector<RunResult> runs = mix_sweep(cfg, a, b, 0.5, dir1);
  REQUIRE(runs.size() == 8);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const RunResult& r = runs[i];
    CHECK_FALSE(r.failed);
    CHECK(r.strategy == (i % 2 ? "mixed" : "pure_a"));
    const double from_a = r.extras.at("n_from_a");
    const double from_b = r.extras.at("n_from_b");
    CHECK(from_a + from_b == static_cast<double>(r.train_size));
    if (i % 2) {
      CHECK(r.extras.at("fraction_a") == 0.5);
      CHECK(from_b == from_a);
    } else {
      CHECK(r.extras.at("fraction_a") == 1.0);
      CHECK(from_b == 0.0);
    }
  }

  const std::string dir2 = tmp_dir("mix_parallel");
  cfg.jobs = 3;
  mix_sweep(cfg, a, b, 0.5, dir2);
  CHECK(slurp((fs::path(dir1) / "runs.jsonl").string()) ==
        slurp((fs::path(dir2) / "runs.jsonl").string()));
}

TEST_CASE("sweeps refuse sizes beyond the training pool") {
  const TaskData source = make_sb_data(40, 91);
  const TaskData target = make_sb_data(40, 92);
  SweepConfig cfg;
  cfg.task = Task::kSB;
  cfg.sizes = {1000};
  cfg.n_seeds = 1;
  cfg.global_seed = 1;
  cfg.base = quick_config(Task::kSB, 0, 1);
  const std::string dir = tmp_dir("sweep_oversized");
  CHECK_THROWS_WITH_AS(learning_curve_sweep(cfg, source, target, dir),
                       doctest::Contains("exceeds"), std::runtime_error);
  CHECK_THROWS_AS(mix_sweep(cfg, source, target, 0.5, dir), std::runtime_error);
  cfg.sizes = {};
  CHECK_THROWS_AS(learning_curve_sweep(cfg, source, target, dir), std::runtime_error);
}
