// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: generate toy events, prepare task datasets, train
// and transfer models, run learning-curve and mixing sweeps, and render
// reports. Every command is deterministic given its arguments; the global
// seed comes from --seed, falling back to DOMAINSHIFT_SEED, then zero.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "domainshift/event_io.hpp"
#include "domainshift/trainer.hpp"
#include "domainshift/version.hpp"

namespace fs = std::filesystem;
using namespace domainshift;

namespace {

std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t cli_value) {
  if (opt->count() > 0) return cli_value;
  if (const char* env = std::getenv("DOMAINSHIFT_SEED")) return std::stoull(env);
  return 0;
}

TrainConfig base_config(Task task, const std::string& config_path) {
  return config_path.empty() ? default_config(task) : load_train_config(config_path);
}

TaskData load_samples(Task task, const std::string& path) {
  TaskData d = load_task_data(task, path);
  std::cerr << "loaded " << d.size() << " samples from " << path << "\n";
  return d;
}

std::vector<Event> read_event_files(const std::vector<std::string>& paths) {
  std::vector<Event> events;
  for (const std::string& p : paths) {
    std::vector<Event> part = read_events(p);
    events.insert(events.end(), part.begin(), part.end());
  }
  return events;
}

int run(int argc, char** argv) {
  CLI::App app{"toy collider domain-shift benchmark"};
  app.set_version_flag("--version", std::string(kCodeVersion));
  app.require_subcommand(1);
  app.fallthrough();
  std::size_t jobs = 1;
  app.add_option("--jobs", jobs, "worker threads for sweeps")->capture_default_str();

  // gen
  auto* gen = app.add_subcommand("gen", "generate labeled toy events");
  std::string gen_process, gen_domain = "A", gen_out;
  std::size_t gen_n = 0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--process", gen_process, "TTBAR, WW, WJETS or ZJETS")->required();
  gen->add_option("--domain", gen_domain, "A, B or C")->capture_default_str();
  gen->add_option("--n", gen_n, "number of events")->required();
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--out", gen_out, "output events file (.jsonl or .jsonl.gz)")->required();

  // prepare
  auto* prepare = app.add_subcommand("prepare", "build task samples from events");
  std::string prep_task, prep_out;
  std::vector<std::string> prep_in;
  std::size_t prep_k = kDefaultKnn, prep_nmax = kDefaultMetTracks;
  std::uint64_t prep_seed = 0;
  prepare->add_option("--task", prep_task, "sb, qg or met")->required();
  prepare->add_option("--in", prep_in, "event file, repeatable")->required();
  prepare->add_option("--out", prep_out, "output samples file")->required();
  prepare->add_option("--k", prep_k, "tagger neighbor count")->capture_default_str();
  prepare->add_option("--nmax", prep_nmax, "regressor track capacity")->capture_default_str();
  auto* prep_seed_opt = prepare->add_option("--seed", prep_seed, "reweighting seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model from scratch");
  std::string tr_task, tr_data, tr_config, tr_out;
  train_cmd->add_option("--task", tr_task, "sb, qg or met")->required();
  train_cmd->add_option("--data", tr_data, "prepared samples")->required();
  train_cmd->add_option("--config", tr_config, "training config json");
  train_cmd->add_option("--out", tr_out, "output bundle directory")->required();

  // transfer
  auto* transfer = app.add_subcommand("transfer", "fine-tune a bundle on new samples");
  std::string tf_task, tf_bundle, tf_data, tf_strategy, tf_config;
  transfer->add_option("--task", tf_task, "sb, qg or met")->required();
  transfer->add_option("--bundle", tf_bundle, "pretrained bundle directory")->required();
  transfer->add_option("--data", tf_data, "prepared samples")->required();
  transfer->add_option("--strategy", tf_strategy, "full or frozen")->required();
  transfer->add_option("--config", tf_config, "training config json");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "learning-curve grid over sizes and seeds");
  std::string sw_task, sw_source, sw_target, sw_config, sw_out;
  std::vector<std::size_t> sw_sizes;
  std::size_t sw_seeds = 5;
  std::uint64_t sw_seed = 0;
  sweep->add_option("--task", sw_task, "sb, qg or met")->required();
  sweep->add_option("--source", sw_source, "pretraining samples")->required();
  sweep->add_option("--target", sw_target, "target-domain samples")->required();
  sweep->add_option("--sizes", sw_sizes, "training sizes")->required()->delimiter(',');
  sweep->add_option("--seeds", sw_seeds, "seeds per size")->capture_default_str();
  sweep->add_option("--config", sw_config, "training config json");
  auto* sw_seed_opt = sweep->add_option("--seed", sw_seed, "global sweep seed");
  sweep->add_option("--out", sw_out, "output directory")->required();

  // mix-sweep
  auto* mix = app.add_subcommand("mix-sweep", "pure-vs-mixed grid at fixed sizes");
  std::string mx_task, mx_a, mx_b, mx_config, mx_out;
  std::vector<std::size_t> mx_sizes;
  std::size_t mx_seeds = 5;
  double mx_fraction = 0.5;
  std::uint64_t mx_seed = 0;
  mix->add_option("--task", mx_task, "sb, qg or met")->required();
  mix->add_option("--a", mx_a, "evaluation-domain samples")->required();
  mix->add_option("--b", mx_b, "admixture-domain samples")->required();
  mix->add_option("--fraction", mx_fraction, "fraction drawn from a")->capture_default_str();
  mix->add_option("--sizes", mx_sizes, "training sizes")->required()->delimiter(',');
  mix->add_option("--seeds", mx_seeds, "seeds per size")->capture_default_str();
  mix->add_option("--config", mx_config, "training config json");
  auto* mx_seed_opt = mix->add_option("--seed", mx_seed, "global sweep seed");
  mix->add_option("--out", mx_out, "output directory")->required();

  // report
  auto* report = app.add_subcommand("report", "aggregate sweep outputs into a report");
  std::string rp_in, rp_out;
  report->add_option("--in", rp_in, "directory holding runs.jsonl")->required();
  report->add_option("--out", rp_out, "report directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (*gen) {
    const Process process = process_from_string(gen_process);
    const DomainConfig config = DomainConfig::by_name(domain_from_string(gen_domain));
    const std::uint64_t seed = resolve_seed(gen_seed_opt, gen_seed);
    const Rng root = Rng::from_seed(seed);
    std::vector<Event> events;
    events.reserve(gen_n);
    for (std::size_t i = 0; i < gen_n; ++i)
      events.push_back(generate_event(process, config, root.derive(i).next_u64()));
    write_events(gen_out, events);
    std::cerr << "wrote " << events.size() << " events to " << gen_out << "\n";
    return 0;
  }

  if (*prepare) {
    const Task task = task_from_string(prep_task);
    const std::vector<Event> events = read_event_files(prep_in);
    PrepareStats stats;
    switch (task) {
      case Task::kSB:
        write_sb_dataset(prep_out, prepare_sb(events, &stats), &stats);
        break;
      case Task::kQG: {
        Rng rng = Rng::from_seed(resolve_seed(prep_seed_opt, prep_seed));
        write_qg_dataset(prep_out, prepare_qg(events, prep_k, rng, &stats), {}, &stats);
        break;
      }
      case Task::kMET:
        write_met_dataset(prep_out, prepare_met(events, prep_nmax, &stats), &stats);
        break;
    }
    std::cerr << "prepared " << prep_out << " from " << stats.events_read << " events ("
              << stats.accepted << " accepted)\n";
    return 0;
  }

  if (*train_cmd) {
    const Task task = task_from_string(tr_task);
    TrainConfig cfg = base_config(task, tr_config);
    cfg.task = task;
    cfg.strategy = Strategy::kScratch;
    cfg.bundle.clear();
    cfg.validate();
    const TaskData data = load_samples(task, tr_data);
    const DatasetSplit split = split_dataset(data.size(), 0.7, 0.15, 0.15, cfg.seed);
    TaskModel model = make_model(task, cfg.seed);
    const RunResult r =
        train(model, subset(data, split.train), data, split.val, split.test, cfg);
    save_model(model, tr_out, fs::path(tr_data).filename().string(), hash_config(cfg));
    std::cout << run_to_json(r).dump() << "\n";
    return 0;
  }

  if (*transfer) {
    const Task task = task_from_string(tf_task);
    TrainConfig cfg = base_config(task, tf_config);
    cfg.task = task;
    if (tf_strategy == "full")
      cfg.strategy = Strategy::kPretrainFull;
    else if (tf_strategy == "frozen")
      cfg.strategy = Strategy::kPretrainFrozen;
    else
      throw std::runtime_error("unknown transfer strategy: " + tf_strategy);
    cfg.bundle = tf_bundle;
    cfg.validate();
    const TaskData data = load_samples(task, tf_data);
    const DatasetSplit split = split_dataset(data.size(), 0.7, 0.15, 0.15, cfg.seed);
    TaskModel model;
    const RunResult r =
        fine_tune(model, subset(data, split.train), data, split.val, split.test, cfg);
    std::cout << run_to_json(r).dump() << "\n";
    return 0;
  }

  if (*sweep) {
    const Task task = task_from_string(sw_task);
    SweepConfig cfg;
    cfg.task = task;
    cfg.sizes = sw_sizes;
    cfg.n_seeds = sw_seeds;
    cfg.global_seed = resolve_seed(sw_seed_opt, sw_seed);
    cfg.jobs = jobs;
    cfg.base = base_config(task, sw_config);
    const TaskData source = load_samples(task, sw_source);
    const TaskData target = load_samples(task, sw_target);
    const auto runs = learning_curve_sweep(cfg, source, target, sw_out);
    std::size_t failed = 0;
    for (const auto& r : runs) failed += r.failed;
    std::cerr << "sweep wrote " << runs.size() << " runs to " << sw_out << " (" << failed
              << " failed)\n";
    return failed == 0 ? 0 : 1;
  }

  if (*mix) {
    const Task task = task_from_string(mx_task);
    SweepConfig cfg;
    cfg.task = task;
    cfg.sizes = mx_sizes;
    cfg.n_seeds = mx_seeds;
    cfg.global_seed = resolve_seed(mx_seed_opt, mx_seed);
    cfg.jobs = jobs;
    cfg.base = base_config(task, mx_config);
    const TaskData a = load_samples(task, mx_a);
    const TaskData b = load_samples(task, mx_b);
    const auto runs = mix_sweep(cfg, a, b, mx_fraction, mx_out);
    std::size_t failed = 0;
    for (const auto& r : runs) failed += r.failed;
    std::cerr << "mix-sweep wrote " << runs.size() << " runs to " << mx_out << " (" << failed
              << " failed)\n";
    return failed == 0 ? 0 : 1;
  }

  if (*report) {
    ReportInputs in;
    in.runs = read_runs((fs::path(rp_in) / "runs.jsonl").string());
    emit_report(in, rp_out);
    std::cerr << "report for " << in.runs.size() << " runs written to " << rp_out << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
