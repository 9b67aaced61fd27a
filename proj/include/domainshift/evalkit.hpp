// SPDX-License-Identifier: Apache-2.0
//
// Metrics (ROC/AUC, resolution profiles), histogram comparisons, run-result
// records and report emission. Pure functions over plain data; no model or
// generator dependencies, so every output is reproducible byte for byte.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace domainshift {

// ROC curve from a descending-threshold sweep. The curve starts at (0, 0)
// with an infinite threshold and ends at (1, 1) at the lowest score; tpr and
// fpr are nondecreasing along it. auc is the Mann-Whitney pair statistic:
// the fraction of (signal, background) pairs where the signal scores higher,
// ties counting one half. auc(scores) + auc(-scores) sums to exactly 1.
struct RocCurve {
  std::vector<double> thresholds;
  std::vector<double> tpr;
  std::vector<double> fpr;
  double auc = 0.0;
};

// Labels are 0 or 1 and both classes must be present; scores must not be NaN.
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Residual (pred - true) statistics binned by the true value. Bins are
// [lo, hi); entries outside the edge range are ignored. Bins with fewer than
// two entries stay unfilled with bias and width zero. Per-bin residuals are
// stored sorted, so the profile is exactly invariant under permutation of
// the input pairs.
struct ResolutionProfile {
  std::vector<double> edges;
  std::vector<std::size_t> counts;
  std::vector<double> bias;
  std::vector<double> width;
  std::vector<std::uint8_t> filled;
  std::vector<std::vector<double>> residuals;
  std::size_t n_used = 0;
};

ResolutionProfile resolution_profile(const std::vector<double>& preds,
                                     const std::vector<double>& trues,
                                     const std::vector<double>& edges);

// Default true-MET binning in GeV; [40, 60) is the highlighted bin whose
// bias/width pair summarizes a regressor.
std::vector<double> met_profile_edges();

// Index of the [lo, hi) bin containing x, -1 outside the edge range.
int bin_index(const std::vector<double>& edges, double x);

// Unit-normalized histogram with per-bin Poisson bands. density sums to 1
// when every entry lands inside the edges; band = sqrt(raw) / n_total.
struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> raw;
  std::vector<double> density;
  std::vector<double> band;
  std::size_t n_total = 0;
};

Histogram make_histogram(const std::vector<double>& values, const std::vector<double>& edges);

struct HistogramComparison {
  std::string observable;
  std::vector<double> edges;
  std::vector<std::string> tags;
  std::vector<Histogram> hists;
};

// Same observable histogrammed over several datasets on shared edges.
// Dataset values must be non-empty.
HistogramComparison compare_histograms(
    const std::string& observable,
    const std::vector<std::pair<std::string, std::vector<double>>>& datasets,
    const std::vector<double>& edges);

// One training run. wall_seconds is measured but excluded from the JSONL
// record so identical reruns serialize byte-identically; sweeps persist
// timings separately.
struct RunResult {
  std::string task;
  std::string strategy;
  std::size_t train_size = 0;
  std::uint64_t seed = 0;
  double val_metric = 0.0;
  double test_metric = 0.0;
  std::size_t epochs_run = 0;
  double wall_seconds = 0.0;
  std::map<std::string, double> extras;
  std::string config_hash;
  std::string code_version;
  bool failed = false;
  std::string error;
};

nlohmann::ordered_json run_to_json(const RunResult& r);
RunResult run_from_json(const nlohmann::json& j);

// JSON Lines, one record per run, written atomically in input order.
void write_runs(const std::string& path, const std::vector<RunResult>& runs);
std::vector<RunResult> read_runs(const std::string& path);

// Seed aggregation of one (task, strategy, train_size) cell; stdev is the
// sample standard deviation and only meaningful when n >= 2.
struct CurvePoint {
  std::string task;
  std::string strategy;
  std::size_t train_size = 0;
  double mean = 0.0;
  double stdev = 0.0;
  bool has_std = false;
  std::size_t n = 0;
};

// Failed runs are skipped; points come out sorted by (task, strategy, size).
std::vector<CurvePoint> aggregate_curve(const std::vector<RunResult>& runs);

// sb and qg report AUC (maximize); met reports a loss (minimize).
bool metric_higher_is_better(const std::string& task);

// Training size at which the linearly interpolated scratch curve reaches
// target_metric, clamped to the scratch size range; first crossing wins on a
// non-monotone curve. scratch must be non-empty and sorted by size.
double scratch_equivalent_size(const std::vector<CurvePoint>& scratch,
                               double target_metric, bool higher_is_better);

// data-savings factor = scratch-equivalent size / own training size, per
// non-scratch strategy point. Tasks without a scratch curve are omitted.
struct SavingsEntry {
  std::size_t train_size = 0;
  double factor = 0.0;
};
std::map<std::string, std::map<std::string, std::vector<SavingsEntry>>>
data_savings(const std::vector<CurvePoint>& points);

// Plain comma-separated tables, no quoting; fields never contain commas or
// newlines, so parse and re-emission round-trip byte-identically.
using CsvTable = std::vector<std::vector<std::string>>;
CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& rows);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

struct ReportInputs {
  std::vector<RunResult> runs;
  std::vector<std::pair<std::string, RocCurve>> rocs;
  std::vector<std::pair<std::string, ResolutionProfile>> profiles;
  std::vector<std::pair<std::string, HistogramComparison>> histograms;
};

// Writes runs.jsonl, curves.csv, summary.json and one CSV per tagged curve,
// profile and histogram set into out_dir. All writes are atomic (temp file
// plus rename) and deterministic given the inputs.
void emit_report(const ReportInputs& in, const std::string& out_dir);

}  // namespace domainshift
