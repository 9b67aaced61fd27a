// SPDX-License-Identifier: Apache-2.0

#include "domainshift/evalkit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "domainshift/version.hpp"

namespace fs = std::filesystem;

namespace domainshift {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void check_edges(const std::vector<double>& edges) {
  if (edges.size() < 2) fail("need at least two bin edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) fail("bin edges must be strictly increasing");
}

// Two-pass mean and sample standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0};
}

void atomic_write(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail("cannot open for writing: " + tmp);
    out << text;
    if (!out) fail("write failed: " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail("rename failed: " + path + " (" + ec.message() + ")");
}

}  // namespace

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) fail("scores and labels differ in length");
  std::size_t ns = 0, nb = 0;
  for (int l : labels) {
    if (l == 1)
      ++ns;
    else if (l == 0)
      ++nb;
    else
      fail("labels must be 0 or 1");
  }
  if (ns == 0 || nb == 0) fail("roc_auc needs both classes present");
  for (double s : scores)
    if (std::isnan(s)) fail("scores must not be NaN");

  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Doubled average ranks keep the pair statistic in exact integer units:
  // u2 = 2 * wins + ties over all (signal, background) pairs.
  std::int64_t u2 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::int64_t doubled_rank = static_cast<std::int64_t>(i + 1) + static_cast<std::int64_t>(j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) u2 += doubled_rank;
    i = j;
  }
  u2 -= static_cast<std::int64_t>(ns) * static_cast<std::int64_t>(ns + 1);
  const std::int64_t d = 2 * static_cast<std::int64_t>(ns) * static_cast<std::int64_t>(nb);

  RocCurve curve;
  // Dividing the smaller of the two complementary counts keeps
  // auc(scores) + auc(-scores) == 1 exact: the subtraction error of 1 - q
  // stays within a quarter ulp of 1, so the final sum rounds back to 1.
  if (u2 <= d - u2)
    curve.auc = static_cast<double>(u2) / static_cast<double>(d);
  else
    curve.auc = 1.0 - static_cast<double>(d - u2) / static_cast<double>(d);

  curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  curve.tpr.push_back(0.0);
  curve.fpr.push_back(0.0);
  std::size_t cum_s = 0, cum_b = 0;
  for (std::size_t hi = n; hi > 0;) {
    std::size_t lo = hi;
    while (lo > 0 && scores[order[lo - 1]] == scores[order[hi - 1]]) --lo;
    for (std::size_t k = lo; k < hi; ++k)
      (labels[order[k]] == 1 ? cum_s : cum_b) += 1;
    curve.thresholds.push_back(scores[order[lo]]);
    curve.tpr.push_back(static_cast<double>(cum_s) / static_cast<double>(ns));
    curve.fpr.push_back(static_cast<double>(cum_b) / static_cast<double>(nb));
    hi = lo;
  }
  return curve;
}

int bin_index(const std::vector<double>& edges, double x) {
  if (std::isnan(x) || x < edges.front() || x >= edges.back()) return -1;
  const auto it = std::upper_bound(edges.begin(), edges.end(), x);
  return static_cast<int>(it - edges.begin()) - 1;
}

std::vector<double> met_profile_edges() {
  return {0.0, 20.0, 40.0, 60.0, 80.0, 100.0, 140.0, 200.0};
}

ResolutionProfile resolution_profile(const std::vector<double>& preds,
                                     const std::vector<double>& trues,
                                     const std::vector<double>& edges) {
  if (preds.size() != trues.size()) fail("preds and trues differ in length");
  check_edges(edges);
  const std::size_t nb = edges.size() - 1;
  ResolutionProfile p;
  p.edges = edges;
  p.counts.assign(nb, 0);
  p.bias.assign(nb, 0.0);
  p.width.assign(nb, 0.0);
  p.filled.assign(nb, 0);
  p.residuals.assign(nb, {});
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int b = bin_index(edges, trues[i]);
    if (b < 0) continue;
    p.residuals[static_cast<std::size_t>(b)].push_back(preds[i] - trues[i]);
    ++p.n_used;
  }
  for (std::size_t b = 0; b < nb; ++b) {
    std::sort(p.residuals[b].begin(), p.residuals[b].end());
    p.counts[b] = p.residuals[b].size();
    if (p.counts[b] < 2) continue;
    const auto [mean, stdev] = mean_std(p.residuals[b]);
    p.bias[b] = mean;
    p.width[b] = stdev;
    p.filled[b] = 1;
  }
  return p;
}

Histogram make_histogram(const std::vector<double>& values, const std::vector<double>& edges) {
  if (values.empty()) fail("cannot histogram an empty dataset");
  check_edges(edges);
  Histogram h;
  h.edges = edges;
  h.raw.assign(edges.size() - 1, 0);
  h.n_total = values.size();
  for (double v : values) {
    const int b = bin_index(edges, v);
    if (b >= 0) ++h.raw[static_cast<std::size_t>(b)];
  }
  const double n = static_cast<double>(h.n_total);
  h.density.resize(h.raw.size());
  h.band.resize(h.raw.size());
  for (std::size_t b = 0; b < h.raw.size(); ++b) {
    h.density[b] = static_cast<double>(h.raw[b]) / n;
    h.band[b] = std::sqrt(static_cast<double>(h.raw[b])) / n;
  }
  return h;
}

HistogramComparison compare_histograms(
    const std::string& observable,
    const std::vector<std::pair<std::string, std::vector<double>>>& datasets,
    const std::vector<double>& edges) {
  if (datasets.empty()) fail("compare_histograms needs at least one dataset");
  HistogramComparison c;
  c.observable = observable;
  c.edges = edges;
  for (const auto& [tag, values] : datasets) {
    c.tags.push_back(tag);
    c.hists.push_back(make_histogram(values, edges));
  }
  return c;
}

nlohmann::ordered_json run_to_json(const RunResult& r) {
  nlohmann::ordered_json j;
  j["task"] = r.task;
  j["strategy"] = r.strategy;
  j["train_size"] = r.train_size;
  j["seed"] = r.seed;
  j["val_metric"] = r.val_metric;
  j["test_metric"] = r.test_metric;
  j["epochs_run"] = r.epochs_run;
  if (!r.extras.empty()) j["extras"] = r.extras;
  j["config_hash"] = r.config_hash;
  j["code_version"] = r.code_version;
  if (r.failed) {
    j["failed"] = true;
    j["error"] = r.error;
  }
  return j;
}

RunResult run_from_json(const nlohmann::json& j) {
  RunResult r;
  r.task = j.at("task").get<std::string>();
  r.strategy = j.at("strategy").get<std::string>();
  r.train_size = j.at("train_size").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.val_metric = j.at("val_metric").get<double>();
  r.test_metric = j.at("test_metric").get<double>();
  r.epochs_run = j.at("epochs_run").get<std::size_t>();
  if (j.contains("extras")) r.extras = j.at("extras").get<std::map<std::string, double>>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.code_version = j.at("code_version").get<std::string>();
  r.failed = j.value("failed", false);
  r.error = j.value("error", std::string());
  return r;
}

void write_runs(const std::string& path, const std::vector<RunResult>& runs) {
  std::string text;
  for (const auto& r : runs) text += run_to_json(r).dump() + "\n";
  atomic_write(path, text);
}

std::vector<RunResult> read_runs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open run results: " + path);
  std::vector<RunResult> runs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    runs.push_back(run_from_json(nlohmann::json::parse(line)));
  }
  return runs;
}

std::vector<CurvePoint> aggregate_curve(const std::vector<RunResult>& runs) {
  std::map<std::tuple<std::string, std::string, std::size_t>, std::vector<double>> cells;
  for (const auto& r : runs) {
    if (r.failed) continue;
    cells[{r.task, r.strategy, r.train_size}].push_back(r.test_metric);
  }
  std::vector<CurvePoint> points;
  for (const auto& [key, metrics] : cells) {
    CurvePoint p;
    p.task = std::get<0>(key);
    p.strategy = std::get<1>(key);
    p.train_size = std::get<2>(key);
    const auto [mean, stdev] = mean_std(metrics);
    p.mean = mean;
    p.n = metrics.size();
    p.has_std = p.n >= 2;
    p.stdev = p.has_std ? stdev : 0.0;
    points.push_back(std::move(p));
  }
  return points;
}

bool metric_higher_is_better(const std::string& task) {
  if (task == "sb" || task == "qg") return true;
  if (task == "met") return false;
  fail("unknown task: " + task);
}

double scratch_equivalent_size(const std::vector<CurvePoint>& scratch,
                               double target_metric, bool higher_is_better) {
  if (scratch.empty()) fail("scratch curve is empty");
  const double sgn = higher_is_better ? 1.0 : -1.0;
  const double target = sgn * target_metric;
  std::vector<double> sizes, means;
  for (const auto& p : scratch) {
    sizes.push_back(static_cast<double>(p.train_size));
    means.push_back(sgn * p.mean);
  }
  double best = means[0];
  for (double m : means) best = std::max(best, m);
  if (target > best) return sizes.back();
  for (std::size_t i = 0; i + 1 < means.size(); ++i) {
    const double lo = means[i], hi = means[i + 1];
    if ((lo <= target && target <= hi) || (hi <= target && target <= lo)) {
      if (hi == lo) return sizes[i];
      return sizes[i] + (target - lo) / (hi - lo) * (sizes[i + 1] - sizes[i]);
    }
  }
  // Below every segment: the smallest scratch run already beats it.
  return sizes.front();
}

std::map<std::string, std::map<std::string, std::vector<SavingsEntry>>>
data_savings(const std::vector<CurvePoint>& points) {
  std::map<std::string, std::map<std::string, std::vector<SavingsEntry>>> out;
  std::map<std::string, std::vector<CurvePoint>> by_task;
  for (const auto& p : points) by_task[p.task].push_back(p);
  for (auto& [task, pts] : by_task) {
    std::vector<CurvePoint> scratch;
    for (const auto& p : pts)
      if (p.strategy == "scratch") scratch.push_back(p);
    if (scratch.empty()) continue;
    const bool higher = metric_higher_is_better(task);
    for (const auto& p : pts) {
      if (p.strategy == "scratch") continue;
      SavingsEntry e;
      e.train_size = p.train_size;
      e.factor = scratch_equivalent_size(scratch, p.mean, higher) /
                 static_cast<double>(p.train_size);
      out[task][p.strategy].push_back(e);
    }
  }
  return out;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open csv: " + path);
  CsvTable rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

void write_csv(const std::string& path, const CsvTable& rows) {
  std::string text;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row[i].find_first_of(",\n\r") != std::string::npos)
        fail("csv fields must not contain commas or newlines");
      if (i) text += ',';
      text += row[i];
    }
    text += '\n';
  }
  atomic_write(path, text);
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string format_size(std::size_t v) { return std::to_string(v); }

CsvTable curves_table(const std::vector<CurvePoint>& points) {
  CsvTable rows{{"task", "strategy", "train_size", "mean", "std", "n"}};
  for (const auto& p : points)
    rows.push_back({p.task, p.strategy, format_size(p.train_size), format_double(p.mean),
                    p.has_std ? format_double(p.stdev) : std::string(), format_size(p.n)});
  return rows;
}

CsvTable roc_table(const RocCurve& c) {
  CsvTable rows{{"threshold", "tpr", "fpr"}};
  for (std::size_t i = 0; i < c.thresholds.size(); ++i)
    rows.push_back({format_double(c.thresholds[i]), format_double(c.tpr[i]),
                    format_double(c.fpr[i])});
  return rows;
}

CsvTable resolution_table(const ResolutionProfile& p) {
  CsvTable rows{{"lo", "hi", "count", "bias", "width"}};
  for (std::size_t b = 0; b + 1 < p.edges.size(); ++b)
    rows.push_back({format_double(p.edges[b]), format_double(p.edges[b + 1]),
                    format_size(p.counts[b]),
                    p.filled[b] ? format_double(p.bias[b]) : std::string(),
                    p.filled[b] ? format_double(p.width[b]) : std::string()});
  return rows;
}

CsvTable histogram_table(const HistogramComparison& c) {
  CsvTable rows{{"dataset", "lo", "hi", "density", "band"}};
  for (std::size_t d = 0; d < c.hists.size(); ++d) {
    const Histogram& h = c.hists[d];
    for (std::size_t b = 0; b + 1 < h.edges.size(); ++b)
      rows.push_back({c.tags[d], format_double(h.edges[b]), format_double(h.edges[b + 1]),
                      format_double(h.density[b]), format_double(h.band[b])});
  }
  return rows;
}

}  // namespace

void emit_report(const ReportInputs& in, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail("cannot create report directory: " + out_dir);
  const auto at = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

  write_runs(at("runs.jsonl"), in.runs);
  const auto points = aggregate_curve(in.runs);
  write_csv(at("curves.csv"), curves_table(points));
  for (const auto& [tag, curve] : in.rocs) write_csv(at("roc_" + tag + ".csv"), roc_table(curve));
  for (const auto& [tag, prof] : in.profiles)
    write_csv(at("resolution_" + tag + ".csv"), resolution_table(prof));
  for (const auto& [tag, comp] : in.histograms)
    write_csv(at("histograms_" + tag + ".csv"), histogram_table(comp));

  nlohmann::ordered_json summary;
  summary["format"] = "domainshift-report v1";
  summary["code_version"] = kCodeVersion;
  summary["n_runs"] = in.runs.size();
  std::size_t n_failed = 0;
  for (const auto& r : in.runs) n_failed += r.failed ? 1 : 0;
  summary["n_failed"] = n_failed;

  nlohmann::ordered_json savings = nlohmann::ordered_json::object();
  for (const auto& [task, per_strategy] : data_savings(points)) {
    nlohmann::ordered_json st = nlohmann::ordered_json::object();
    for (const auto& [strategy, entries] : per_strategy) {
      nlohmann::ordered_json list = nlohmann::ordered_json::array();
      for (const auto& e : entries)
        list.push_back({{"train_size", e.train_size}, {"factor", e.factor}});
      st[strategy] = std::move(list);
    }
    savings[task] = std::move(st);
  }
  summary["data_savings"] = std::move(savings);

  if (!in.rocs.empty()) {
    nlohmann::ordered_json rocs = nlohmann::ordered_json::object();
    for (const auto& [tag, curve] : in.rocs) rocs[tag] = curve.auc;
    summary["roc_auc"] = std::move(rocs);
  }
  if (!in.profiles.empty()) {
    nlohmann::ordered_json profs = nlohmann::ordered_json::object();
    for (const auto& [tag, prof] : in.profiles) {
      const int b = bin_index(prof.edges, 40.0);
      if (b < 0 || prof.edges[static_cast<std::size_t>(b) + 1] != 60.0 ||
          !prof.filled[static_cast<std::size_t>(b)])
        continue;
      const auto bi = static_cast<std::size_t>(b);
      profs[tag] = {{"lo", 40.0},
                    {"hi", 60.0},
                    {"count", prof.counts[bi]},
                    {"bias", prof.bias[bi]},
                    {"width", prof.width[bi]}};
    }
    summary["highlight_bin"] = std::move(profs);
  }

  atomic_write(at("summary.json"), summary.dump(2) + "\n");
}

}  // namespace domainshift
