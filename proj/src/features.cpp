// SPDX-License-Identifier: Apache-2.0

#include "domainshift/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "domainshift/event_io.hpp"
#include "domainshift/hash.hpp"

namespace domainshift {

namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::size_t count_real(const std::vector<std::uint8_t>& mask) {
  std::size_t n = 0;
  for (std::uint8_t m : mask) n += m ? 1 : 0;
  return n;
}

std::size_t bin_of(double x, const std::vector<double>& edges) {
  if (!(x >= edges.front()) || !(x <= edges.back()))
    fail("value outside reweighting bins");
  if (x == edges.back()) return edges.size() - 2;
  const auto it = std::upper_bound(edges.begin(), edges.end(), x);
  return static_cast<std::size_t>(it - edges.begin()) - 1;
}

std::string sidecar_path(const std::string& path) { return path + ".meta.json"; }

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot open for writing: " + path);
  out << text;
  if (!out) fail("write failed: " + path);
}

ordered_json read_sidecar(const std::string& dataset_path) {
  std::ifstream in(sidecar_path(dataset_path), std::ios::binary);
  if (!in) fail("missing dataset metadata: " + sidecar_path(dataset_path));
  ordered_json meta;
  in >> meta;
  return meta;
}

ordered_json stats_json(const Standardizer& s) {
  ordered_json j;
  j["mean"] = s.mean;
  j["stdev"] = s.stdev;
  return j;
}

}  // namespace

std::size_t JetSample::n_real() const { return count_real(real_mask); }
std::size_t METSample::n_real() const { return count_real(real_mask); }

std::vector<Track> select_tracks(const Event& event) {
  std::vector<Track> out;
  for (const Track& t : event.tracks)
    if (t.pt() > kTrackMinPt) out.push_back(t);
  std::stable_sort(out.begin(), out.end(),
                   [](const Track& a, const Track& b) { return a.pt() > b.pt(); });
  return out;
}

std::optional<SBFeatureVector> extract_sb_features(const Event& event,
                                                   const std::vector<Jet>& jets) {
  if (jets.size() < 2 || event.leptons.empty()) return std::nullopt;

  std::size_t lead = 0, sub = 1;
  if (jets[sub].pt > jets[lead].pt) std::swap(lead, sub);
  for (std::size_t i = 2; i < jets.size(); ++i) {
    if (jets[i].pt > jets[lead].pt) {
      sub = lead;
      lead = i;
    } else if (jets[i].pt > jets[sub].pt) {
      sub = i;
    }
  }
  std::size_t lep = 0;
  for (std::size_t i = 1; i < event.leptons.size(); ++i)
    if (event.leptons[i].pt > event.leptons[lep].pt) lep = i;

  double njets40 = 0;
  for (const Jet& j : jets)
    if (j.pt > 40.0) njets40 += 1.0;

  SBFeatureVector v;
  v.values = {jets[lead].pt,          jets[lead].eta, jets[lead].phi,
              jets[lead].mass,        jets[sub].pt,   jets[sub].eta,
              jets[sub].phi,          jets[sub].mass, event.leptons[lep].pt,
              event.leptons[lep].eta, event.leptons[lep].phi, njets40};
  return v;
}

JetSample build_jet_sample(const Jet& jet, const std::vector<Track>& tracks,
                           JetFlavor flavor, std::uint64_t seed) {
  if (jet.constituent_indices.empty()) fail("jet has no constituents");
  if (flavor == JetFlavor::kUnlabeled) fail("jet sample needs a quark or gluon label");

  std::vector<const Track*> cons;
  cons.reserve(jet.constituent_indices.size());
  for (std::size_t idx : jet.constituent_indices) {
    if (idx >= tracks.size()) fail("constituent index outside the track list");
    cons.push_back(&tracks[idx]);
  }
  std::stable_sort(cons.begin(), cons.end(),
                   [](const Track* a, const Track* b) { return a->pt() > b->pt(); });
  if (cons.size() > kJetMaxTracks) cons.resize(kJetMaxTracks);

  JetSample s;
  s.features.assign(kJetMaxTracks * kJetFeatureCount, 0.0);
  s.real_mask.assign(kJetMaxTracks, 0);
  s.label = flavor == JetFlavor::kQuark ? 1 : 0;
  s.jet_pt = jet.pt;
  s.seed = seed;
  for (std::size_t i = 0; i < cons.size(); ++i) {
    double* row = s.features.data() + i * kJetFeatureCount;
    row[0] = cons[i]->pt();
    row[1] = cons[i]->eta() - jet.eta;
    row[2] = delta_phi(cons[i]->phi(), jet.phi);
    row[3] = static_cast<double>(cons[i]->charge);
    row[4] = cons[i]->d0;
    row[5] = cons[i]->z0;
    s.real_mask[i] = 1;
  }
  return s;
}

KnnGraph knn_graph(const JetSample& sample, std::size_t k) {
  if (k == 0) fail("neighbor count must be at least 1");
  const std::size_t n = sample.n_real();
  if (n == 0) fail("jet sample has no real tracks");

  KnnGraph g;
  if (n == 1) {
    g.neighbors = {{0}};
    return g;
  }
  const std::size_t k_eff = std::min(k, n - 1);
  g.neighbors.resize(n);
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ri = sample.features.data() + i * kJetFeatureCount;
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* rj = sample.features.data() + j * kJetFeatureCount;
      const double de = ri[1] - rj[1];
      const double dp = delta_phi(ri[2], rj[2]);
      cand.emplace_back(de * de + dp * dp, j);
    }
    std::sort(cand.begin(), cand.end());
    g.neighbors[i].reserve(k_eff);
    for (std::size_t q = 0; q < k_eff; ++q) g.neighbors[i].push_back(cand[q].second);
  }
  return g;
}

std::vector<double> default_pt_bins(const std::vector<JetSample>& samples,
                                    std::size_t n_bins) {
  if (samples.empty()) fail("no samples to bin");
  double hi = kJetMinPt;
  for (const JetSample& s : samples) hi = std::max(hi, s.jet_pt);
  if (hi <= kJetMinPt) hi = kJetMinPt + 1.0;
  std::vector<double> edges(n_bins + 1);
  for (std::size_t i = 0; i <= n_bins; ++i)
    edges[i] = i == n_bins
                   ? hi
                   : kJetMinPt + (hi - kJetMinPt) * static_cast<double>(i) /
                                     static_cast<double>(n_bins);
  return edges;
}

std::vector<JetSample> reweight_qg_pt(const std::vector<JetSample>& samples,
                                      const std::vector<double>& bin_edges, Rng& rng,
                                      ReweightLog* log) {
  if (bin_edges.size() < 2) fail("need at least two bin edges");
  for (std::size_t i = 1; i < bin_edges.size(); ++i)
    if (!(bin_edges[i] > bin_edges[i - 1])) fail("bin edges must increase strictly");

  const std::size_t n_bins = bin_edges.size() - 1;
  std::vector<std::size_t> nq(n_bins, 0), ng(n_bins, 0);
  bool any_q = false, any_g = false;
  for (const JetSample& s : samples) {
    const std::size_t b = bin_of(s.jet_pt, bin_edges);
    if (s.label == 1) {
      ++nq[b];
      any_q = true;
    } else {
      ++ng[b];
      any_g = true;
    }
  }
  if (!any_q || !any_g) fail("reweighting needs both quark and gluon jets");

  // acceptance: minority class keeps everything, majority is thinned to the
  // minority's expected count; an empty opposite class empties the bin
  std::vector<double> acc_q(n_bins, 1.0), acc_g(n_bins, 1.0);
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (nq[b] > ng[b])
      acc_q[b] = static_cast<double>(ng[b]) / static_cast<double>(nq[b]);
    else if (ng[b] > nq[b])
      acc_g[b] = static_cast<double>(nq[b]) / static_cast<double>(ng[b]);
  }

  std::vector<JetSample> out;
  out.reserve(samples.size());
  ReweightLog local;
  for (const JetSample& s : samples) {
    const std::size_t b = bin_of(s.jet_pt, bin_edges);
    const double acc = s.label == 1 ? acc_q[b] : acc_g[b];
    if (rng.bernoulli(acc)) {
      out.push_back(s);
      ++local.kept;
    } else {
      ++local.dropped;
      if (acc == 0.0) ++local.empty_bin_drops;
    }
  }
  if (log) *log = local;
  return out;
}

std::optional<METSample> build_met_sample(const Event& event, std::size_t n_max) {
  if (n_max == 0) fail("track capacity must be positive");
  const std::vector<Track> sel = select_tracks(event);
  if (sel.empty()) return std::nullopt;

  METSample s;
  s.features.assign(n_max * kMetFeatureCount, 0.0);
  s.real_mask.assign(n_max, 0);
  s.target = std::hypot(event.met_x, event.met_y);
  const std::size_t n = std::min(sel.size(), n_max);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = s.features.data() + i * kMetFeatureCount;
    row[0] = sel[i].px;
    row[1] = sel[i].py;
    row[2] = sel[i].pz;
    row[3] = sel[i].d0;
    s.real_mask[i] = 1;
  }
  return s;
}

Standardizer fit_standardizer(const std::vector<double>& data, std::size_t width,
                              const std::vector<std::uint8_t>& row_mask) {
  if (width == 0 || data.size() % width != 0) fail("data is not row-major of the given width");
  const std::size_t rows = data.size() / width;
  if (!row_mask.empty() && row_mask.size() != rows) fail("row mask length mismatch");

  Standardizer s;
  s.mean.assign(width, 0.0);
  s.stdev.assign(width, 1.0);
  std::size_t n = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!row_mask.empty() && !row_mask[r]) continue;
    ++n;
    for (std::size_t c = 0; c < width; ++c) s.mean[c] += data[r * width + c];
  }
  if (n == 0) fail("no rows to fit");
  for (double& m : s.mean) m /= static_cast<double>(n);
  if (n < 2) return s;

  std::vector<double> ss(width, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!row_mask.empty() && !row_mask[r]) continue;
    for (std::size_t c = 0; c < width; ++c) {
      const double d = data[r * width + c] - s.mean[c];
      ss[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < width; ++c) {
    const double sd = std::sqrt(ss[c] / static_cast<double>(n - 1));
    s.stdev[c] = sd < 1e-8 ? 1.0 : sd;
  }
  return s;
}

void apply_standardizer(const Standardizer& s, std::vector<double>& data,
                        const std::vector<std::uint8_t>& row_mask) {
  const std::size_t width = s.width();
  if (width == 0 || data.size() % width != 0) fail("data is not row-major of the given width");
  const std::size_t rows = data.size() / width;
  if (!row_mask.empty() && row_mask.size() != rows) fail("row mask length mismatch");
  for (std::size_t r = 0; r < rows; ++r) {
    if (!row_mask.empty() && !row_mask[r]) continue;
    for (std::size_t c = 0; c < width; ++c) {
      double& x = data[r * width + c];
      x = (x - s.mean[c]) / s.stdev[c];
    }
  }
}

std::string standardizer_to_json(const Standardizer& s) {
  return stats_json(s).dump();
}

Standardizer standardizer_from_json(const std::string& text) {
  const auto j = ordered_json::parse(text);
  Standardizer s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stdev = j.at("stdev").get<std::vector<double>>();
  if (s.mean.size() != s.stdev.size()) fail("inconsistent standardizer record");
  return s;
}

SBDataset prepare_sb(const std::vector<Event>& events, PrepareStats* stats) {
  SBDataset ds;
  PrepareStats local;
  for (const Event& ev : events) {
    ++local.events_read;
    int label = 0;
    if (ev.process == Process::kTTbar)
      label = 1;
    else if (ev.process == Process::kWW)
      label = 0;
    else
      fail("signal/background preparation expects top-pair or WW events");

    const auto jets = antikt_cluster(select_tracks(ev), kJetRadius, kJetMinPt);
    const auto v = extract_sb_features(ev, jets);
    if (!v) {
      ++local.rejected;
      continue;
    }
    ++local.accepted;
    ds.samples.push_back({v->values, label});
  }
  if (stats) *stats = local;
  return ds;
}

QGDataset prepare_qg(const std::vector<Event>& events, std::size_t k, Rng& rng,
                     PrepareStats* stats) {
  QGDataset ds;
  ds.k = k;
  PrepareStats local;
  std::vector<JetSample> raw;
  for (const Event& ev : events) {
    ++local.events_read;
    const auto tracks = select_tracks(ev);
    const auto jets = antikt_cluster(tracks, kJetRadius, kJetMinPt);
    bool used = false;
    for (const Jet& jet : jets) {
      const JetFlavor flavor = label_jet_flavor(jet, ev.partons);
      if (flavor == JetFlavor::kUnlabeled) continue;
      raw.push_back(build_jet_sample(jet, tracks, flavor, ev.seed));
      used = true;
    }
    used ? ++local.accepted : ++local.rejected;
  }
  if (raw.empty()) fail("no labeled jets survive selection");
  ds.samples = reweight_qg_pt(raw, default_pt_bins(raw), rng, &local.reweight);
  if (stats) *stats = local;
  return ds;
}

METDataset prepare_met(const std::vector<Event>& events, std::size_t n_max,
                       PrepareStats* stats) {
  METDataset ds;
  ds.n_max = n_max;
  PrepareStats local;
  for (const Event& ev : events) {
    ++local.events_read;
    auto s = build_met_sample(ev, n_max);
    if (!s) {
      ++local.rejected;
      continue;
    }
    ++local.accepted;
    ds.samples.push_back(std::move(*s));
  }
  if (stats) *stats = local;
  return ds;
}

namespace {

ordered_json meta_common(const std::string& task, std::size_t count,
                         const std::string& config) {
  ordered_json meta;
  meta["format"] = "domainshift-samples v1";
  meta["task"] = task;
  meta["count"] = count;
  meta["config_hash"] = hex64(fnv1a64(config));
  return meta;
}

void check_task(const ordered_json& meta, const std::string& task,
                const std::string& path) {
  if (meta.value("task", "") != task)
    fail("dataset at " + path + " is not a " + task + " sample file");
}

}  // namespace

void write_sb_dataset(const std::string& path, const SBDataset& ds,
                      const PrepareStats* stats) {
  LineWriter out(path);
  std::vector<double> flat;
  flat.reserve(ds.samples.size() * kSBFeatureCount);
  for (const SBSample& s : ds.samples) {
    ordered_json j;
    j["features"] = s.features;
    j["label"] = s.label;
    out.write_line(j.dump());
    flat.insert(flat.end(), s.features.begin(), s.features.end());
  }
  out.close();

  ordered_json meta = meta_common("sb", ds.samples.size(),
                                  "task=sb;features=12;track_pt=0.5;jet_pt=30;jet_r=0.4");
  if (stats) meta["rejected"] = stats->rejected;
  if (!ds.samples.empty())
    meta["standardizer"] = stats_json(fit_standardizer(flat, kSBFeatureCount));
  write_text_file(sidecar_path(path), meta.dump(2) + "\n");
}

void write_qg_dataset(const std::string& path, const QGDataset& ds,
                      const std::vector<double>& bin_edges,
                      const PrepareStats* stats) {
  LineWriter out(path);
  std::vector<double> flat;
  std::vector<std::uint8_t> flat_mask;
  std::size_t n_quark = 0;
  for (const JetSample& s : ds.samples) {
    const std::size_t n = s.n_real();
    ordered_json j;
    j["label"] = s.label;
    j["jet_pt"] = s.jet_pt;
    j["seed"] = s.seed;
    j["n_real"] = n;
    j["features"] = std::vector<double>(s.features.begin(),
                                        s.features.begin() +
                                            static_cast<std::ptrdiff_t>(n * kJetFeatureCount));
    out.write_line(j.dump());
    flat.insert(flat.end(), s.features.begin(), s.features.end());
    flat_mask.insert(flat_mask.end(), s.real_mask.begin(), s.real_mask.end());
    n_quark += s.label == 1 ? 1 : 0;
  }
  out.close();

  ordered_json meta =
      meta_common("qg", ds.samples.size(),
                  "task=qg;k=" + std::to_string(ds.k) +
                      ";max_tracks=50;track_pt=0.5;jet_pt=30;jet_r=0.4");
  meta["k"] = ds.k;
  meta["quark"] = n_quark;
  meta["gluon"] = ds.samples.size() - n_quark;
  if (!bin_edges.empty()) meta["bin_edges"] = bin_edges;
  if (stats) {
    meta["dropped"] = stats->reweight.dropped;
    meta["empty_bin_drops"] = stats->reweight.empty_bin_drops;
  }
  if (!ds.samples.empty())
    meta["standardizer"] = stats_json(fit_standardizer(flat, kJetFeatureCount, flat_mask));
  write_text_file(sidecar_path(path), meta.dump(2) + "\n");
}

void write_met_dataset(const std::string& path, const METDataset& ds,
                       const PrepareStats* stats) {
  LineWriter out(path);
  std::vector<double> flat;
  std::vector<std::uint8_t> flat_mask;
  for (const METSample& s : ds.samples) {
    const std::size_t n = s.n_real();
    ordered_json j;
    j["target"] = s.target;
    j["n_real"] = n;
    j["features"] = std::vector<double>(s.features.begin(),
                                        s.features.begin() +
                                            static_cast<std::ptrdiff_t>(n * kMetFeatureCount));
    out.write_line(j.dump());
    flat.insert(flat.end(), s.features.begin(), s.features.end());
    flat_mask.insert(flat_mask.end(), s.real_mask.begin(), s.real_mask.end());
  }
  out.close();

  ordered_json meta = meta_common("met", ds.samples.size(),
                                  "task=met;n_max=" + std::to_string(ds.n_max) +
                                      ";track_pt=0.5");
  meta["n_max"] = ds.n_max;
  if (stats) meta["rejected"] = stats->rejected;
  if (!ds.samples.empty())
    meta["standardizer"] = stats_json(fit_standardizer(flat, kMetFeatureCount, flat_mask));
  write_text_file(sidecar_path(path), meta.dump(2) + "\n");
}

SBDataset read_sb_dataset(const std::string& path) {
  check_task(read_sidecar(path), "sb", path);
  SBDataset ds;
  LineReader in(path);
  std::string line;
  while (in.next_line(line)) {
    if (line.empty()) continue;
    const auto j = ordered_json::parse(line);
    SBSample s;
    const auto f = j.at("features").get<std::vector<double>>();
    if (f.size() != kSBFeatureCount) fail("bad feature width in " + path);
    std::copy(f.begin(), f.end(), s.features.begin());
    s.label = j.at("label").get<int>();
    ds.samples.push_back(s);
  }
  return ds;
}

QGDataset read_qg_dataset(const std::string& path) {
  const ordered_json meta = read_sidecar(path);
  check_task(meta, "qg", path);
  QGDataset ds;
  ds.k = meta.value("k", kDefaultKnn);
  LineReader in(path);
  std::string line;
  while (in.next_line(line)) {
    if (line.empty()) continue;
    const auto j = ordered_json::parse(line);
    JetSample s;
    const std::size_t n = j.at("n_real").get<std::size_t>();
    const auto f = j.at("features").get<std::vector<double>>();
    if (n == 0 || n > kJetMaxTracks || f.size() != n * kJetFeatureCount)
      fail("bad jet record in " + path);
    s.features.assign(kJetMaxTracks * kJetFeatureCount, 0.0);
    std::copy(f.begin(), f.end(), s.features.begin());
    s.real_mask.assign(kJetMaxTracks, 0);
    std::fill(s.real_mask.begin(), s.real_mask.begin() + static_cast<std::ptrdiff_t>(n), 1);
    s.label = j.at("label").get<int>();
    s.jet_pt = j.at("jet_pt").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

METDataset read_met_dataset(const std::string& path) {
  const ordered_json meta = read_sidecar(path);
  check_task(meta, "met", path);
  METDataset ds;
  ds.n_max = meta.at("n_max").get<std::size_t>();
  LineReader in(path);
  std::string line;
  while (in.next_line(line)) {
    if (line.empty()) continue;
    const auto j = ordered_json::parse(line);
    METSample s;
    const std::size_t n = j.at("n_real").get<std::size_t>();
    const auto f = j.at("features").get<std::vector<double>>();
    if (n == 0 || n > ds.n_max || f.size() != n * kMetFeatureCount)
      fail("bad track record in " + path);
    s.features.assign(ds.n_max * kMetFeatureCount, 0.0);
    std::copy(f.begin(), f.end(), s.features.begin());
    s.real_mask.assign(ds.n_max, 0);
    std::fill(s.real_mask.begin(), s.real_mask.begin() + static_cast<std::ptrdiff_t>(n), 1);
    s.target = j.at("target").get<double>();
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace domainshift
