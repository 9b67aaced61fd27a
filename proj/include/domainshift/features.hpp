// SPDX-License-Identifier: Apache-2.0
//
// Event -> model-input transforms for the three tasks: fixed 12-feature
// vectors, padded 50-track jet samples with kNN graphs, and padded track
// sequences for the regression task. All transforms are pure except the
// accept-reject reweighting, which draws from a caller-owned stream.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "domainshift/collider.hpp"
#include "domainshift/rng.hpp"

namespace domainshift {

inline constexpr double kTrackMinPt = 0.5;   // GeV, strict
inline constexpr double kJetMinPt = 30.0;    // GeV, strict
inline constexpr double kJetRadius = 0.4;
inline constexpr std::size_t kJetMaxTracks = 50;
inline constexpr std::size_t kJetFeatureCount = 6;   // pt, deta, dphi, charge, d0, z0
inline constexpr std::size_t kMetFeatureCount = 4;   // px, py, pz, d0
inline constexpr std::size_t kSBFeatureCount = 12;
inline constexpr std::size_t kDefaultKnn = 8;
inline constexpr std::size_t kDefaultMetTracks = 128;

// Slot order: jet1 {pt, eta, phi, mass}, jet2 {pt, eta, phi, mass},
// lepton {pt, eta, phi}, count of jets with pt > 40 GeV.
struct SBFeatureVector {
  std::array<double, kSBFeatureCount> values{};
};

struct SBSample {
  std::array<double, kSBFeatureCount> features{};
  int label = 0;  // 1 signal (top pair), 0 background (WW)
};

// Row-major [kJetMaxTracks, kJetFeatureCount]; real rows precede padding and
// padded rows are exactly zero.
struct JetSample {
  std::vector<double> features;
  std::vector<std::uint8_t> real_mask;
  int label = 0;  // quark 1, gluon 0
  double jet_pt = 0.0;
  std::uint64_t seed = 0;

  std::size_t n_real() const;
};

// Row-major [n_max, kMetFeatureCount], zero-padded.
struct METSample {
  std::vector<double> features;
  std::vector<std::uint8_t> real_mask;
  double target = 0.0;  // true MET magnitude, GeV

  std::size_t n_max() const { return real_mask.size(); }
  std::size_t n_real() const;
};

// One neighbor list per real node; padded nodes get no list. A single real
// node pairs with itself.
struct KnnGraph {
  std::vector<std::vector<std::size_t>> neighbors;
};

// Tracks with pt above the threshold, sorted by descending pt.
std::vector<Track> select_tracks(const Event& event);

// Empty when the event fails selection (fewer than two jets or no lepton).
// Jets must already carry the pt/eta cuts; the two leading ones are used
// and the lepton is the highest-pt one.
std::optional<SBFeatureVector> extract_sb_features(const Event& event,
                                                   const std::vector<Jet>& jets);

// Constituent rows sorted by descending pt, truncated to kJetMaxTracks,
// coordinates relative to the jet axis. Throws when the jet has no
// constituents or the flavor is unlabeled.
JetSample build_jet_sample(const Jet& jet, const std::vector<Track>& tracks,
                           JetFlavor flavor, std::uint64_t seed = 0);

// Nearest neighbors among real nodes by deta^2 + wrapped dphi^2; each real
// node receives min(k, n_real - 1) neighbors, ties broken by lower index.
KnnGraph knn_graph(const JetSample& sample, std::size_t k);

struct ReweightLog {
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::size_t empty_bin_drops = 0;  // majority entries in bins where the other class is empty
};

// Accept-reject thinning of the per-bin majority class so quark and gluon
// jet_pt spectra match in expectation. Retained samples stay unweighted and
// keep their input order. Both classes must be present and every jet_pt must
// fall inside the bin range.
std::vector<JetSample> reweight_qg_pt(const std::vector<JetSample>& samples,
                                      const std::vector<double>& bin_edges, Rng& rng,
                                      ReweightLog* log = nullptr);

// Uniform bin edges spanning [kJetMinPt, max jet_pt] for reweighting.
std::vector<double> default_pt_bins(const std::vector<JetSample>& samples,
                                    std::size_t n_bins = 20);

// Empty when the event has no selected tracks. Keeps the n_max highest-pt
// tracks; target is the true MET magnitude.
std::optional<METSample> build_met_sample(const Event& event, std::size_t n_max);

// Per-column affine transform x -> (x - mean) / stdev, fitted once on source
// training data and reused verbatim everywhere else. Near-constant columns
// keep stdev 1 so padding and dead features pass through unscaled.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stdev;

  std::size_t width() const { return mean.size(); }
};

// data is row-major [n_rows, width]; when row_mask is non-empty only flagged
// rows contribute (fit) or are transformed (apply), so padded rows stay zero.
Standardizer fit_standardizer(const std::vector<double>& data, std::size_t width,
                              const std::vector<std::uint8_t>& row_mask = {});
void apply_standardizer(const Standardizer& s, std::vector<double>& data,
                        const std::vector<std::uint8_t>& row_mask = {});

std::string standardizer_to_json(const Standardizer& s);
Standardizer standardizer_from_json(const std::string& text);

// Prepared datasets: one JSON line per sample plus a sidecar metadata file
// at <path>.meta.json recording counts, transform statistics and the
// preparation config hash. Padded rows are reconstituted on read.
struct SBDataset {
  std::vector<SBSample> samples;
};

struct QGDataset {
  std::vector<JetSample> samples;
  std::size_t k = kDefaultKnn;
};

struct METDataset {
  std::vector<METSample> samples;
  std::size_t n_max = kDefaultMetTracks;
};

struct PrepareStats {
  std::size_t events_read = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  ReweightLog reweight;
};

// Signal/background vectors from top-pair (label 1) and WW (label 0) events;
// other processes are an error.
SBDataset prepare_sb(const std::vector<Event>& events, PrepareStats* stats = nullptr);

// Labeled jets from any process, flavor-matched to truth partons, thinned so
// the quark and gluon pt spectra match.
QGDataset prepare_qg(const std::vector<Event>& events, std::size_t k, Rng& rng,
                     PrepareStats* stats = nullptr);

METDataset prepare_met(const std::vector<Event>& events, std::size_t n_max,
                       PrepareStats* stats = nullptr);

void write_sb_dataset(const std::string& path, const SBDataset& ds,
                      const PrepareStats* stats = nullptr);
void write_qg_dataset(const std::string& path, const QGDataset& ds,
                      const std::vector<double>& bin_edges = {},
                      const PrepareStats* stats = nullptr);
void write_met_dataset(const std::string& path, const METDataset& ds,
                       const PrepareStats* stats = nullptr);

SBDataset read_sb_dataset(const std::string& path);
QGDataset read_qg_dataset(const std::string& path);
METDataset read_met_dataset(const std::string& path);

}  // namespace domainshift
