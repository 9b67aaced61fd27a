// SPDX-License-Identifier: Apache-2.0
//
// Parametric generator of labeled collider-like events in three domains,
// with anti-kT jet clustering and truth flavor labeling. Every event is a
// pure function of (process, domain config, seed); sub-streams for the
// hard process, decays, fragmentation, detector and pileup are derived by
// fixed path words so datasets reproduce under any scheduling.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "domainshift/rng.hpp"

namespace domainshift {

enum class Process { kTTbar, kWW, kWJets, kZJets };
enum class DomainName { kA, kB, kC };
enum class PartonFlavor { kQuark, kGluon };
enum class LeptonFlavor { kElectron, kMuon };
enum class TrackOrigin { kHard, kPileup };
enum class JetFlavor { kQuark, kGluon, kUnlabeled };

std::string to_string(Process p);
std::string to_string(DomainName d);
Process process_from_string(const std::string& s);
DomainName domain_from_string(const std::string& s);

// (a - b) wrapped into (-pi, pi]
double delta_phi(double a, double b);
double wrap_phi(double phi);

struct Track {
  double px = 0, py = 0, pz = 0;
  int charge = 0;
  double d0 = 0, z0 = 0;  // mm
  TrackOrigin origin = TrackOrigin::kHard;

  double pt() const;
  double eta() const;
  double phi() const;
};

struct TruthParton {
  double pt = 0, eta = 0, phi = 0;
  PartonFlavor flavor = PartonFlavor::kQuark;
};

struct Lepton {
  double pt = 0, eta = 0, phi = 0;
  LeptonFlavor flavor = LeptonFlavor::kElectron;
};

struct Event {
  Process process = Process::kTTbar;
  DomainName domain = DomainName::kA;
  std::uint64_t seed = 0;
  double met_x = 0, met_y = 0;  // true neutrino transverse vector, GeV
  std::vector<Lepton> leptons;
  std::vector<TruthParton> partons;
  std::vector<Track> tracks;
};

struct DomainConfig {
  DomainName name = DomainName::kA;
  double res_a = 0.05;         // sigma_rel(pt) = sqrt(a^2 + b^2 / pt)
  double res_b = 0.5;
  double efficiency = 0.95;    // flat track-survival plateau
  double pileup_mu = 0.0;      // mean pileup multiplicity before response
  double hardness = 1.0;       // multiplier on the parton pt scale
  double extra_jet_rate = 0.0; // shift on the Poisson jet-count mean
  double angle_smear = 0.01;   // eta/phi smear width
  double d0_mask_prob = 0.0;   // chance a surviving track reads d0 = 0
  bool drop_z0 = false;        // reconstruction provides no z0

  double sigma_rel(double pt) const;

  static DomainConfig domain_a();
  static DomainConfig domain_b();
  static DomainConfig domain_c();
  static DomainConfig by_name(DomainName name);
};

// Tracks from one parton: multiplicity 1 + Poisson(lambda_flavor log(pt)),
// momentum fractions Dirichlet(alpha_flavor), gaussian angular spread.
// Track pt sum reproduces the parton pt exactly.
std::vector<Track> fragment_parton(const TruthParton& parton, Rng& rng);

// Per-track efficiency drop, then pt scale / angle smears on survivors.
std::vector<Track> apply_detector(const std::vector<Track>& tracks,
                                  const DomainConfig& config, Rng& rng);

// Appends Poisson(pileup_mu) soft tracks, each passed through the same
// detector response as the hard tracks.
void add_pileup(Event& event, const DomainConfig& config, Rng& rng);

Event generate_event(Process process, const DomainConfig& config, std::uint64_t seed);

struct Jet {
  double pt = 0, eta = 0, phi = 0, mass = 0;
  std::vector<std::size_t> constituent_indices;
  JetFlavor flavor = JetFlavor::kUnlabeled;
};

// Sequential recombination, E-scheme on massless tracks. Candidates pass
// pt > min_pt and |eta| < 2.5 and come back sorted by descending pt. Equal
// distances prefer a pair merge over a beam step, then the lower (i, j).
std::vector<Jet> antikt_cluster(const std::vector<Track>& tracks, double r,
                                double min_pt);

// Flavor of the highest-pt parton within the cone, unlabeled when empty.
JetFlavor label_jet_flavor(const Jet& jet, const std::vector<TruthParton>& partons,
                           double cone = 0.4);

}  // namespace domainshift
