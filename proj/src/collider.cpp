// SPDX-License-Identifier: Apache-2.0

#include "domainshift/collider.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace domainshift {

namespace {

constexpr double kPi = 3.14159265358979323846;

// hard scatter
constexpr double kPartonPtShape = 3.0;
constexpr double kPartonPtScaleQuark = 25.0;  // GeV
constexpr double kPartonPtScaleGluon = 20.0;  // softer gluon spectrum
constexpr double kPartonEtaSigma = 1.2;
constexpr double kEtaMax = 2.5;
constexpr double kGluonProb = 0.5;
constexpr double kBaseJetLambda = 0.8;  // Poisson mean for V+jets recoil count

// fragmentation
constexpr double kLambdaQuark = 0.7;
constexpr double kGluonMultRatio = 2.25;  // Casimir-inspired CA/CF
constexpr double kAlphaQuark = 2.5;
constexpr double kAlphaGluon = 1.2;
constexpr double kAngleQuark = 0.06;
constexpr double kAngleGluon = 0.13;
constexpr double kHardD0Sigma = 0.05;  // mm
constexpr double kHardZ0Sigma = 1.0;   // mm

// boson production and leptonic decay
constexpr double kBosonPtShape = 2.0;
constexpr double kBosonPtScale = 4.0;    // GeV, recoil boost, scaled by hardness
constexpr double kDecayKickShape = 12.0;
constexpr double kDecayKickScale = 4.2;  // GeV, ~m_V/2 decay momentum, puts the MET peak near 50
constexpr double kLeptonEtaSigma = 1.5;
constexpr double kLeptonD0Sigma = 0.02;  // mm, prompt
constexpr double kZJetsMetSigma = 3.0;   // GeV per component

// pileup
constexpr double kPileupPtMean = 1.0;    // GeV
constexpr double kPileupZ0Sigma = 50.0;  // mm, beam spot
constexpr double kPileupD0Sigma = 0.05;  // mm

Track make_track(double pt, double eta, double phi, int charge, double d0, double z0,
                 TrackOrigin origin) {
  Track t;
  t.px = pt * std::cos(phi);
  t.py = pt * std::sin(phi);
  t.pz = pt * std::sinh(eta);
  t.charge = charge;
  t.d0 = d0;
  t.z0 = z0;
  t.origin = origin;
  return t;
}

}  // namespace

std::string to_string(Process p) {
  switch (p) {
    case Process::kTTbar: return "TTBAR";
    case Process::kWW: return "WW";
    case Process::kWJets: return "WJETS";
    case Process::kZJets: return "ZJETS";
  }
  throw std::invalid_argument("unknown process enum");
}

std::string to_string(DomainName d) {
  switch (d) {
    case DomainName::kA: return "A";
    case DomainName::kB: return "B";
    case DomainName::kC: return "C";
  }
  throw std::invalid_argument("unknown domain enum");
}

Process process_from_string(const std::string& s) {
  if (s == "TTBAR") return Process::kTTbar;
  if (s == "WW") return Process::kWW;
  if (s == "WJETS") return Process::kWJets;
  if (s == "ZJETS") return Process::kZJets;
  throw std::invalid_argument("unknown process '" + s + "'");
}

DomainName domain_from_string(const std::string& s) {
  if (s == "A") return DomainName::kA;
  if (s == "B") return DomainName::kB;
  if (s == "C") return DomainName::kC;
  throw std::invalid_argument("unknown domain '" + s + "'");
}

double delta_phi(double a, double b) {
  const double d = std::remainder(a - b, 2.0 * kPi);
  return d <= -kPi ? d + 2.0 * kPi : d;
}

double wrap_phi(double phi) { return delta_phi(phi, 0.0); }

double Track::pt() const { return std::hypot(px, py); }
double Track::eta() const { return std::asinh(pz / pt()); }
double Track::phi() const { return wrap_phi(std::atan2(py, px)); }

double DomainConfig::sigma_rel(double pt) const {
  return std::sqrt(res_a * res_a + res_b * res_b / pt);
}

DomainConfig DomainConfig::domain_a() {
  DomainConfig c;
  c.name = DomainName::kA;
  c.res_a = 0.05;
  c.res_b = 0.5;
  c.efficiency = 0.95;
  c.pileup_mu = 0.0;
  c.hardness = 1.0;
  c.extra_jet_rate = 0.0;
  return c;
}

DomainConfig DomainConfig::domain_b() {
  DomainConfig c = domain_a();
  c.name = DomainName::kB;
  c.res_a = 0.06;
  c.res_b = 0.6;
  c.efficiency = 0.93;
  c.pileup_mu = 5.0;
  return c;
}

DomainConfig DomainConfig::domain_c() {
  DomainConfig c = domain_a();
  c.name = DomainName::kC;
  c.res_a = 0.04;
  c.res_b = 0.8;
  c.efficiency = 0.90;
  c.pileup_mu = 20.0;
  c.hardness = 1.15;
  c.extra_jet_rate = 0.7;
  return c;
}

DomainConfig DomainConfig::by_name(DomainName name) {
  switch (name) {
    case DomainName::kA: return domain_a();
    case DomainName::kB: return domain_b();
    case DomainName::kC: return domain_c();
  }
  throw std::invalid_argument("unknown domain enum");
}

std::vector<Track> fragment_parton(const TruthParton& parton, Rng& rng) {
  if (!(parton.pt > 0.0))
    throw std::invalid_argument("fragment_parton: parton pt must be positive");
  const bool gluon = parton.flavor == PartonFlavor::kGluon;
  const double lambda = (gluon ? kGluonMultRatio * kLambdaQuark : kLambdaQuark) *
                        std::log(parton.pt);
  const double alpha = gluon ? kAlphaGluon : kAlphaQuark;
  const double sigma_angle = gluon ? kAngleGluon : kAngleQuark;

  const std::size_t m = 1 + static_cast<std::size_t>(rng.poisson(lambda));
  const std::vector<double> fractions = rng.dirichlet(alpha, m);
  std::vector<Track> tracks;
  tracks.reserve(m);
  for (double f : fractions) {
    const double pt = f * parton.pt;
    const double eta = parton.eta + rng.normal(0.0, sigma_angle);
    const double phi = wrap_phi(parton.phi + rng.normal(0.0, sigma_angle));
    const int charge = rng.bernoulli(0.5) ? 1 : -1;
    const double d0 = rng.normal(0.0, kHardD0Sigma);
    const double z0 = rng.normal(0.0, kHardZ0Sigma);
    if (pt <= 0.0) continue;  // clamped residual fraction, keep kinematics finite
    tracks.push_back(make_track(pt, eta, phi, charge, d0, z0, TrackOrigin::kHard));
  }
  return tracks;
}

std::vector<Track> apply_detector(const std::vector<Track>& tracks,
                                  const DomainConfig& config, Rng& rng) {
  std::vector<Track> out;
  out.reserve(tracks.size());
  for (const Track& t : tracks) {
    if (!rng.bernoulli(config.efficiency)) continue;
    const double pt = t.pt();
    const double sigma = config.sigma_rel(pt);
    double scale = 1.0 + rng.normal(0.0, sigma);
    while (scale <= 0.0) scale = 1.0 + rng.normal(0.0, sigma);
    const double deta = rng.normal(0.0, config.angle_smear);
    const double dphi = rng.normal(0.0, config.angle_smear);
    // multiplicative scale plus an in-plane rotation and a pz correction;
    // all three collapse to the exact identity when the draws are zero
    Track s = t;
    const double sx = t.px * scale, sy = t.py * scale;
    s.px = sx * std::cos(dphi) - sy * std::sin(dphi);
    s.py = sx * std::sin(dphi) + sy * std::cos(dphi);
    const double eta = t.eta();
    s.pz = t.pz * scale + pt * scale * (std::sinh(eta + deta) - std::sinh(eta));
    if (config.d0_mask_prob > 0.0 && rng.bernoulli(config.d0_mask_prob)) s.d0 = 0.0;
    if (config.drop_z0) s.z0 = 0.0;
    out.push_back(s);
  }
  return out;
}

void add_pileup(Event& event, const DomainConfig& config, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(rng.poisson(config.pileup_mu));
  std::vector<Track> soft;
  soft.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pt = rng.exponential(kPileupPtMean);
    const double eta = rng.uniform(-kEtaMax, kEtaMax);
    const double phi = rng.uniform(-kPi, kPi);
    const int charge = rng.bernoulli(0.5) ? 1 : -1;
    const double d0 = rng.normal(0.0, kPileupD0Sigma);
    const double z0 = rng.normal(0.0, kPileupZ0Sigma);
    soft.push_back(make_track(pt, eta, phi, charge, d0, z0, TrackOrigin::kPileup));
  }
  for (Track& t : apply_detector(soft, config, rng)) event.tracks.push_back(t);
}

namespace {

struct TransverseVector {
  double x = 0, y = 0;
  double mag() const { return std::hypot(x, y); }
  double phi() const { return wrap_phi(std::atan2(y, x)); }
};

TransverseVector polar(double mag, double phi) {
  return {mag * std::cos(phi), mag * std::sin(phi)};
}

Lepton sample_lepton(const TransverseVector& v, Rng& rng) {
  Lepton l;
  l.pt = v.mag();
  l.eta = rng.truncated_normal(0.0, kLeptonEtaSigma, -kEtaMax, kEtaMax);
  l.phi = v.phi();
  l.flavor = rng.bernoulli(0.5) ? LeptonFlavor::kElectron : LeptonFlavor::kMuon;
  return l;
}

Track lepton_track(const Lepton& l, Rng& rng) {
  const int charge = rng.bernoulli(0.5) ? 1 : -1;
  return make_track(l.pt, l.eta, l.phi, charge, rng.normal(0.0, kLeptonD0Sigma),
                    rng.normal(0.0, kHardZ0Sigma), TrackOrigin::kHard);
}

}  // namespace

Event generate_event(Process process, const DomainConfig& config, std::uint64_t seed) {
  Event ev;
  ev.process = process;
  ev.domain = config.name;
  ev.seed = seed;

  const Rng root = Rng::from_seed(seed);

  Rng hard = root.derive(1);
  std::size_t n_partons = 0;
  switch (process) {
    case Process::kTTbar: n_partons = 4; break;
    case Process::kWW: n_partons = 2; break;
    case Process::kWJets:
    case Process::kZJets:
      n_partons = 1 + static_cast<std::size_t>(
                          hard.poisson(kBaseJetLambda + config.extra_jet_rate));
      break;
    default: throw std::invalid_argument("generate_event: unknown process");
  }
  for (std::size_t i = 0; i < n_partons; ++i) {
    TruthParton p;
    p.flavor = hard.bernoulli(kGluonProb) ? PartonFlavor::kGluon : PartonFlavor::kQuark;
    const double scale =
        (p.flavor == PartonFlavor::kGluon ? kPartonPtScaleGluon : kPartonPtScaleQuark) *
        config.hardness;
    p.pt = hard.gamma_dist(kPartonPtShape, scale);
    p.eta = hard.truncated_normal(0.0, kPartonEtaSigma, -kEtaMax, kEtaMax);
    p.phi = hard.uniform(-kPi, kPi);
    ev.partons.push_back(p);
  }

  // Leptonic boson decay: the decay momentum q (~m_V/2) dominates the
  // recoil boost v, so the lepton track mirrors the true MET up to the
  // recoil spread and detector smearing.
  Rng decay = root.derive(2);
  const TransverseVector v =
      polar(decay.gamma_dist(kBosonPtShape, kBosonPtScale * config.hardness),
            decay.uniform(-kPi, kPi));
  const double u = decay.uniform(0.35, 0.65);
  const TransverseVector q =
      polar(decay.gamma_dist(kDecayKickShape, kDecayKickScale), decay.uniform(-kPi, kPi));
  std::vector<Track> hard_tracks;
  if (process == Process::kZJets) {
    const TransverseVector l1{u * v.x + q.x, u * v.y + q.y};
    const TransverseVector l2{(1.0 - u) * v.x - q.x, (1.0 - u) * v.y - q.y};
    ev.leptons.push_back(sample_lepton(l1, decay));
    ev.leptons.push_back(sample_lepton(l2, decay));
    ev.met_x = decay.normal(0.0, kZJetsMetSigma);
    ev.met_y = decay.normal(0.0, kZJetsMetSigma);
  } else {
    const TransverseVector lep{u * v.x + q.x, u * v.y + q.y};
    const TransverseVector nu{(1.0 - u) * v.x - q.x, (1.0 - u) * v.y - q.y};
    ev.leptons.push_back(sample_lepton(lep, decay));
    ev.met_x = nu.x;
    ev.met_y = nu.y;
  }
  for (const Lepton& l : ev.leptons) hard_tracks.push_back(lepton_track(l, decay));

  for (std::size_t i = 0; i < ev.partons.size(); ++i) {
    Rng frag = root.derive(3, i);
    for (const Track& t : fragment_parton(ev.partons[i], frag))
      hard_tracks.push_back(t);
  }

  Rng det = root.derive(4);
  ev.tracks = apply_detector(hard_tracks, config, det);

  Rng pu = root.derive(5);
  add_pileup(ev, config, pu);
  return ev;
}

namespace {

struct PseudoJet {
  double px, py, pz, e;
  double ptinv2, eta, phi;
  std::vector<std::size_t> constituents;
  bool active = true;
};

PseudoJet seed_pseudojet(const Track& t, std::size_t index) {
  PseudoJet p;
  p.px = t.px;
  p.py = t.py;
  p.pz = t.pz;
  p.e = std::sqrt(t.px * t.px + t.py * t.py + t.pz * t.pz);
  const double pt2 = t.px * t.px + t.py * t.py;
  p.ptinv2 = pt2 > 0.0 ? 1.0 / pt2 : std::numeric_limits<double>::max();
  p.eta = t.eta();
  p.phi = t.phi();
  p.constituents = {index};
  return p;
}

PseudoJet merge_pseudojets(const PseudoJet& a, const PseudoJet& b) {
  PseudoJet m;
  m.px = a.px + b.px;
  m.py = a.py + b.py;
  m.pz = a.pz + b.pz;
  m.e = a.e + b.e;
  const double pt2 = m.px * m.px + m.py * m.py;
  m.ptinv2 = pt2 > 0.0 ? 1.0 / pt2 : std::numeric_limits<double>::max();
  m.eta = std::asinh(m.pz / std::sqrt(pt2));
  m.phi = wrap_phi(std::atan2(m.py, m.px));
  m.constituents = a.constituents;
  m.constituents.insert(m.constituents.end(), b.constituents.begin(),
                        b.constituents.end());
  return m;
}

double pair_distance(const PseudoJet& a, const PseudoJet& b, double r2) {
  const double de = a.eta - b.eta;
  const double dp = delta_phi(a.phi, b.phi);
  return std::min(a.ptinv2, b.ptinv2) * (de * de + dp * dp) / r2;
}

}  // namespace

std::vector<Jet> antikt_cluster(const std::vector<Track>& tracks, double r,
                                double min_pt) {
  if (!(r > 0.0)) throw std::invalid_argument("antikt_cluster: radius must be positive");
  const double r2 = r * r;
  std::vector<PseudoJet> jets;
  jets.reserve(2 * tracks.size());
  for (std::size_t i = 0; i < tracks.size(); ++i)
    jets.push_back(seed_pseudojet(tracks[i], i));

  // cached nearest neighbor per active pseudojet
  std::vector<std::size_t> nn(jets.size(), 0);
  std::vector<double> nnd(jets.size(), 0.0);
  auto rescan = [&](std::size_t i) {
    nnd[i] = std::numeric_limits<double>::infinity();
    nn[i] = i;
    for (std::size_t j = 0; j < jets.size(); ++j) {
      if (j == i || !jets[j].active) continue;
      const double d = pair_distance(jets[i], jets[j], r2);
      if (d < nnd[i] || (d == nnd[i] && j < nn[i])) {
        nnd[i] = d;
        nn[i] = j;
      }
    }
  };
  for (std::size_t i = 0; i < jets.size(); ++i) rescan(i);

  std::vector<PseudoJet> finals;
  std::size_t remaining = jets.size();
  while (remaining > 0) {
    // smallest distance wins; a pair merge beats a beam step at equal d,
    // then the lexicographically lower pair
    double best = std::numeric_limits<double>::infinity();
    bool best_is_pair = false;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < jets.size(); ++i) {
      if (!jets[i].active) continue;
      const double diB = jets[i].ptinv2;
      if (diB < best || (diB == best && !best_is_pair && i < bi)) {
        best = diB;
        best_is_pair = false;
        bi = i;
      }
      if (nn[i] != i) {
        const std::size_t lo = std::min(i, nn[i]), hi = std::max(i, nn[i]);
        const double d = nnd[i];
        const bool wins =
            d < best || (d == best && !best_is_pair) ||
            (d == best && best_is_pair && (lo < bi || (lo == bi && hi < bj)));
        if (wins) {
          best = d;
          best_is_pair = true;
          bi = lo;
          bj = hi;
        }
      }
    }

    if (!best_is_pair) {
      jets[bi].active = false;
      --remaining;
      finals.push_back(jets[bi]);
      for (std::size_t k = 0; k < jets.size(); ++k)
        if (jets[k].active && nn[k] == bi) rescan(k);
      continue;
    }

    jets[bi].active = false;
    jets[bj].active = false;
    jets.push_back(merge_pseudojets(jets[bi], jets[bj]));
    nn.push_back(0);
    nnd.push_back(0.0);
    const std::size_t m = jets.size() - 1;
    --remaining;
    rescan(m);
    for (std::size_t k = 0; k + 1 < jets.size(); ++k) {
      if (!jets[k].active) continue;
      if (nn[k] == bi || nn[k] == bj) {
        rescan(k);
      } else {
        const double d = pair_distance(jets[k], jets[m], r2);
        if (d < nnd[k] || (d == nnd[k] && m < nn[k])) {
          nnd[k] = d;
          nn[k] = m;
        }
      }
    }
  }

  std::vector<Jet> out;
  for (const PseudoJet& p : finals) {
    const double pt = std::sqrt(p.px * p.px + p.py * p.py);
    if (!(pt > min_pt)) continue;
    const double eta = std::asinh(p.pz / pt);
    if (!(std::abs(eta) < kEtaMax)) continue;
    Jet j;
    j.pt = pt;
    j.eta = eta;
    j.phi = wrap_phi(std::atan2(p.py, p.px));
    const double m2 = p.e * p.e - (p.px * p.px + p.py * p.py + p.pz * p.pz);
    j.mass = m2 > 0.0 ? std::sqrt(m2) : 0.0;
    j.constituent_indices = p.constituents;
    std::sort(j.constituent_indices.begin(), j.constituent_indices.end());
    out.push_back(j);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Jet& a, const Jet& b) { return a.pt > b.pt; });
  return out;
}

JetFlavor label_jet_flavor(const Jet& jet, const std::vector<TruthParton>& partons,
                           double cone) {
  if (!(cone > 0.0)) throw std::invalid_argument("label_jet_flavor: cone must be positive");
  double best_pt = -1.0;
  JetFlavor flavor = JetFlavor::kUnlabeled;
  for (const TruthParton& p : partons) {
    const double de = jet.eta - p.eta;
    const double dp = delta_phi(jet.phi, p.phi);
    if (de * de + dp * dp >= cone * cone) continue;
    if (p.pt > best_pt) {
      best_pt = p.pt;
      flavor = p.flavor == PartonFlavor::kQuark ? JetFlavor::kQuark : JetFlavor::kGluon;
    }
  }
  return flavor;
}

}  // namespace domainshift
