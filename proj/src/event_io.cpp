// SPDX-License-Identifier: Apache-2.0

#include "domainshift/event_io.hpp"

#include <zlib.h>

#include <cstdio>
#include <stdexcept>

#include <json.hpp>

namespace domainshift {

namespace {

bool has_gz_suffix(const std::string& path) {
  return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

using ordered_json = nlohmann::ordered_json;

}  // namespace

struct LineWriter::Impl {
  std::FILE* file = nullptr;
  gzFile gz = nullptr;
  std::string path;
};

LineWriter::LineWriter(const std::string& path) : impl_(std::make_unique<Impl>()) {
  impl_->path = path;
  if (has_gz_suffix(path)) {
    impl_->gz = gzopen(path.c_str(), "wb");
    if (!impl_->gz) throw std::runtime_error("cannot write " + path);
  } else {
    impl_->file = std::fopen(path.c_str(), "wb");
    if (!impl_->file) throw std::runtime_error("cannot write " + path);
  }
}

LineWriter::~LineWriter() { close(); }

void LineWriter::write_line(const std::string& line) {
  if (impl_->gz) {
    if (gzwrite(impl_->gz, line.data(), static_cast<unsigned>(line.size())) !=
            static_cast<int>(line.size()) ||
        gzwrite(impl_->gz, "\n", 1) != 1)
      throw std::runtime_error("failed writing " + impl_->path);
    return;
  }
  if (!impl_->file) throw std::runtime_error("writer for " + impl_->path + " is closed");
  if (std::fwrite(line.data(), 1, line.size(), impl_->file) != line.size() ||
      std::fputc('\n', impl_->file) == EOF)
    throw std::runtime_error("failed writing " + impl_->path);
}

void LineWriter::close() {
  if (impl_->gz) {
    gzclose(impl_->gz);
    impl_->gz = nullptr;
  }
  if (impl_->file) {
    std::fclose(impl_->file);
    impl_->file = nullptr;
  }
}

struct LineReader::Impl {
  std::FILE* file = nullptr;
  gzFile gz = nullptr;
  std::string path;
};

LineReader::LineReader(const std::string& path) : impl_(std::make_unique<Impl>()) {
  impl_->path = path;
  if (has_gz_suffix(path)) {
    impl_->gz = gzopen(path.c_str(), "rb");
    if (!impl_->gz) throw std::runtime_error("cannot read " + path);
  } else {
    impl_->file = std::fopen(path.c_str(), "rb");
    if (!impl_->file) throw std::runtime_error("cannot read " + path);
  }
}

LineReader::~LineReader() {
  if (impl_->gz) gzclose(impl_->gz);
  if (impl_->file) std::fclose(impl_->file);
}

bool LineReader::next_line(std::string& line) {
  line.clear();
  char buf[1 << 14];
  if (impl_->gz) {
    for (;;) {
      if (!gzgets(impl_->gz, buf, sizeof(buf))) return !line.empty();
      line += buf;
      if (!line.empty() && line.back() == '\n') {
        line.pop_back();
        return true;
      }
    }
  }
  for (;;) {
    if (!std::fgets(buf, sizeof(buf), impl_->file)) return !line.empty();
    line += buf;
    if (!line.empty() && line.back() == '\n') {
      line.pop_back();
      return true;
    }
  }
}

namespace {

std::string lepton_flavor_name(LeptonFlavor f) {
  return f == LeptonFlavor::kElectron ? "electron" : "muon";
}

LeptonFlavor lepton_flavor_from(const std::string& s) {
  if (s == "electron") return LeptonFlavor::kElectron;
  if (s == "muon") return LeptonFlavor::kMuon;
  throw std::invalid_argument("unknown lepton flavor '" + s + "'");
}

std::string parton_flavor_name(PartonFlavor f) {
  return f == PartonFlavor::kQuark ? "quark" : "gluon";
}

PartonFlavor parton_flavor_from(const std::string& s) {
  if (s == "quark") return PartonFlavor::kQuark;
  if (s == "gluon") return PartonFlavor::kGluon;
  throw std::invalid_argument("unknown parton flavor '" + s + "'");
}

std::string origin_name(TrackOrigin o) {
  return o == TrackOrigin::kHard ? "hard" : "pileup";
}

TrackOrigin origin_from(const std::string& s) {
  if (s == "hard") return TrackOrigin::kHard;
  if (s == "pileup") return TrackOrigin::kPileup;
  throw std::invalid_argument("unknown track origin '" + s + "'");
}

}  // namespace

std::string event_to_json(const Event& event) {
  ordered_json j;
  j["process"] = to_string(event.process);
  j["domain"] = to_string(event.domain);
  j["seed"] = event.seed;
  j["met_true"] = {event.met_x, event.met_y};
  j["leptons"] = ordered_json::array();
  for (const Lepton& l : event.leptons)
    j["leptons"].push_back({{"pt", l.pt},
                            {"eta", l.eta},
                            {"phi", l.phi},
                            {"flavor", lepton_flavor_name(l.flavor)}});
  j["partons"] = ordered_json::array();
  for (const TruthParton& p : event.partons)
    j["partons"].push_back({{"pt", p.pt},
                            {"eta", p.eta},
                            {"phi", p.phi},
                            {"flavor", parton_flavor_name(p.flavor)}});
  j["tracks"] = ordered_json::array();
  for (const Track& t : event.tracks)
    j["tracks"].push_back({{"px", t.px},
                           {"py", t.py},
                           {"pz", t.pz},
                           {"charge", t.charge},
                           {"d0", t.d0},
                           {"z0", t.z0},
                           {"origin", origin_name(t.origin)}});
  return j.dump();
}

Event event_from_json(const std::string& line) {
  const ordered_json j = ordered_json::parse(line);
  Event e;
  e.process = process_from_string(j.at("process").get<std::string>());
  e.domain = domain_from_string(j.at("domain").get<std::string>());
  e.seed = j.at("seed").get<std::uint64_t>();
  e.met_x = j.at("met_true").at(0).get<double>();
  e.met_y = j.at("met_true").at(1).get<double>();
  for (const auto& l : j.at("leptons")) {
    Lepton lep;
    lep.pt = l.at("pt").get<double>();
    lep.eta = l.at("eta").get<double>();
    lep.phi = l.at("phi").get<double>();
    lep.flavor = lepton_flavor_from(l.at("flavor").get<std::string>());
    e.leptons.push_back(lep);
  }
  for (const auto& p : j.at("partons")) {
    TruthParton parton;
    parton.pt = p.at("pt").get<double>();
    parton.eta = p.at("eta").get<double>();
    parton.phi = p.at("phi").get<double>();
    parton.flavor = parton_flavor_from(p.at("flavor").get<std::string>());
    e.partons.push_back(parton);
  }
  for (const auto& t : j.at("tracks")) {
    Track track;
    track.px = t.at("px").get<double>();
    track.py = t.at("py").get<double>();
    track.pz = t.at("pz").get<double>();
    track.charge = t.at("charge").get<int>();
    track.d0 = t.at("d0").get<double>();
    track.z0 = t.at("z0").get<double>();
    track.origin = origin_from(t.at("origin").get<std::string>());
    e.tracks.push_back(track);
  }
  return e;
}

void write_events(const std::string& path, const std::vector<Event>& events) {
  LineWriter writer(path);
  for (const Event& e : events) writer.write_line(event_to_json(e));
  writer.close();
}

std::vector<Event> read_events(const std::string& path) {
  LineReader reader(path);
  std::vector<Event> events;
  std::string line;
  while (reader.next_line(line)) {
    if (line.empty()) continue;
    events.push_back(event_from_json(line));
  }
  return events;
}

std::string domain_to_json(const DomainConfig& config) {
  ordered_json j;
  j["name"] = to_string(config.name);
  j["res_a"] = config.res_a;
  j["res_b"] = config.res_b;
  j["efficiency"] = config.efficiency;
  j["pileup_mu"] = config.pileup_mu;
  j["hardness"] = config.hardness;
  j["extra_jet_rate"] = config.extra_jet_rate;
  j["angle_smear"] = config.angle_smear;
  j["d0_mask_prob"] = config.d0_mask_prob;
  j["drop_z0"] = config.drop_z0;
  return j.dump();
}

DomainConfig domain_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  DomainConfig c = DomainConfig::by_name(domain_from_string(j.at("name").get<std::string>()));
  if (j.contains("res_a")) c.res_a = j.at("res_a").get<double>();
  if (j.contains("res_b")) c.res_b = j.at("res_b").get<double>();
  if (j.contains("efficiency")) c.efficiency = j.at("efficiency").get<double>();
  if (j.contains("pileup_mu")) c.pileup_mu = j.at("pileup_mu").get<double>();
  if (j.contains("hardness")) c.hardness = j.at("hardness").get<double>();
  if (j.contains("extra_jet_rate")) c.extra_jet_rate = j.at("extra_jet_rate").get<double>();
  if (j.contains("angle_smear")) c.angle_smear = j.at("angle_smear").get<double>();
  if (j.contains("d0_mask_prob")) c.d0_mask_prob = j.at("d0_mask_prob").get<double>();
  if (j.contains("drop_z0")) c.drop_z0 = j.at("drop_z0").get<bool>();
  return c;
}

}  // namespace domainshift
