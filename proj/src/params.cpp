// SPDX-License-Identifier: Apache-2.0

#include "domainshift/params.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace domainshift {

namespace {
constexpr char kHeader[] = "domainshift-params v1";
}

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Tensor ParameterStore::create(const std::string& name, Tensor init, bool trainable) {
  if (index_.count(name))
    throw std::invalid_argument("ParameterStore: duplicate name " + name);
  init.set_requires_grad(trainable);
  index_[name] = items_.size();
  items_.push_back(Parameter{name, init, trainable});
  return init;
}

bool ParameterStore::has(const std::string& name) const { return index_.count(name) > 0; }

Parameter& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::invalid_argument("ParameterStore: unknown name " + name);
  return items_[it->second];
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::invalid_argument("ParameterStore: unknown name " + name);
  return items_[it->second];
}

std::size_t ParameterStore::total_values() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grads() {
  for (auto& p : items_)
    if (p.value.has_grad()) p.value.zero_grad();
}

std::size_t ParameterStore::apply_freeze(const std::vector<std::string>& prefixes) {
  std::size_t frozen = 0;
  for (const auto& prefix : prefixes) {
    bool hit = false;
    for (auto& p : items_) {
      if (p.name.rfind(prefix, 0) != 0) continue;
      hit = true;
      if (p.trainable) {
        p.trainable = false;
        p.value.set_requires_grad(false);
        ++frozen;
      }
    }
    if (!hit)
      throw std::invalid_argument("apply_freeze: prefix '" + prefix +
                                  "' matches no parameter");
  }
  return frozen;
}

std::map<std::string, std::vector<double>> ParameterStore::gradient_map() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& p : items_)
    if (p.value.requires_grad() && p.value.has_grad()) out[p.name] = p.value.grad();
  return out;
}

void ParameterStore::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << kHeader << "\n" << items_.size() << "\n";
  for (const auto& p : items_) {
    os << p.name << " " << p.value.rank();
    for (std::size_t d : p.value.shape()) os << " " << d;
    os << "\n";
    const auto& v = p.value.values();
    for (std::size_t i = 0; i < v.size(); ++i)
      os << (i ? " " : "") << format_full(v[i]);
    os << "\n";
  }
  if (!os) throw std::runtime_error("failed writing " + path);
}

void ParameterStore::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::string header;
  std::getline(is, header);
  if (header != kHeader)
    throw std::runtime_error(path + ": bad header '" + header + "'");
  std::size_t count = 0;
  is >> count;
  if (count != items_.size())
    throw std::runtime_error(path + ": holds " + std::to_string(count) +
                             " parameters, model has " + std::to_string(items_.size()));
  for (std::size_t k = 0; k < count; ++k) {
    std::string name;
    std::size_t rank = 0;
    is >> name >> rank;
    Shape shape(rank);
    for (auto& d : shape) is >> d;
    if (!is) throw std::runtime_error(path + ": truncated record header");
    if (!has(name)) throw std::runtime_error(path + ": unknown parameter " + name);
    Parameter& p = at(name);
    if (p.value.shape() != shape)
      throw std::runtime_error(path + ": " + name + " has shape " + shape_str(shape) +
                               ", model expects " + shape_str(p.value.shape()));
    for (auto& v : p.value.values()) is >> v;
    if (!is) throw std::runtime_error(path + ": truncated values for " + name);
  }
}

}  // namespace domainshift
