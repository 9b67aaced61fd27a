// SPDX-License-Identifier: Apache-2.0
//
// Named parameter registry for a model. Names are hierarchical dotted paths
// ("qg.edgeconv0.mlp.w0"); freezing matches on path prefixes. Snapshots are
// plain text, full 17-digit precision, stable ordering, so files round-trip
// byte for byte.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "domainshift/tensor.hpp"

namespace domainshift {

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

class ParameterStore {
 public:
  // Registers a tensor under a unique name. Trainable entries participate
  // in gradients; buffers (running statistics) pass trainable = false.
  Tensor create(const std::string& name, Tensor init, bool trainable = true);

  bool has(const std::string& name) const;
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  std::vector<Parameter>& items() { return items_; }
  const std::vector<Parameter>& items() const { return items_; }
  std::size_t total_values() const;

  void zero_grads();

  // Marks every parameter whose name starts with one of the prefixes as
  // non-trainable and detaches it from gradient tracking. A prefix that
  // matches nothing is an error. Returns the number of tensors frozen.
  std::size_t apply_freeze(const std::vector<std::string>& prefixes);

  std::map<std::string, std::vector<double>> gradient_map() const;

  void save(const std::string& path) const;
  // Overwrites values in place; the file must carry exactly the names and
  // shapes already registered.
  void load(const std::string& path);

 private:
  std::vector<Parameter> items_;
  std::map<std::string, std::size_t> index_;
};

// 17 significant digits, shortest-width %g form; parses back to the same bits.
std::string format_full(double v);

}  // namespace domainshift
