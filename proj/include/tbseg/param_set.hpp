#pragma once

#include <map>
#include <string>
#include <vector>

#include "tbseg/tensor.hpp"

namespace tbseg {

// Named map of tensors: one network's weights. Names are unique and
// iteration is lexicographic (std::map order). Batch-norm running
// statistics live in the same map under the ".running_mean" /
// ".running_var" suffixes; they are deployable state but not trainable.
class ParamSet {
 public:
  using Map = std::map<std::string, Tensor>;
  using const_iterator = Map::const_iterator;
  using iterator = Map::iterator;

  ParamSet() = default;

  // Throws on duplicate name.
  void insert(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  iterator begin() { return entries_.begin(); }
  iterator end() { return entries_.end(); }
  const_iterator begin() const { return entries_.begin(); }
  const_iterator end() const { return entries_.end(); }

  std::vector<std::string> names() const;

  // Same name set and per-name shapes match.
  bool shape_compatible(const ParamSet& other) const;

  // Batch-norm running statistics are carried in the set but excluded
  // from gradient updates and weight averaging.
  static bool is_bn_buffer(const std::string& name);

  // Total number of scalar elements across all entries.
  size_t element_count() const;

 private:
  Map entries_;
};

}  // namespace tbseg
