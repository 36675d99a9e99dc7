#include "tbseg/param_set.hpp"

#include <stdexcept>

namespace tbseg {

void ParamSet::insert(const std::string& name, Tensor value) {
  auto [it, inserted] = entries_.emplace(name, std::move(value));
  if (!inserted) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

bool ParamSet::shape_compatible(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    if (!a->second.same_shape(b->second)) return false;
  }
  return true;
}

bool ParamSet::is_bn_buffer(const std::string& name) {
  auto ends_with = [&name](const char* suffix) {
    std::string s(suffix);
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  return ends_with(".running_mean") || ends_with(".running_var");
}

size_t ParamSet::element_count() const {
  size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

}  // namespace tbseg
