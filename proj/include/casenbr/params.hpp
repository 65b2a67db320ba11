#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "casenbr/autodiff.hpp"

namespace casenbr {

/// Named learnable tensors in a fixed insertion order.
template <typename Real>
class ParamSet {
 public:
  using Entry = std::pair<std::string, ad::Var<Real>>;

  ad::Var<Real> add(std::string name, Tensor<Real> init) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
    auto v = ad::parameter(std::move(init));
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), v);
    return v;
  }

  [[nodiscard]] const ad::Var<Real>& get(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].second;
  }
  [[nodiscard]] bool contains(const std::string& name) const { return index_.contains(name); }

  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] auto begin() const noexcept { return entries_.begin(); }
  [[nodiscard]] auto end() const noexcept { return entries_.end(); }

  [[nodiscard]] std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : entries_) n += v->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, v] : entries_)
      if (v->has_grad()) v->grad.fill(Real{0});
  }

  /// Copies every value from `other`, which must have identical names and shapes.
  void assign_values(const ParamSet& other) {
    if (other.size() != size()) throw ShapeError("parameter sets differ in size");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].first != other.entries_[i].first ||
          !entries_[i].second->value.same_shape(other.entries_[i].second->value))
        throw ShapeError("parameter mismatch at " + entries_[i].first);
      entries_[i].second->value = other.entries_[i].second->value;
    }
  }

  /// Deep copy of values; gradients are not copied.
  [[nodiscard]] ParamSet clone() const {
    ParamSet out;
    for (const auto& [name, v] : entries_) out.add(name, v->value);
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace casenbr
