#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ssm/numerics/tensor.hpp"

namespace ssm::num {

// Named parameter tensors. Iteration follows insertion order so that
// serialization, optimizer updates and gradient checks are deterministic.
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);
  std::size_t index_of(std::string_view name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const noexcept;
  std::vector<std::string> names() const;

  std::vector<Entry>::iterator begin() { return entries_.begin(); }
  std::vector<Entry>::iterator end() { return entries_.end(); }
  std::vector<Entry>::const_iterator begin() const { return entries_.begin(); }
  std::vector<Entry>::const_iterator end() const { return entries_.end(); }

  // Same names and shapes, all values zero.
  ParamStore zeros_like() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Glorot-uniform matrix of shape out x in: U(-a, a), a = sqrt(6 / (in + out)).
Tensor glorot_uniform(std::size_t out, std::size_t in, std::mt19937_64& rng);

}  // namespace ssm::num
