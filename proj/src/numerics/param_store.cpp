#include "ssm/numerics/param_store.hpp"

#include <cmath>

#include "ssm/errors.hpp"

namespace ssm::num {

void ParamStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ArgumentError("duplicate parameter '" + name + "'");
  if (!value.all_finite()) throw NumericError("parameter '" + name + "' has non-finite entries");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ParamStore::contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

std::size_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ArgumentError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

const Tensor& ParamStore::get(std::string_view name) const { return entries_[index_of(name)].second; }

Tensor& ParamStore::get(std::string_view name) { return entries_[index_of(name)].second; }

std::size_t ParamStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(name);
  return out;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (const auto& [name, t] : entries_) out.add(name, Tensor(t.shape(), 0.0));
  return out;
}

Tensor glorot_uniform(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t = Tensor::matrix(out, in);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace ssm::num
