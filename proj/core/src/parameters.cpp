#include "sgsasr/parameters.hpp"

#include <cmath>

#include "sgsasr/errors.hpp"

namespace sgsasr {

ag::Var& ParameterStore::add(const std::string& name, Tensor init) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
  index_[name] = entries_.size();
  entries_.push_back(Parameter{name, ag::Var(std::move(init), true), {}, false});
  return entries_.back().var;
}

ag::Var& ParameterStore::add_uniform(const std::string& name, Shape shape, int fan_in,
                                     std::uint64_t seed) {
  Tensor t(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Rng rng = Rng::derive(seed, name);
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return add(name, std::move(t));
}

const ag::Var& ParameterStore::get(const std::string& name) const { return entry(name).var; }
ag::Var& ParameterStore::get(const std::string& name) { return entry(name).var; }

Parameter& ParameterStore::entry(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return entries_[it->second];
}

const Parameter& ParameterStore::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return entries_[it->second];
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

void ParameterStore::freeze(const std::string& name) {
  auto& e = entry(name);
  e.fully_frozen = true;
  e.var.set_requires_grad(false);
}

void ParameterStore::freeze_range(const std::string& name, std::size_t begin, std::size_t end) {
  auto& e = entry(name);
  const std::size_t n = e.var.value().size();
  if (begin > end || end > n) throw ConfigError("freeze_range out of bounds for " + name);
  if (e.frozen.empty()) e.frozen.assign(n, 0);
  for (std::size_t i = begin; i < end; ++i) e.frozen[i] = 1;
}

std::size_t ParameterStore::count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += e.var.value().size();
  return total;
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) {
    for (std::size_t i = 0; i < e.var.value().size(); ++i) total += e.element_trainable(i) ? 1 : 0;
  }
  return total;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

}  // namespace sgsasr
