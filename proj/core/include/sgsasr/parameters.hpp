#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sgsasr/autograd.hpp"
#include "sgsasr/rng.hpp"

namespace sgsasr {

/// A named learnable array. Elements can be frozen individually; a fully frozen
/// parameter does not take part in differentiation at all.
struct Parameter {
  std::string name;
  ag::Var var;
  std::vector<std::uint8_t> frozen;  // per element; empty means none frozen
  bool fully_frozen = false;

  [[nodiscard]] bool element_trainable(std::size_t i) const {
    return !fully_frozen && (frozen.empty() || frozen[i] == 0);
  }
};

/// Ordered collection of named parameters.
class ParameterStore {
 public:
  /// Registers a parameter. Names must be unique.
  ag::Var& add(const std::string& name, Tensor init);

  /// Registers a weight drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)), seeded by
  /// (seed, name) so unrelated parameters never shift each other's draws.
  ag::Var& add_uniform(const std::string& name, Shape shape, int fan_in, std::uint64_t seed);

  [[nodiscard]] bool contains(const std::string& name) const { return index_.contains(name); }
  [[nodiscard]] const ag::Var& get(const std::string& name) const;
  [[nodiscard]] ag::Var& get(const std::string& name);
  [[nodiscard]] Parameter& entry(const std::string& name);
  [[nodiscard]] const Parameter& entry(const std::string& name) const;

  [[nodiscard]] std::vector<Parameter>& entries() { return entries_; }
  [[nodiscard]] const std::vector<Parameter>& entries() const { return entries_; }
  [[nodiscard]] std::vector<std::string> names() const;

  void freeze(const std::string& name);
  /// Freezes elements [begin, end) of the flattened array.
  void freeze_range(const std::string& name, std::size_t begin, std::size_t end);

  /// Total number of scalar parameters.
  [[nodiscard]] std::size_t count() const;
  [[nodiscard]] std::size_t trainable_count() const;

  void zero_grad();

 private:
  std::vector<Parameter> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace sgsasr
