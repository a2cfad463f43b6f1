#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgsasr/model.hpp"

namespace sgsasr::metrics {

struct FlopEntry {
  std::string layer;
  std::uint64_t flops = 0;
};

/// Per-layer analytic FLOPs of one forward pass.
struct FlopLedger {
  std::vector<FlopEntry> entries;

  void add(std::string layer, std::uint64_t flops) { entries.push_back({std::move(layer), flops}); }
  [[nodiscard]] std::uint64_t total() const;
  /// Sum over layers whose name starts with `prefix`.
  [[nodiscard]] std::uint64_t sum(const std::string& prefix) const;
  /// One `layer,flops` line per entry.
  [[nodiscard]] std::string dump() const;
};

/// Ledger for super-resolving one h x w image by `scale`, matching the
/// operation counts recorded by the runtime kernels.
[[nodiscard]] FlopLedger flop_ledger(const ModelConfig& cfg, int h, int w, double scale);
[[nodiscard]] std::uint64_t count_flops(const ModelConfig& cfg, int h, int w, double scale);

/// Reference implicit decoder for comparison: the same encoder followed by a
/// per-pixel MLP (unfolded 3x3 latents, relative coordinate and cell; four
/// 256-wide hidden layers) evaluated at four neighbouring latents per output pixel.
[[nodiscard]] FlopLedger liif_baseline_ledger(const ModelConfig& cfg, int h, int w, double scale);
[[nodiscard]] std::uint64_t count_liif_baseline_flops(const ModelConfig& cfg, int h, int w, double scale);

}  // namespace sgsasr::metrics
