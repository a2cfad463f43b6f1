#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sgsasr/metrics.hpp"
#include "sgsasr/model.hpp"
#include "sgsasr/training.hpp"

namespace sgsasr::ablation {

enum class Axis { modules, fusion, modulation };

[[nodiscard]] std::string to_string(Axis a);
/// Throws ConfigError naming the valid axes.
[[nodiscard]] Axis axis_from_string(const std::string& s);

struct Variant {
  std::string name;
  ModelConfig model;
};

/// Row set of one sweep, derived from `base` by toggling only the axis switch.
///   modules:    baseline, +scrrb (summation), +scrrb+affem
///   fusion:     summation, concatenation, affem
///   modulation: none, scale, shift, scale+shift
[[nodiscard]] std::vector<Variant> variants(Axis axis, const ModelConfig& base);

struct RunResult {
  std::string variant;
  std::uint64_t seed = 0;
  std::int64_t steps = 0;
  double final_loss = 0.0;
  std::uint64_t order_hash = 0;
  metrics::MetricReport val;
};

/// Trains a fresh model for `steps` optimizer steps (the full epoch schedule
/// when `steps` <= 0) and scores it on `val` at `val_scale`. Model init and
/// sample order both derive from `seed`, so all variants of a sweep see the
/// same data stream.
[[nodiscard]] RunResult run_variant(const Variant& v, const training::TrainConfig& train, std::int64_t steps,
                                    std::span<const Image> train_images, std::span<const Image> val_images,
                                    double val_scale, std::uint64_t seed);

struct Row {
  std::string variant;
  double psnr_db = 0.0;  // mean over seeds
  double ssim = 0.0;
  int runs = 0;
};

/// Per-variant means in first-appearance order.
[[nodiscard]] std::vector<Row> summarize(std::span<const RunResult> results);

[[nodiscard]] std::string table(Axis axis, std::span<const Row> rows);

}  // namespace sgsasr::ablation
