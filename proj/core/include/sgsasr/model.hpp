#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>

#include "sgsasr/config.hpp"
#include "sgsasr/decoder.hpp"
#include "sgsasr/encoder.hpp"
#include "sgsasr/parameters.hpp"
#include "sgsasr/saliency.hpp"

namespace sgsasr {

/// Complete network description. Fusion and modulation ablations live in
/// `encoder.fusion` and `decoder.modulation`.
struct ModelConfig {
  encoder::EncoderConfig encoder;
  decoder::DecoderConfig decoder;
  saliency::BackendConfig saliency;
  bool use_scrrb = true;  // false: zero saliency features, no pyramid parameters

  [[nodiscard]] int in_channels() const { return encoder.in_channels; }
  [[nodiscard]] int out_channels() const { return decoder.out_channels; }

  void validate() const;
  static ModelConfig from_config(const Config& cfg);
  void to_config(Config& cfg) const;
  [[nodiscard]] Config to_config() const;
  /// Stable digest of the canonical config text.
  [[nodiscard]] std::string hash() const;

  /// Reduced widths and depths for CPU-scale experiments.
  static ModelConfig desk_profile();
  /// Smallest useful network: `width` channels, one block per stage.
  static ModelConfig toy(int width, int out_dim);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// round(h * s) x round(w * s), halves rounding away from zero.
[[nodiscard]] std::pair<int, int> output_size(int h, int w, double scale);

class Model {
 public:
  /// Builds and initializes all parameters from `seed`, then applies the
  /// ablation switches (zeroing and freezing disabled modulation rows).
  Model(ModelConfig cfg, std::uint64_t seed);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] ParameterStore& params() { return params_; }
  [[nodiscard]] const ParameterStore& params() const { return params_; }
  [[nodiscard]] const saliency::Detector& detector() const { return *detector_; }

  /// Saliency map of an LR batch (n, 1, h, w).
  [[nodiscard]] Tensor saliency_map(const Tensor& lr) const;

  /// Latent feature map (n, out_dim, h, w) for an LR batch with values in [0, 1].
  /// Records a graph when grad mode is on.
  [[nodiscard]] ag::Var features(const Tensor& lr) const;

  /// Predictions (n, out_channels, 1, Q) at explicit query points.
  [[nodiscard]] ag::Var predict(const Tensor& lr, std::span<const decoder::QuerySet> queries,
                                decoder::DecodeStats* stats = nullptr) const;

  /// Full-grid render without a graph, unclamped.
  [[nodiscard]] Tensor forward(const Tensor& lr, int h_out, int w_out,
                               decoder::DecodeStats* stats = nullptr) const;

  /// forward() at output_size(h, w, scale).
  [[nodiscard]] Tensor upscale(const Tensor& lr, double scale) const;

 private:
  ModelConfig cfg_;
  std::uint64_t seed_ = 0;
  ParameterStore params_;
  std::shared_ptr<const saliency::Detector> detector_;
};

/// Name of the latent MLP's final layer, which emits the modulation vectors.
[[nodiscard]] std::string modulation_layer_name(const decoder::DecoderConfig& cfg);

}  // namespace sgsasr
