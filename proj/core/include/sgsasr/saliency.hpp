#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sgsasr/autograd.hpp"
#include "sgsasr/config.hpp"
#include "sgsasr/parameters.hpp"
#include "sgsasr/tensor.hpp"

namespace sgsasr::saliency {

enum class BackendKind { luminance, external };

struct BackendConfig {
  BackendKind kind = BackendKind::luminance;
  double k = 0.5;          // luminance threshold coefficient
  std::string model_path;  // external exchange-format model

  static BackendConfig from_config(const Config& cfg);
  void to_config(Config& cfg) const;

  friend bool operator==(const BackendConfig&, const BackendConfig&) = default;
};

/// Frozen saliency detector. Implementations hold no trainable parameters and
/// return plain tensors, never graph nodes.
class Detector {
 public:
  virtual ~Detector() = default;
  /// (n, c, h, w) image batch -> (n, 1, h, w) map in [0, 1].
  [[nodiscard]] virtual Tensor detect(const Tensor& images) const = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

/// Thresholds channel-mean luminance at mean + k * std of the image.
class LuminanceDetector final : public Detector {
 public:
  explicit LuminanceDetector(double k);
  [[nodiscard]] Tensor detect(const Tensor& images) const override;
  [[nodiscard]] std::string name() const override { return "luminance"; }

 private:
  double k_;
};

/// Runs a single-file ONNX model through OpenCV's DNN module. Inference is
/// serialized per instance.
class ExternalDetector final : public Detector {
 public:
  explicit ExternalDetector(const std::string& model_path);
  ~ExternalDetector() override;
  [[nodiscard]] Tensor detect(const Tensor& images) const override;
  [[nodiscard]] std::string name() const override { return "external"; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

[[nodiscard]] std::unique_ptr<Detector> make_detector(const BackendConfig& cfg);

/// Binary map for a single image (n == 1): 1 where luminance > mean + k * std.
/// A zero-variance image yields all zeros.
[[nodiscard]] Tensor luminance_saliency(const Image& image, double k);

/// Validates the input (c in {1, 3}) and the detector's output contract.
[[nodiscard]] Tensor detect_saliency(const Tensor& images, const Detector& detector);

/// Registers the learnable projection from the saliency map to per-scale features:
/// a 3x3 convolution at full resolution followed by one stride-2 3x3 convolution
/// per further level.
void add_pyramid_parameters(ParameterStore& params, const std::vector<int>& widths,
                            std::uint64_t seed);

/// Per-level feature maps: level i is (n, widths[i], h / 2^i, w / 2^i).
[[nodiscard]] std::vector<ag::Var> saliency_feature_pyramid(const ag::Var& map,
                                                            const ParameterStore& params,
                                                            const std::vector<int>& widths);

}  // namespace sgsasr::saliency
