#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sgsasr/config.hpp"
#include "sgsasr/decoder.hpp"
#include "sgsasr/rng.hpp"
#include "sgsasr/tensor.hpp"

namespace sgsasr::data {

/// Parameters of the procedural spacecraft scenes.
struct SynthSpec {
  int height = 128;
  int width = 128;
  int channels = 1;
  int bodies = 1;
  int panels = 1;    // panel pairs, mounted symmetrically on a body
  int antennas = 2;  // thin line segments
  double body_min = 0.55;
  double body_max = 0.95;
  double panel_min = 0.35;
  double panel_max = 0.8;
  double antenna_min = 0.6;
  double antenna_max = 1.0;
  double noise_sigma = 0.0;
  double background = 0.0;
  int supersample = 4;  // coverage samples per pixel along each axis

  void validate() const;
  static SynthSpec from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

/// Black canvas with anti-aliased bright rectangles and segments; values in [0, 1].
[[nodiscard]] Image synth_spacecraft_image(const SynthSpec& spec, Rng& rng);

/// Cubic convolution kernel with parameter `a`.
[[nodiscard]] double cubic_kernel(double x, double a = -0.5);

/// Separable cubic resampling (a = -0.5) with clamped edges. When shrinking,
/// the kernel is widened by the scale factor so the result is antialiased.
[[nodiscard]] Image bicubic_resize(const Image& image, int h, int w);

/// bicubic_resize clamped to [0, 1]: the degradation used for LR inputs.
[[nodiscard]] Image degrade(const Image& hr, int h, int w);

struct TrainingSample {
  Image lr;                   // (1, C, p, p)
  decoder::QuerySet queries;  // pixel centres of the HR crop
  Tensor targets;             // (1, C, 1, Q)
  std::vector<int> pixel_indices;  // flattened HR-crop index of each query
  double scale = 1.0;
  int crop_size = 0;
  int crop_y = 0;
  int crop_x = 0;
};

/// Draws s ~ U(s_min, s_max), crops round(p * s) square from `hr`, degrades it
/// to p x p and samples `query_count` distinct HR pixels (p * p when negative).
[[nodiscard]] TrainingSample make_training_sample(const Image& hr, double s_min, double s_max, int p,
                                                  Rng& rng, int query_count = -1);

/// PNG files of a directory in lexicographic order, decoded on access.
class ImageFolder {
 public:
  explicit ImageFolder(const std::filesystem::path& dir, const std::string& extension = ".png");

  [[nodiscard]] std::size_t size() const { return files_.size(); }
  [[nodiscard]] const std::filesystem::path& path(std::size_t i) const { return files_.at(i); }
  [[nodiscard]] const std::vector<std::filesystem::path>& paths() const { return files_; }
  [[nodiscard]] Image load(std::size_t i) const;
  [[nodiscard]] std::vector<Image> load_all() const;

 private:
  std::vector<std::filesystem::path> files_;
};

[[nodiscard]] ImageFolder load_image_folder(const std::filesystem::path& dir,
                                            const std::string& extension = ".png");

/// Converts to the requested channel count (RGB -> gray by channel mean, gray -> RGB by copy).
[[nodiscard]] Image to_channels(const Image& image, int channels);

}  // namespace sgsasr::data
