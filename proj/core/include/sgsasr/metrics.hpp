#pragma once

#include <string>
#include <vector>

#include "sgsasr/tensor.hpp"

namespace sgsasr::metrics {

/// 10 log10(max_val^2 / MSE); +infinity when the images are identical.
[[nodiscard]] double psnr(const Image& a, const Image& b, double max_val = 1.0);

/// Mean local SSIM over valid 11x11 Gaussian windows (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1. Channels are scored separately and averaged.
[[nodiscard]] double ssim(const Image& a, const Image& b);

/// Normalized 11x11 Gaussian window, row-major.
[[nodiscard]] std::vector<double> gaussian_window(int size = 11, double sigma = 1.5);

struct ImageScore {
  std::string name;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<ImageScore> per_image;
  double psnr_db = 0.0;  // mean over finite entries; +inf if none are finite
  double ssim = 0.0;
  int infinite_psnr = 0;

  static MetricReport aggregate(std::vector<ImageScore> scores);

  /// Aligned text table; per-image rows only when requested.
  [[nodiscard]] std::string table(const std::string& title, bool per_image) const;
  /// `key=value` lines, each key prefixed by `prefix`.
  [[nodiscard]] std::string key_values(const std::string& prefix, bool per_image) const;
};

/// Text for a PSNR value, "inf" for the identical-image sentinel.
[[nodiscard]] std::string format_psnr(double db);

}  // namespace sgsasr::metrics
