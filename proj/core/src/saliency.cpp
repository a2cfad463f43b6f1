#include "sgsasr/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <opencv2/dnn.hpp>
#include <opencv2/imgproc.hpp>

#include "sgsasr/errors.hpp"
#include "sgsasr/ops.hpp"

namespace sgsasr::saliency {

BackendConfig BackendConfig::from_config(const Config& cfg) {
  BackendConfig out;
  const std::string backend = cfg.get_string("saliency.backend", "luminance");
  if (backend == "luminance") {
    out.kind = BackendKind::luminance;
  } else if (backend == "external") {
    out.kind = BackendKind::external;
  } else {
    throw ConfigError("saliency.backend must be 'luminance' or 'external', got '" + backend + "'");
  }
  out.k = cfg.get_double("saliency.k", 0.5);
  if (out.k < 0.0) throw ConfigError("saliency.k must be >= 0");
  out.model_path = cfg.get_string("saliency.model_path", "");
  return out;
}

void BackendConfig::to_config(Config& cfg) const {
  cfg.set("saliency.backend", std::string(kind == BackendKind::luminance ? "luminance" : "external"));
  cfg.set("saliency.k", k);
  cfg.set("saliency.model_path", model_path);
}

Tensor luminance_saliency(const Image& image, double k) {
  if (k < 0.0) throw InputError("luminance_saliency: k must be >= 0");
  if (image.n() != 1) throw InputError("luminance_saliency expects a single image");
  const int c = image.c();
  const std::size_t plane = image.shape().plane();
  std::vector<double> gray(plane, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    const double* p = image.plane(0, ch);
    for (std::size_t i = 0; i < plane; ++i) gray[i] += p[i];
  }
  for (auto& g : gray) g /= c;

  double mean = 0.0;
  for (double g : gray) mean += g;
  mean /= static_cast<double>(plane);
  double var = 0.0;
  for (double g : gray) var += (g - mean) * (g - mean);
  var /= static_cast<double>(plane);
  const double sd = std::sqrt(var);

  Tensor out({1, 1, image.h(), image.w()});
  // Rounding in the mean of a constant image can leave a residual of a few ulps.
  if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) return out;
  const double tau = mean + k * sd;
  for (std::size_t i = 0; i < plane; ++i) out[i] = gray[i] > tau ? 1.0 : 0.0;
  return out;
}

LuminanceDetector::LuminanceDetector(double k) : k_(k) {
  if (k < 0.0) throw ConfigError("luminance detector: k must be >= 0");
}

Tensor LuminanceDetector::detect(const Tensor& images) const {
  Tensor out({images.n(), 1, images.h(), images.w()});
  for (int i = 0; i < images.n(); ++i) {
    const Tensor m = luminance_saliency(images.item(i), k_);
    std::copy(m.values().begin(), m.values().end(), out.plane(i, 0));
  }
  return out;
}

struct ExternalDetector::Impl {
  mutable std::mutex mutex;
  mutable cv::dnn::Net net;
};

ExternalDetector::ExternalDetector(const std::string& model_path) : impl_(std::make_unique<Impl>()) {
  if (model_path.empty()) throw ConfigError("saliency.model_path is empty for the external backend");
  if (!std::filesystem::is_regular_file(model_path)) {
    throw ConfigError("saliency model file not found: " + model_path);
  }
  try {
    impl_->net = cv::dnn::readNetFromONNX(model_path);
  } catch (const cv::Exception& e) {
    throw ConfigError("cannot load saliency model " + model_path + ": " + e.what());
  }
  if (impl_->net.empty()) throw ConfigError("saliency model is empty: " + model_path);
  impl_->net.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
  impl_->net.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
}

ExternalDetector::~ExternalDetector() = default;

Tensor ExternalDetector::detect(const Tensor& images) const {
  Tensor out({images.n(), 1, images.h(), images.w()});
  const int h = images.h();
  const int w = images.w();
  std::lock_guard lock(impl_->mutex);
  for (int i = 0; i < images.n(); ++i) {
    const int dims[] = {1, images.c(), h, w};
    cv::Mat blob(4, dims, CV_32F);
    auto* dst = blob.ptr<float>();
    const double* src = images.plane(i, 0);
    for (std::size_t j = 0; j < static_cast<std::size_t>(images.c()) * h * w; ++j) {
      dst[j] = static_cast<float>(src[j]);
    }
    cv::Mat result;
    try {
      impl_->net.setInput(blob);
      result = impl_->net.forward();
    } catch (const cv::Exception& e) {
      throw InputError(std::string("external saliency model rejected the input: ") + e.what());
    }
    if (result.dims != 4 || result.size[0] != 1 || result.size[1] != 1) {
      throw ConfigError("external saliency model must output a (1, 1, H, W) map");
    }
    cv::Mat map(result.size[2], result.size[3], CV_32F, result.ptr<float>());
    cv::Mat resized;
    if (map.rows != h || map.cols != w) {
      cv::resize(map, resized, cv::Size(w, h), 0, 0, cv::INTER_LINEAR);
    } else {
      resized = map;
    }
    double* o = out.plane(i, 0);
    for (int y = 0; y < h; ++y) {
      const float* row = resized.ptr<float>(y);
      for (int x = 0; x < w; ++x) {
        const double v = row[x];
        o[y * w + x] = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
      }
    }
  }
  return out;
}

std::unique_ptr<Detector> make_detector(const BackendConfig& cfg) {
  if (cfg.kind == BackendKind::external) return std::make_unique<ExternalDetector>(cfg.model_path);
  return std::make_unique<LuminanceDetector>(cfg.k);
}

Tensor detect_saliency(const Tensor& images, const Detector& detector) {
  if (images.c() != 1 && images.c() != 3) {
    throw InputError("saliency detection supports 1 or 3 channels, got " + std::to_string(images.c()));
  }
  if (images.empty()) throw InputError("saliency detection on an empty image");
  Tensor map = detector.detect(images);
  if (map.shape() != Shape{images.n(), 1, images.h(), images.w()}) {
    throw ConfigError("saliency detector '" + detector.name() + "' returned shape " + map.shape().str());
  }
  return map;
}

void add_pyramid_parameters(ParameterStore& params, const std::vector<int>& widths,
                            std::uint64_t seed) {
  if (widths.empty()) throw ConfigError("saliency pyramid needs at least one level");
  params.add_uniform("saliency.pyramid.conv0.weight", {widths[0], 1, 3, 3}, 9, seed);
  params.add_uniform("saliency.pyramid.conv0.bias", {1, widths[0], 1, 1}, 9, seed);
  for (std::size_t i = 1; i < widths.size(); ++i) {
    const std::string base = "saliency.pyramid.down" + std::to_string(i);
    const int fan_in = widths[i - 1] * 9;
    params.add_uniform(base + ".weight", {widths[i], widths[i - 1], 3, 3}, fan_in, seed);
    params.add_uniform(base + ".bias", {1, widths[i], 1, 1}, fan_in, seed);
  }
}

std::vector<ag::Var> saliency_feature_pyramid(const ag::Var& map, const ParameterStore& params,
                                              const std::vector<int>& widths) {
  const int levels = static_cast<int>(widths.size());
  if (levels < 1) throw InputError("saliency pyramid needs at least one level");
  if (map.shape().c != 1) throw InputError("saliency map must have a single channel");
  const int div = 1 << (levels - 1);
  if (map.shape().h % div != 0 || map.shape().w % div != 0) {
    throw InputError("saliency map " + map.shape().str() + " not divisible by " + std::to_string(div));
  }
  std::vector<ag::Var> out;
  out.reserve(levels);
  out.push_back(ops::conv2d(map, params.get("saliency.pyramid.conv0.weight"),
                            params.get("saliency.pyramid.conv0.bias"), {1, 1, 1}));
  for (int i = 1; i < levels; ++i) {
    const std::string base = "saliency.pyramid.down" + std::to_string(i);
    out.push_back(ops::conv2d(out.back(), params.get(base + ".weight"), params.get(base + ".bias"),
                              {2, 1, 1}));
  }
  return out;
}

}  // namespace sgsasr::saliency
