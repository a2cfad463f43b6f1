#pragma once

#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>

#include "sgsasr/autograd.hpp"
#include "sgsasr/model.hpp"
#include "sgsasr/rng.hpp"
#include "sgsasr/tensor.hpp"

namespace sgsasr::testing {

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline ag::Var random_var(Shape s, Rng& rng, bool requires_grad = false, double lo = -1.0, double hi = 1.0) {
  return ag::Var(random_tensor(s, rng, lo, hi), requires_grad);
}

inline bool bytes_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

inline double rel_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

/// Smallest network used by gradient and plumbing tests: width 8, one block per stage.
inline ModelConfig toy_config(int width = 8, int out_dim = 16) {
  ModelConfig cfg = ModelConfig::toy(width, out_dim);
  cfg.decoder.latent_hidden = 16;
  return cfg;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sgsasr_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Central difference of `loss` w.r.t. element `i` of `param`, restoring the value afterwards.
inline double central_difference(ag::Var& param, std::size_t i, double step, const std::function<double()>& loss) {
  double& v = param.mutable_value()[i];
  const double saved = v;
  v = saved + step;
  const double up = loss();
  v = saved - step;
  const double down = loss();
  v = saved;
  return (up - down) / (2.0 * step);
}

}  // namespace sgsasr::testing
