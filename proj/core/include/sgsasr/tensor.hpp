#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sgsasr {

/// Four-dimensional (batch, channel, height, width) extent.
///
/// Column matrices used by the per-pixel MLPs are stored as (n, features, 1, count),
/// which makes a linear layer exactly a 1x1 convolution.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  [[nodiscard]] std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  [[nodiscard]] std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense row-major NCHW array of doubles with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] int n() const { return shape_.n; }
  [[nodiscard]] int c() const { return shape_.c; }
  [[nodiscard]] int h() const { return shape_.h; }
  [[nodiscard]] int w() const { return shape_.w; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] bool empty() const { return values_.empty(); }

  [[nodiscard]] double* data() { return values_.data(); }
  [[nodiscard]] const double* data() const { return values_.data(); }
  [[nodiscard]] std::span<double> values() { return values_; }
  [[nodiscard]] std::span<const double> values() const { return values_; }
  [[nodiscard]] std::vector<double>& storage() { return values_; }

  [[nodiscard]] std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  double& at(int n, int c, int y, int x) { return values_[index(n, c, y, x)]; }
  [[nodiscard]] double at(int n, int c, int y, int x) const { return values_[index(n, c, y, x)]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Pointer to the contiguous (h*w) plane of one channel of one batch item.
  double* plane(int n, int c) { return values_.data() + index(n, c, 0, 0); }
  [[nodiscard]] const double* plane(int n, int c) const { return values_.data() + index(n, c, 0, 0); }

  void fill(double v);
  /// Reinterpret with the same element count.
  [[nodiscard]] Tensor reshaped(Shape s) const;

  /// Batch item `i` as a standalone tensor with n = 1.
  [[nodiscard]] Tensor item(int i) const;

  [[nodiscard]] bool all_finite() const;
  [[nodiscard]] double min() const;
  [[nodiscard]] double max() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<double> values_;
};

/// An image is a tensor with n == 1 and values nominally in [0, 1].
using Image = Tensor;

/// Stack n == 1 tensors of identical shape along the batch axis.
Tensor stack(std::span<const Tensor> items);

/// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace sgsasr
