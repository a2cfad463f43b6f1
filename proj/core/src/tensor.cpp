#include "sgsasr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "sgsasr/errors.hpp"

namespace sgsasr {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), values_(shape.numel(), fill) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw InputError("negative tensor extent " + shape.str());
  }
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), values_(std::move(values)) {
  if (values_.size() != shape.numel()) {
    throw InputError("tensor value count " + std::to_string(values_.size()) +
                     " does not match shape " + shape.str());
  }
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Tensor Tensor::reshaped(Shape s) const {
  if (s.numel() != values_.size()) {
    throw InputError("cannot reshape " + shape_.str() + " to " + s.str());
  }
  return Tensor(s, values_);
}

Tensor Tensor::item(int i) const {
  if (i < 0 || i >= shape_.n) throw InputError("batch index out of range");
  const std::size_t stride = static_cast<std::size_t>(shape_.c) * shape_.plane();
  Tensor out({1, shape_.c, shape_.h, shape_.w});
  std::memcpy(out.data(), values_.data() + stride * i, stride * sizeof(double));
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::min() const {
  if (values_.empty()) return std::numeric_limits<double>::quiet_NaN();
  return *std::min_element(values_.begin(), values_.end());
}

double Tensor::max() const {
  if (values_.empty()) return std::numeric_limits<double>::quiet_NaN();
  return *std::max_element(values_.begin(), values_.end());
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw InputError("stack of zero tensors");
  Shape s = items.front().shape();
  for (const auto& t : items) {
    if (t.n() != 1 || t.c() != s.c || t.h() != s.h || t.w() != s.w) {
      throw InputError("stack requires n == 1 tensors of identical shape");
    }
  }
  s.n = static_cast<int>(items.size());
  Tensor out(s);
  const std::size_t stride = items.front().size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::memcpy(out.data() + i * stride, items[i].data(), stride * sizeof(double));
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw InputError("shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace sgsasr
