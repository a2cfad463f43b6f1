#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sgsasr/autograd.hpp"
#include "sgsasr/tensor.hpp"

/// Differentiable tensor operations.
///
/// Every op adds its analytic floating-point operation count to a thread-local
/// counter: 2 per multiply-accumulate for convolutions and linear layers (bias
/// adds are not counted), 1 per element for elementwise work and activations,
/// and the per-element constants below for composite ops. Data movement
/// (slicing, gathering, padding, shuffling) counts 0.
namespace sgsasr::ops {

using ag::Var;

inline constexpr std::uint64_t kLayerNormFlopsPerElement = 7;
inline constexpr std::uint64_t kFilmFlopsPerElement = 3;
inline constexpr std::uint64_t kWeightedFuseFlopsPerElement = 3;

[[nodiscard]] std::uint64_t flop_count();
void add_flops(std::uint64_t n);

/// Captures the FLOPs executed on this thread during its lifetime.
class FlopScope {
 public:
  FlopScope() : start_(flop_count()) {}
  [[nodiscard]] std::uint64_t elapsed() const { return flop_count() - start_; }

 private:
  std::uint64_t start_;
};

struct Conv2dSpec {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

/// Zero-padded grouped 2-D convolution. `weight` is (Cout, Cin/groups, kh, kw);
/// `bias` may be undefined or hold Cout elements.
Var conv2d(const Var& x, const Var& weight, const Var& bias, Conv2dSpec spec = {});

/// Linear layer over column matrices (n, in, 1, count) -> (n, out, 1, count).
/// Every output column depends on its input column only, with a fixed
/// accumulation order, so results do not depend on the number of columns.
Var linear(const Var& x, const Var& weight, const Var& bias);

/// Normalizes over channels at each spatial location, then applies per-channel affine.
Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);

/// Splits channels into halves and multiplies them elementwise.
Var simple_gate(const Var& x);

/// Spatial mean per channel: (n, c, h, w) -> (n, c, 1, 1).
Var global_avg_pool(const Var& x);

/// x * s where s is (n, c, 1, 1), broadcast over space.
Var mul_channel_broadcast(const Var& x, const Var& s);

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

/// w * x where w holds either one element or one element per channel of x.
Var scale(const Var& x, const Var& w);

/// w1 * a + w2 * b with scalar or per-channel weights.
Var weighted_sum(const Var& a, const Var& w1, const Var& b, const Var& w2);

/// (n, c*r*r, h, w) -> (n, c, h*r, w*r).
Var pixel_shuffle(const Var& x, int factor);

Var concat_channels(std::span<const Var> parts);
Var slice_channels(const Var& x, int start, int count);

Var relu(const Var& x);

/// (1 + alpha) * h + beta, elementwise.
Var film(const Var& h, const Var& alpha, const Var& beta);

/// Selects columns of the flattened spatial plane per batch item.
/// `indices` has n * count entries; result is (n, c, 1, count).
Var gather_columns(const Var& x, std::span<const int> indices, int count);

/// Concatenates each location's 3x3 zero-padded neighbourhood: (n, c, h, w) -> (n, 9c, h, w).
Var unfold3x3(const Var& x);

/// Multiplies column j of batch item i by weights(i, 0, 0, j).
Var scale_columns(const Var& x, const Tensor& weights);

/// Same elements under a new shape.
Var reshape(const Var& x, Shape shape);

/// Keeps the top-left (h, w) window.
Var crop(const Var& x, int h, int w);

/// Mean absolute difference over all elements.
Var l1_loss(const Var& pred, const Tensor& target);

/// Sum of x * r for a constant r of the same shape.
Var dot_constant(const Var& x, const Tensor& r);

/// Reflect-pads bottom/right up to (h, w). Non-differentiable; for input images.
Tensor pad_reflect(const Tensor& x, int h, int w);

}  // namespace sgsasr::ops
