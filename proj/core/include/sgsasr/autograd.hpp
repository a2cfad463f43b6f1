#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sgsasr/tensor.hpp"

namespace sgsasr::ag {

/// One value in a dynamically recorded computation graph.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  /// Propagates this node's grad into its parents.
  std::function<void(const Tensor& out_grad)> backward;

  Tensor& grad_buffer();
};

/// Shared handle to a graph node. A default-constructed Var is "undefined".
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  [[nodiscard]] bool defined() const { return node_ != nullptr; }
  [[nodiscard]] const Tensor& value() const { return node_->value; }
  [[nodiscard]] Tensor& mutable_value() { return node_->value; }
  [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
  [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  /// Accumulated gradient; an empty tensor if nothing flowed here.
  [[nodiscard]] const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  [[nodiscard]] Node* node() const { return node_.get(); }
  [[nodiscard]] const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

[[nodiscard]] bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. Records `backward` only when grad mode is on and at least
/// one parent requires grad; otherwise the result is a constant leaf.
Var make_result(Tensor value, std::vector<Var> parents,
                std::function<void(const Tensor& out_grad)> backward);

/// Reverse pass from a single-element root (seed 1). Frees the recorded graph.
void backward(const Var& root);
/// Reverse pass with an explicit seed gradient of the root's shape.
void backward(const Var& root, const Tensor& seed);

}  // namespace sgsasr::ag
