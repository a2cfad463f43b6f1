#include "sgsasr/autograd.hpp"

#include <unordered_set>

#include "sgsasr/errors.hpp"

namespace sgsasr::ag {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
  if (grad.empty() && value.size() > 0) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Tensor value, std::vector<Var> parents,
                std::function<void(const Tensor& out_grad)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!g_grad_enabled) return Var(std::move(node));
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return Var(std::move(node));
  node->requires_grad = true;
  node->parents.reserve(parents.size());
  for (auto& p : parents) {
    if (p.defined()) node->parents.push_back(p.ptr());
  }
  node->backward = std::move(backward);
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (root.value().size() != 1) {
    throw InputError("backward() without a seed needs a single-element root, got " +
                     root.shape().str());
  }
  backward(root, Tensor(root.shape(), 1.0));
}

void backward(const Var& root, const Tensor& seed) {
  if (!root.requires_grad()) return;
  if (seed.shape() != root.shape()) throw InputError("seed shape does not match root");

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.contains(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Tensor& g = root.node()->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(node->grad);
  }
  // Interior nodes are single-use; drop their closures and intermediate grads.
  for (Node* node : order) {
    if (node->backward) {
      node->backward = nullptr;
      node->parents.clear();
      node->grad = Tensor();
    }
  }
}

}  // namespace sgsasr::ag
