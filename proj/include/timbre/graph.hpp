#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "timbre/kernels.hpp"
#include "timbre/tensor.hpp"

// Reverse-mode graph over the fixed operator set. Nodes are created per
// forward pass; parameters are long-lived leaves with requires_grad set.
namespace timbre {

struct Node;
using NodeP = std::shared_ptr<Node>;

struct Node {
  Tensor4 value;
  Tensor4 grad;  // allocated on demand during backward
  bool requires_grad = false;
  std::string name;
  std::vector<NodeP> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.v.empty()) grad = Tensor4(value.n, value.c, value.h, value.w);
  }
  void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), 0.0f); }
  float scalar() const { return value.v.at(0); }
};

NodeP make_leaf(Tensor4 value, bool requires_grad = false,
                std::string name = "");

NodeP conv2d(const NodeP& x, const NodeP& w, const NodeP& b,
             kernels::ConvSpec spec);
NodeP conv_transpose2d(const NodeP& x, const NodeP& w, const NodeP& b,
                       kernels::ConvTSpec spec);
NodeP instance_norm(const NodeP& x, float eps = 1e-5f);
NodeP leaky_relu(const NodeP& x, float slope);
inline NodeP relu(const NodeP& x) { return leaky_relu(x, 0.0f); }
NodeP reflection_pad2d(const NodeP& x, int pad);
NodeP add(const NodeP& a, const NodeP& b);
// z = x + noise; gradient passes straight through (reparameterization)
NodeP add_noise(const NodeP& x, Tensor4 noise);
// maps to (tanh(x) + 1) / 2, i.e. a [0,1] squash
NodeP tanh01(const NodeP& x);
// value copy with the graph cut
NodeP detach(const NodeP& x);

// scalar (1x1x1x1) reducers
NodeP mse_to_const(const NodeP& x, float label);
NodeP l1_mean(const NodeP& a, const NodeP& b);
// 0.5 * sum(mu^2) / batch
NodeP kl_from_mean(const NodeP& mu);
NodeP weighted_sum(const std::vector<std::pair<float, NodeP>>& terms);

// Backpropagate from a scalar root. Traversal stops at `stop_at` nodes:
// no gradient flows through them into their parents.
void backward(const NodeP& root, const std::vector<NodeP>& stop_at = {});

}  // namespace timbre
