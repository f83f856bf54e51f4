#include "timbre/graph.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <unordered_set>

namespace timbre {

namespace {

#ifndef NDEBUG
void debug_check_finite(const Node& node) {
  for (float v : node.value.v) assert(std::isfinite(v));
}
#else
void debug_check_finite(const Node&) {}
#endif

NodeP make_op(Tensor4 value, std::vector<NodeP> parents,
              std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->backward_fn = std::move(backward_fn);
  debug_check_finite(*n);
  return n;
}

Tensor4 scalar_tensor(float v) {
  Tensor4 t(1, 1, 1, 1);
  t.v[0] = v;
  return t;
}

}  // namespace

NodeP make_leaf(Tensor4 value, bool requires_grad, std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  return n;
}

NodeP conv2d(const NodeP& x, const NodeP& w, const NodeP& b,
             kernels::ConvSpec spec) {
  Tensor4 y = kernels::conv2d_forward<float>(x->value, w->value,
                                             b ? &b->value : nullptr, spec);
  std::vector<NodeP> parents = b ? std::vector<NodeP>{x, w, b}
                                 : std::vector<NodeP>{x, w};
  return make_op(std::move(y), std::move(parents), [spec](Node& self) {
    const NodeP& x = self.parents[0];
    const NodeP& w = self.parents[1];
    NodeP b = self.parents.size() > 2 ? self.parents[2] : nullptr;
    x->ensure_grad();
    w->ensure_grad();
    if (b) b->ensure_grad();
    kernels::conv2d_backward<float>(x->value, w->value, self.grad, spec,
                                    &x->grad, &w->grad, b ? &b->grad : nullptr);
  });
}

NodeP conv_transpose2d(const NodeP& x, const NodeP& w, const NodeP& b,
                       kernels::ConvTSpec spec) {
  Tensor4 y = kernels::convt_forward<float>(x->value, w->value,
                                            b ? &b->value : nullptr, spec);
  std::vector<NodeP> parents = b ? std::vector<NodeP>{x, w, b}
                                 : std::vector<NodeP>{x, w};
  return make_op(std::move(y), std::move(parents), [spec](Node& self) {
    const NodeP& x = self.parents[0];
    const NodeP& w = self.parents[1];
    NodeP b = self.parents.size() > 2 ? self.parents[2] : nullptr;
    x->ensure_grad();
    w->ensure_grad();
    if (b) b->ensure_grad();
    kernels::convt_backward<float>(x->value, w->value, self.grad, spec,
                                   &x->grad, &w->grad, b ? &b->grad : nullptr);
  });
}

NodeP instance_norm(const NodeP& x, float eps) {
  auto invstd = std::make_shared<std::vector<float>>();
  Tensor4 y = kernels::instance_norm_forward<float>(x->value, eps, invstd.get());
  return make_op(std::move(y), {x}, [invstd](Node& self) {
    const NodeP& x = self.parents[0];
    x->ensure_grad();
    kernels::instance_norm_backward<float>(self.value, *invstd, self.grad,
                                           &x->grad);
  });
}

NodeP leaky_relu(const NodeP& x, float slope) {
  Tensor4 y = kernels::leaky_relu_forward<float>(x->value, slope);
  return make_op(std::move(y), {x}, [slope](Node& self) {
    const NodeP& x = self.parents[0];
    x->ensure_grad();
    kernels::leaky_relu_backward<float>(x->value, self.grad, slope, &x->grad);
  });
}

NodeP reflection_pad2d(const NodeP& x, int pad) {
  Tensor4 y = kernels::reflection_pad_forward<float>(x->value, pad);
  return make_op(std::move(y), {x}, [pad](Node& self) {
    const NodeP& x = self.parents[0];
    x->ensure_grad();
    kernels::reflection_pad_backward<float>(self.grad, pad, &x->grad);
  });
}

NodeP add(const NodeP& a, const NodeP& b) {
  if (!a->value.same_shape(b->value))
    throw ShapeError("add: shape mismatch " + a->value.shape_str() + " vs " +
                     b->value.shape_str());
  Tensor4 y = a->value;
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] += b->value.v[i];
  return make_op(std::move(y), {a, b}, [](Node& self) {
    for (const auto& p : self.parents) {
      p->ensure_grad();
      for (size_t i = 0; i < self.grad.v.size(); ++i)
        p->grad.v[i] += self.grad.v[i];
    }
  });
}

NodeP add_noise(const NodeP& x, Tensor4 noise) {
  if (!x->value.same_shape(noise))
    throw ShapeError("add_noise: noise shape mismatch");
  Tensor4 y = x->value;
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] += noise.v[i];
  return make_op(std::move(y), {x}, [](Node& self) {
    const NodeP& x = self.parents[0];
    x->ensure_grad();
    for (size_t i = 0; i < self.grad.v.size(); ++i)
      x->grad.v[i] += self.grad.v[i];
  });
}

NodeP tanh01(const NodeP& x) {
  Tensor4 y = x->value;
  for (float& v : y.v) v = 0.5f * (std::tanh(v) + 1.0f);
  return make_op(std::move(y), {x}, [](Node& self) {
    const NodeP& x = self.parents[0];
    x->ensure_grad();
    for (size_t i = 0; i < self.grad.v.size(); ++i) {
      const float t = 2.0f * self.value.v[i] - 1.0f;  // tanh(x)
      x->grad.v[i] += self.grad.v[i] * 0.5f * (1.0f - t * t);
    }
  });
}

NodeP detach(const NodeP& x) { return make_leaf(x->value, false); }

NodeP mse_to_const(const NodeP& x, float label) {
  double acc = 0.0;
  for (float v : x->value.v) {
    const double d = static_cast<double>(v) - label;
    acc += d * d;
  }
  const float mean = static_cast<float>(acc / x->value.v.size());
  return make_op(scalar_tensor(mean), {x}, [label](Node& self) {
    const NodeP& x = self.parents[0];
    x->ensure_grad();
    const float g = self.grad.v[0] * 2.0f / x->value.v.size();
    for (size_t i = 0; i < x->value.v.size(); ++i)
      x->grad.v[i] += g * (x->value.v[i] - label);
  });
}

NodeP l1_mean(const NodeP& a, const NodeP& b) {
  if (!a->value.same_shape(b->value))
    throw ShapeError("l1_mean: shape mismatch " + a->value.shape_str() +
                     " vs " + b->value.shape_str());
  double acc = 0.0;
  for (size_t i = 0; i < a->value.v.size(); ++i)
    acc += std::abs(static_cast<double>(a->value.v[i]) - b->value.v[i]);
  const float mean = static_cast<float>(acc / a->value.v.size());
  return make_op(scalar_tensor(mean), {a, b}, [](Node& self) {
    const NodeP& a = self.parents[0];
    const NodeP& b = self.parents[1];
    a->ensure_grad();
    b->ensure_grad();
    const float g = self.grad.v[0] / a->value.v.size();
    for (size_t i = 0; i < a->value.v.size(); ++i) {
      const float d = a->value.v[i] - b->value.v[i];
      const float s = d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
      a->grad.v[i] += g * s;
      b->grad.v[i] -= g * s;
    }
  });
}

NodeP kl_from_mean(const NodeP& mu) {
  double acc = 0.0;
  for (float v : mu->value.v) acc += 0.5 * static_cast<double>(v) * v;
  const float val = static_cast<float>(acc / mu->value.n);
  return make_op(scalar_tensor(val), {mu}, [](Node& self) {
    const NodeP& mu = self.parents[0];
    mu->ensure_grad();
    const float g = self.grad.v[0] / mu->value.n;
    for (size_t i = 0; i < mu->value.v.size(); ++i)
      mu->grad.v[i] += g * mu->value.v[i];
  });
}

NodeP weighted_sum(const std::vector<std::pair<float, NodeP>>& terms) {
  double acc = 0.0;
  std::vector<NodeP> parents;
  std::vector<float> weights;
  for (const auto& [w, node] : terms) {
    if (node->value.size() != 1)
      throw ShapeError("weighted_sum: all terms must be scalars");
    acc += static_cast<double>(w) * node->scalar();
    parents.push_back(node);
    weights.push_back(w);
  }
  return make_op(scalar_tensor(static_cast<float>(acc)), std::move(parents),
                 [weights](Node& self) {
                   for (size_t i = 0; i < self.parents.size(); ++i) {
                     self.parents[i]->ensure_grad();
                     self.parents[i]->grad.v[0] +=
                         weights[i] * self.grad.v[0];
                   }
                 });
}

void backward(const NodeP& root, const std::vector<NodeP>& stop_at) {
  if (root->value.size() != 1)
    throw ShapeError("backward: root must be a scalar node");

  std::unordered_set<const Node*> stops;
  for (const auto& s : stop_at) stops.insert(s.get());

  // iterative post-order DFS; reverse gives a valid topological order
  std::vector<Node*> order;
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    const bool stopped = stops.count(node) > 0;
    if (stopped || idx >= node->parents.size()) {
      order.push_back(node);
      stack.pop_back();
      continue;
    }
    Node* parent = node->parents[idx++].get();
    if (visited.insert(parent).second) stack.push_back({parent, 0});
  }

  root->ensure_grad();
  root->grad.v[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.v.empty() && !stops.count(node))
      node->backward_fn(*node);
  }
}

}  // namespace timbre
