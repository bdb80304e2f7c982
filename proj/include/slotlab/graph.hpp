#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "slotlab/gemm.hpp"
#include "slotlab/tensor.hpp"

namespace slotlab {

// A named trainable tensor with a persistent gradient buffer.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

template <typename T>
using ParamRefs = std::vector<Parameter<T>*>;

template <typename T>
class Graph;

// Handle to a node in a Graph. Cheap to copy.
template <typename T>
struct Var {
  Graph<T>* g = nullptr;
  int32_t id = -1;

  const Tensor<T>& val() const { return g->value(id); }
  bool defined() const { return g != nullptr; }
};

// Define-by-run reverse-mode tape. Nodes are appended in execution order;
// backward() walks them in reverse. Construct with grad_enabled=false for
// inference (no closures or grad bookkeeping are kept).
template <typename T>
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Tensor<T> value) { return make(std::move(value), false); }

  // Leaf bound to a parameter: the node's grad buffer aliases p.grad, so
  // backward() accumulates straight into the parameter.
  Var<T> param(Parameter<T>& p) {
    bool ng = grad_enabled_ && p.trainable;
    Var<T> v = make(p.value, ng);
    if (ng) nodes_[v.id].grad = p.grad;
    return v;
  }

  const Tensor<T>& value(int32_t id) const { return nodes_[id].value; }

  Tensor<T>& grad(int32_t id) {
    Node& n = nodes_[id];
    if (!n.grad.defined()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  // Gradient of a node after backward(); zeros if it never received one.
  const Tensor<T>& grad_of(Var<T> v) { return grad(v.id); }

  bool needs_grad(int32_t id) const { return nodes_[id].needs_grad; }

  void accumulate(int32_t id, const T* src, int64_t count) {
    if (!nodes_[id].needs_grad) return;
    Tensor<T>& g = grad(id);
    SLOTLAB_REQUIRE(g.numel() == count, "gradient size mismatch");
    T* dst = g.data();
    for (int64_t i = 0; i < count; ++i) dst[i] += src[i];
  }

  void backward(Var<T> loss) {
    SLOTLAB_REQUIRE(grad_enabled_, "backward on a no-grad graph");
    SLOTLAB_REQUIRE(loss.val().numel() == 1, "backward expects a scalar loss");
    grad(loss.id).fill(T(1));
    for (int32_t id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || !n.grad.defined() || !n.backprop) continue;
      n.backprop();
    }
  }

  Var<T> make(Tensor<T> value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = grad_enabled_ && needs_grad;
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int32_t>(nodes_.size() - 1)};
  }

  void set_backprop(int32_t id, std::function<void()> fn) {
    if (nodes_[id].needs_grad) nodes_[id].backprop = std::move(fn);
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void()> backprop;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;
};

}  // namespace slotlab
