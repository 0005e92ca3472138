#pragma once

#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gcgan/nn/tensor.hpp"

namespace gcgan::nn {

/// Thread-local switch controlling whether operations record a tape.
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
};

/// Scoped override of GradMode.
class GradModeGuard {
 public:
  explicit GradModeGuard(bool on) : previous_(GradMode::enabled()) { GradMode::set(on); }
  ~GradModeGuard() { GradMode::set(previous_); }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

struct NoGradGuard : GradModeGuard {
  NoGradGuard() : GradModeGuard(false) {}
};

template <typename T>
class Var;

template <typename T>
struct Node {
  // Receives the node inputs, the node output and the incoming gradient; returns one
  // gradient per input (an undefined Var where no gradient is needed). Backward
  // functions are written in terms of Var operations so the tape can be differentiated
  // again.
  using BackwardFn = std::function<std::vector<Var<T>>(const std::vector<Var<T>>& inputs,
                                                       const Var<T>& output,
                                                       const Var<T>& grad_output)>;

  Tensor<T> value;
  std::vector<Var<T>> inputs;
  BackwardFn backward;
  bool requires_grad = false;
  const char* op = "leaf";
};

/// Handle to a tape node. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;

  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var make(Tensor<T> value, std::vector<Var> inputs, typename Node<T>::BackwardFn fn,
                  const char* op) {
    Var out(std::move(value));
    out.node_->op = op;
    if (!GradMode::enabled()) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->inputs = std::move(inputs);
    out.node_->backward = std::move(fn);
    return out;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  /// Direct access for optimizers and loaders; bypasses the tape.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }
  std::size_t size() const { return node_->value.size(); }
  T item() const { return node_->value.item(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Node<T>* node() const { return node_.get(); }
  const char* op() const { return node_->op; }

  /// Same value, cut from the tape.
  Var detach() const { return Var(node_->value); }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> ones_like(const Var<T>& a);

/// Reverse-mode gradients of a scalar `output` with respect to `wrt`. With
/// `create_graph` the returned gradients are themselves on the tape.
template <typename T>
std::vector<Var<T>> grad(const Var<T>& output, std::span<const Var<T>> wrt, bool create_graph = false) {
  if (output.size() != 1) throw ShapeError("grad() needs a scalar output, got " + to_string(output.shape()));
  std::vector<Var<T>> result(wrt.size());
  if (!output.requires_grad()) {
    for (std::size_t i = 0; i < wrt.size(); ++i) result[i] = Var<T>(Tensor<T>(wrt[i].shape()));
    return result;
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<Var<T>> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Var<T>, std::size_t>> stack{{output, 0}};
  seen.insert(output.node());
  while (!stack.empty()) {
    auto& [var, next] = stack.back();
    Node<T>* node = var.node();
    if (next < node->inputs.size()) {
      const Var<T>& child = node->inputs[next++];
      if (child.requires_grad() && seen.insert(child.node()).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(var);
      stack.pop_back();
    }
  }

  std::unordered_set<Node<T>*> wanted;
  for (const auto& w : wrt) wanted.insert(w.node());
  std::unordered_map<Node<T>*, Var<T>> grads;
  {
    GradModeGuard mode(create_graph);
    grads[output.node()] = ones_like(output);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = it->node();
    auto found = grads.find(node);
    if (found == grads.end() || !node->backward) continue;
    Var<T> g = found->second;
    GradModeGuard mode(create_graph);
    std::vector<Var<T>> in_grads = node->backward(node->inputs, *it, g);
    if (!create_graph && !wanted.count(node)) grads.erase(node);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      if (i >= in_grads.size() || !in_grads[i].defined() || !node->inputs[i].requires_grad()) continue;
      Node<T>* child = node->inputs[i].node();
      auto slot = grads.find(child);
      if (slot == grads.end()) {
        grads.emplace(child, in_grads[i]);
      } else {
        slot->second = add(slot->second, in_grads[i]);
      }
    }
  }
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    auto found = grads.find(wrt[i].node());
    if (found != grads.end()) {
      result[i] = create_graph ? found->second : found->second.detach();
    } else {
      result[i] = Var<T>(Tensor<T>(wrt[i].shape()));
    }
  }
  return result;
}

template <typename T>
std::vector<Var<T>> grad(const Var<T>& output, const std::vector<Var<T>>& wrt, bool create_graph = false) {
  return grad(output, std::span<const Var<T>>(wrt), create_graph);
}

}  // namespace gcgan::nn
