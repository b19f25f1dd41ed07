#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "deepglioma/core/array.hpp"

namespace deepglioma::ad {

/// A named trainable tensor. Modules own their parameters; the tape only
/// refers to them for the duration of one forward/backward pass.
struct Parameter {
  std::string name;
  Array value;

  Parameter() = default;
  Parameter(std::string n, Array v) : name(std::move(n)), value(std::move(v)) {}
};

class Tape;

/// Handle to a node recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Array& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of primitive ops for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, which is already a topological
/// order; the backward sweep walks them once in reverse.
class Tape {
 public:
  /// Receives the gradient flowing into the node and accumulates into parents.
  using Backward = std::function<void(Tape&, const Array& grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Array value) {
    return push("constant", std::move(value), false, nullptr);
  }

  /// Leaf for a parameter. Repeated calls for the same parameter return the
  /// same node so gradients from shared uses are summed.
  Var param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    Var v = push("param:" + p.name, p.value, true, nullptr);
    param_nodes_.emplace(&p, v.id());
    return v;
  }

  Var record(std::string_view op, Array value, std::initializer_list<Var> parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || nodes_[p.id()].requires_grad;
    return push(std::string(op), std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  Var record(std::string_view op, Array value, std::span<const Var> parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || nodes_[p.id()].requires_grad;
    return push(std::string(op), std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  const Array& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Adds `g` into the gradient slot of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Array& g) {
    if (!nodes_[id].requires_grad) return;
    grad_slot(id) += g;
  }

  /// Mutable gradient slot, allocated on first use. Only valid for nodes that
  /// require gradients.
  Array& grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size()) {
      n.grad = Array::zeros_like(n.value);
    }
    return n.grad;
  }

  void backward(Var loss) {
    if (loss.value().size() != 1) {
      throw std::invalid_argument("Tape::backward: loss must be a scalar, got shape " +
                                  shape_string(loss.shape()));
    }
    for (Node& n : nodes_) n.grad = Array();
    Node& root = nodes_[loss.id()];
    if (!root.requires_grad) return;
    root.grad = Array(root.value.shape(), 1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      // The closure may accumulate into earlier nodes only, so `n.grad`
      // stays valid while it runs.
      n.backward(*this, n.grad);
    }
  }

  /// dLoss/dParam for each parameter. Parameters that the loss does not
  /// depend on get zero gradients.
  std::vector<Array> gradients(Var loss, std::span<Parameter* const> params) {
    std::vector<std::size_t> ids;
    ids.reserve(params.size());
    for (Parameter* p : params) {
      auto it = param_nodes_.find(p);
      if (it == param_nodes_.end()) {
        throw std::invalid_argument("Tape::gradients: parameter '" + p->name + "' is not on the tape");
      }
      ids.push_back(it->second);
    }
    backward(loss);
    std::vector<Array> out;
    out.reserve(ids.size());
    for (std::size_t id : ids) {
      const Node& n = nodes_[id];
      out.push_back(n.grad.empty() ? Array::zeros_like(n.value) : n.grad);
    }
    return out;
  }

  std::vector<Array> gradients(Var loss, const std::vector<Parameter*>& params) {
    return gradients(loss, std::span<Parameter* const>(params.data(), params.size()));
  }

 private:
  struct Node {
    std::string op;
    Array value;
    Array grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(std::string op, Array value, bool requires_grad, Backward backward) {
    if (!value.all_finite()) {
      throw std::domain_error("Tape: op '" + op + "' produced a non-finite value");
    }
    nodes_.push_back(Node{std::move(op), std::move(value), Array(), requires_grad, std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

inline const Array& Var::value() const { return tape_->value(id_); }

/// Free-function form of Tape::gradients.
inline std::vector<Array> reverse_grad(Var loss, const std::vector<Parameter*>& params) {
  return loss.tape().gradients(loss, params);
}

}  // namespace deepglioma::ad
