// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ddr/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ddr {

struct NodeId {
  std::uint32_t index = std::numeric_limits<std::uint32_t>::max();
  bool valid() const noexcept { return index != std::numeric_limits<std::uint32_t>::max(); }
  friend bool operator==(NodeId, NodeId) = default;
};

enum class OpKind : std::uint8_t {
  leaf,
  matmul,    // a(n×k) · b(k×m)
  add,       // same shape
  sub,       // same shape
  mul,       // elementwise, same shape
  add_row,   // a(n×m) + b(1×m) broadcast over rows
  affine,    // scale·a + shift
  glu,       // a(n×2h) → a[:, :h] ⊙ σ(a[:, h:])
  relu,
  neg_relu,  // max(−a, 0)
  sigmoid,
  softplus,  // ln(1 + e^a)
  abs,
  sum,       // all entries → 1×1
  mean,      // all entries → 1×1
};

std::string_view to_string(OpKind kind);

// Named, non-owning bindings for the leaves of a tape. The bound tensors must
// outlive the forward/backward pair that uses them.
class Feed {
 public:
  Feed& bind(std::string name, const Tensor2& value) {
    slots_[std::move(name)] = &value;
    return *this;
  }
  const Tensor2* find(const std::string& name) const {
    auto it = slots_.find(name);
    return it == slots_.end() ? nullptr : it->second;
  }

 private:
  std::unordered_map<std::string, const Tensor2*> slots_;
};

using GradientMap = std::map<std::string, Tensor2>;

// Static reverse-mode differentiation graph. Nodes are appended in
// topological order while the graph is declared; forward() evaluates every
// node in that order and caches the values, backward() walks the exact
// reverse order. Leaves are bound by name at forward time, and a gradient is
// returned for every leaf whose bound tensor has requires_grad set.
class Tape {
 public:
  static constexpr std::size_t any = 0;

  // Declares a named leaf. A nonzero rows/cols pins that dimension.
  NodeId leaf(std::string name, std::size_t rows = any, std::size_t cols = any);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId add_row(NodeId a, NodeId row);
  NodeId affine(NodeId a, double scale, double shift);
  NodeId glu(NodeId a);
  NodeId relu(NodeId a);
  NodeId neg_relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId softplus(NodeId a);
  NodeId abs(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);

  // Attaches a human-readable label used in error messages.
  void label(NodeId node, std::string text);
  void set_output(NodeId node);
  NodeId output() const noexcept { return output_; }

  const Tensor2& forward(const Feed& feed);
  GradientMap backward(const Tensor2& seed);

  bool evaluated() const noexcept { return evaluated_; }
  const Tensor2& value(NodeId node) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Sign pattern of the arguments of every kinked primitive (relu, neg_relu,
  // abs) in the last forward pass. Two evaluations with equal patterns lie on
  // the same smooth piece of the function.
  std::vector<std::uint8_t> kink_pattern() const;

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    NodeId a;
    NodeId b;
    double scale = 1.0;
    double shift = 0.0;
    std::string name;  // leaf name or optional label
    std::size_t rows = any;
    std::size_t cols = any;
  };

  static Node op(OpKind kind, NodeId a, NodeId b = {}, double scale = 1.0, double shift = 0.0);
  NodeId push(Node node);
  void check(NodeId id) const;
  std::string describe(std::size_t index) const;
  void evaluate(std::size_t index);
  void propagate(std::size_t index);
  // Zeroed on first use in a backward pass.
  Tensor2& adjoint_slot(NodeId target);

  std::vector<Node> nodes_;
  std::unordered_map<std::string, NodeId> leaf_index_;
  std::vector<Tensor2> values_;
  std::vector<const Tensor2*> view_;
  std::vector<Tensor2> adjoints_;
  std::vector<std::uint8_t> reached_;
  NodeId output_;
  bool evaluated_ = false;
};

}  // namespace ddr
