// SPDX-License-Identifier: Apache-2.0

#include "ddr/tape.hpp"

#include "ddr/error.hpp"

#include <cmath>

namespace ddr {

namespace {

inline double stable_sigmoid(double v) {
  if (v >= 0.0) {
    return 1.0 / (1.0 + std::exp(-v));
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline double stable_softplus(double v) {
  return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
}

std::string shape(const Tensor2& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

}  // namespace

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::add_row: return "add_row";
    case OpKind::affine: return "affine";
    case OpKind::glu: return "glu";
    case OpKind::relu: return "relu";
    case OpKind::neg_relu: return "neg_relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softplus: return "softplus";
    case OpKind::abs: return "abs";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
  }
  return "unknown";
}

NodeId Tape::push(Node node) {
  if (node.kind != OpKind::leaf) {
    check(node.a);
    if (node.b.valid()) {
      check(node.b);
    }
  }
  NodeId id{static_cast<std::uint32_t>(nodes_.size())};
  nodes_.push_back(std::move(node));
  evaluated_ = false;
  return id;
}

void Tape::check(NodeId id) const {
  if (!id.valid() || id.index >= nodes_.size()) {
    throw Error(ErrorCode::invalid_argument, "Tape: reference to an undeclared node");
  }
}

NodeId Tape::leaf(std::string name, std::size_t rows, std::size_t cols) {
  if (leaf_index_.contains(name)) {
    throw Error(ErrorCode::invalid_argument, "Tape: duplicate leaf '" + name + "'");
  }
  Node node = op(OpKind::leaf, {});
  node.name = name;
  node.rows = rows;
  node.cols = cols;
  NodeId id = push(std::move(node));
  leaf_index_.emplace(nodes_.back().name, id);
  return id;
}

Tape::Node Tape::op(OpKind kind, NodeId a, NodeId b, double scale, double shift) {
  Node node;
  node.kind = kind;
  node.a = a;
  node.b = b;
  node.scale = scale;
  node.shift = shift;
  return node;
}

NodeId Tape::matmul(NodeId a, NodeId b) { return push(op(OpKind::matmul, a, b)); }
NodeId Tape::add(NodeId a, NodeId b) { return push(op(OpKind::add, a, b)); }
NodeId Tape::sub(NodeId a, NodeId b) { return push(op(OpKind::sub, a, b)); }
NodeId Tape::mul(NodeId a, NodeId b) { return push(op(OpKind::mul, a, b)); }
NodeId Tape::add_row(NodeId a, NodeId row) { return push(op(OpKind::add_row, a, row)); }
NodeId Tape::affine(NodeId a, double scale, double shift) {
  return push(op(OpKind::affine, a, {}, scale, shift));
}
NodeId Tape::glu(NodeId a) { return push(op(OpKind::glu, a)); }
NodeId Tape::relu(NodeId a) { return push(op(OpKind::relu, a)); }
NodeId Tape::neg_relu(NodeId a) { return push(op(OpKind::neg_relu, a)); }
NodeId Tape::sigmoid(NodeId a) { return push(op(OpKind::sigmoid, a)); }
NodeId Tape::softplus(NodeId a) { return push(op(OpKind::softplus, a)); }
NodeId Tape::abs(NodeId a) { return push(op(OpKind::abs, a)); }
NodeId Tape::sum(NodeId a) { return push(op(OpKind::sum, a)); }
NodeId Tape::mean(NodeId a) { return push(op(OpKind::mean, a)); }

void Tape::label(NodeId node, std::string text) {
  check(node);
  if (nodes_[node.index].kind == OpKind::leaf) {
    throw Error(ErrorCode::invalid_argument, "Tape: leaves are labelled by their name");
  }
  nodes_[node.index].name = std::move(text);
}

void Tape::set_output(NodeId node) {
  check(node);
  output_ = node;
  evaluated_ = false;
}

std::string Tape::describe(std::size_t index) const {
  const Node& n = nodes_[index];
  std::string text = std::string(to_string(n.kind)) + "#" + std::to_string(index);
  if (!n.name.empty()) {
    text = "'" + n.name + "' (" + text + ")";
  }
  return text;
}

const Tensor2& Tape::value(NodeId node) const {
  check(node);
  if (!evaluated_) {
    throw Error(ErrorCode::bad_state, "Tape: value requested before forward");
  }
  return *view_[node.index];
}

const Tensor2& Tape::forward(const Feed& feed) {
  if (!output_.valid()) {
    throw Error(ErrorCode::bad_state, "Tape: no output node declared");
  }
  evaluated_ = false;
  values_.resize(nodes_.size());
  view_.assign(nodes_.size(), nullptr);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.kind == OpKind::leaf) {
      const Tensor2* bound = feed.find(n.name);
      if (bound == nullptr) {
        throw Error(ErrorCode::invalid_argument, "Tape: leaf " + describe(i) + " is not bound");
      }
      if ((n.rows != any && bound->rows() != n.rows) || (n.cols != any && bound->cols() != n.cols)) {
        throw Error(ErrorCode::shape_mismatch,
                    "Tape: leaf " + describe(i) + " bound to " + shape(*bound) +
                        ", declared " + (n.rows == any ? "?" : std::to_string(n.rows)) + "x" +
                        (n.cols == any ? "?" : std::to_string(n.cols)));
      }
      view_[i] = bound;
      continue;
    }
    evaluate(i);
    view_[i] = &values_[i];
  }
  evaluated_ = true;
  return *view_[output_.index];
}

void Tape::evaluate(std::size_t index) {
  const Node& n = nodes_[index];
  const Tensor2& a = *view_[n.a.index];
  const Tensor2* b = n.b.valid() ? view_[n.b.index] : nullptr;
  Tensor2& out = values_[index];

  auto mismatch = [&](const std::string& what) {
    throw Error(ErrorCode::shape_mismatch, "Tape: node " + describe(index) + ": " + what);
  };
  auto same_shape = [&]() {
    if (a.rows() != b->rows() || a.cols() != b->cols()) {
      mismatch("operand shapes " + shape(a) + " and " + shape(*b) + " differ");
    }
    out.resize(a.rows(), a.cols());
  };
  auto unary = [&](auto fn) {
    out.resize(a.rows(), a.cols());
    const auto src = a.values();
    auto dst = out.values();
    for (std::size_t k = 0; k < src.size(); ++k) {
      dst[k] = fn(src[k]);
    }
  };

  switch (n.kind) {
    case OpKind::leaf:
      break;
    case OpKind::matmul:
      if (a.cols() != b->rows()) {
        mismatch("inner dimensions " + shape(a) + " · " + shape(*b));
      }
      out.resize(a.rows(), b->cols());
      out.matrix().noalias() = a.matrix() * b->matrix();
      break;
    case OpKind::add:
      same_shape();
      out.matrix() = a.matrix() + b->matrix();
      break;
    case OpKind::sub:
      same_shape();
      out.matrix() = a.matrix() - b->matrix();
      break;
    case OpKind::mul:
      same_shape();
      out.matrix() = a.matrix().cwiseProduct(b->matrix());
      break;
    case OpKind::add_row:
      if (b->rows() != 1 || b->cols() != a.cols()) {
        mismatch("row operand " + shape(*b) + " does not broadcast over " + shape(a));
      }
      out.resize(a.rows(), a.cols());
      out.matrix() = a.matrix().rowwise() + b->matrix().row(0);
      break;
    case OpKind::affine: {
      const double s = n.scale;
      const double t = n.shift;
      unary([s, t](double v) { return s * v + t; });
      break;
    }
    case OpKind::glu: {
      if (a.cols() % 2 != 0) {
        mismatch("GLU input width " + std::to_string(a.cols()) + " is odd");
      }
      const std::size_t h = a.cols() / 2;
      out.resize(a.rows(), h);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < h; ++c) {
          out(r, c) = a(r, c) * stable_sigmoid(a(r, h + c));
        }
      }
      break;
    }
    case OpKind::relu:
      unary([](double v) { return v > 0.0 ? v : 0.0; });
      break;
    case OpKind::neg_relu:
      unary([](double v) { return v < 0.0 ? -v : 0.0; });
      break;
    case OpKind::sigmoid:
      unary(stable_sigmoid);
      break;
    case OpKind::softplus:
      unary(stable_softplus);
      break;
    case OpKind::abs:
      unary([](double v) { return std::abs(v); });
      break;
    case OpKind::sum:
      out.resize(1, 1);
      out[0] = a.matrix().sum();
      break;
    case OpKind::mean:
      if (a.empty()) {
        mismatch("mean of an empty tensor");
      }
      out.resize(1, 1);
      out[0] = a.matrix().sum() / static_cast<double>(a.size());
      break;
  }
}

GradientMap Tape::backward(const Tensor2& seed) {
  if (!evaluated_) {
    throw Error(ErrorCode::bad_state, "Tape: backward called before forward");
  }
  const Tensor2& out = *view_[output_.index];
  if (seed.rows() != out.rows() || seed.cols() != out.cols()) {
    throw Error(ErrorCode::shape_mismatch,
                "Tape: seed " + shape(seed) + " does not match output " + shape(out));
  }
  adjoints_.resize(nodes_.size());
  reached_.assign(nodes_.size(), 0);
  adjoints_[output_.index].resize(seed.rows(), seed.cols());
  adjoints_[output_.index].matrix() = seed.matrix();
  reached_[output_.index] = 1;
  for (std::size_t i = output_.index + 1; i-- > 0;) {
    if (reached_[i] && nodes_[i].kind != OpKind::leaf) {
      propagate(i);
    }
  }

  GradientMap grads;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.kind != OpKind::leaf || !view_[i]->requires_grad()) {
      continue;
    }
    if (reached_[i]) {
      grads.emplace(n.name, adjoints_[i]);
    } else {
      grads.emplace(n.name, Tensor2(view_[i]->rows(), view_[i]->cols()));
    }
  }
  return grads;
}

Tensor2& Tape::adjoint_slot(NodeId target) {
  Tensor2& slot = adjoints_[target.index];
  if (!reached_[target.index]) {
    const Tensor2& v = *view_[target.index];
    slot.resize(v.rows(), v.cols());
    slot.fill(0.0);
    reached_[target.index] = 1;
  }
  return slot;
}

void Tape::propagate(std::size_t index) {
  const Node& n = nodes_[index];
  const Tensor2& g = adjoints_[index];
  const Tensor2& a = *view_[n.a.index];
  const Tensor2* b = n.b.valid() ? view_[n.b.index] : nullptr;
  const Tensor2& y = values_[index];

  auto unary = [&](auto dfn) {
    Tensor2& da = adjoint_slot(n.a);
    const auto src = a.values();
    const auto gv = g.values();
    const auto yv = y.values();
    auto dst = da.values();
    for (std::size_t k = 0; k < src.size(); ++k) {
      dst[k] += gv[k] * dfn(src[k], yv[k]);
    }
  };

  switch (n.kind) {
    case OpKind::leaf:
      break;
    case OpKind::matmul:
      adjoint_slot(n.a).matrix().noalias() += g.matrix() * b->matrix().transpose();
      adjoint_slot(n.b).matrix().noalias() += a.matrix().transpose() * g.matrix();
      break;
    case OpKind::add:
      adjoint_slot(n.a).matrix() += g.matrix();
      adjoint_slot(n.b).matrix() += g.matrix();
      break;
    case OpKind::sub:
      adjoint_slot(n.a).matrix() += g.matrix();
      adjoint_slot(n.b).matrix() -= g.matrix();
      break;
    case OpKind::mul:
      adjoint_slot(n.a).matrix() += g.matrix().cwiseProduct(b->matrix());
      adjoint_slot(n.b).matrix() += g.matrix().cwiseProduct(a.matrix());
      break;
    case OpKind::add_row:
      adjoint_slot(n.a).matrix() += g.matrix();
      adjoint_slot(n.b).matrix() += g.matrix().colwise().sum();
      break;
    case OpKind::affine: {
      const double s = n.scale;
      unary([s](double, double) { return s; });
      break;
    }
    case OpKind::glu: {
      const std::size_t h = y.cols();
      Tensor2& da = adjoint_slot(n.a);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < h; ++c) {
          const double s = stable_sigmoid(a(r, h + c));
          da(r, c) += g(r, c) * s;
          da(r, h + c) += g(r, c) * a(r, c) * s * (1.0 - s);
        }
      }
      break;
    }
    case OpKind::relu:
      unary([](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
      break;
    case OpKind::neg_relu:
      unary([](double v, double) { return v < 0.0 ? -1.0 : 0.0; });
      break;
    case OpKind::sigmoid:
      unary([](double, double s) { return s * (1.0 - s); });
      break;
    case OpKind::softplus:
      unary([](double v, double) { return stable_sigmoid(v); });
      break;
    case OpKind::abs:
      unary([](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
      break;
    case OpKind::sum:
      adjoint_slot(n.a).matrix().array() += g[0];
      break;
    case OpKind::mean:
      adjoint_slot(n.a).matrix().array() += g[0] / static_cast<double>(a.size());
      break;
  }
}

std::vector<std::uint8_t> Tape::kink_pattern() const {
  if (!evaluated_) {
    throw Error(ErrorCode::bad_state, "Tape: kink pattern requested before forward");
  }
  std::vector<std::uint8_t> pattern;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const OpKind k = nodes_[i].kind;
    if (k != OpKind::relu && k != OpKind::neg_relu && k != OpKind::abs) {
      continue;
    }
    for (double v : view_[nodes_[i].a.index]->values()) {
      pattern.push_back(v > 0.0 ? 2 : (v < 0.0 ? 0 : 1));
    }
  }
  return pattern;
}

}  // namespace ddr
