#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "shiftguard/error.hpp"
#include "shiftguard/sparse.hpp"
#include "shiftguard/tensor.hpp"

namespace shiftguard {

class Tape;

// Per-op data saved for the backward pass.
struct OpAux {
  double scalar = 0.0;
  const SparseMatrix* sparse = nullptr;
  std::vector<std::size_t> index;
  std::vector<int> labels;
};

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Append-only record of matrix operations for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so the recording is already a
/// topological order and backward() is a single reverse sweep. A node is
/// traced when any input is traced; constants and everything computed purely
/// from constants carry no adjoint. One backward() per tape.
class Tape {
 public:
  enum class Op {
    kLeaf,
    kMatMul,
    kSpMM,
    kAdd,
    kSub,
    kScale,
    kRelu,
    kAddRowVector,
    kRowSoftmax,
    kKlRows,
    kBce,
    kSum,
    kSumSquares,
    kGatherRows,
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var parameter(Tensor value) { return push(Op::kLeaf, {}, std::move(value), true); }
  Var constant(Tensor value) { return push(Op::kLeaf, {}, std::move(value), false); }

  const Tensor& value(Var v) const { return node(v).value; }
  bool traced(Var v) const { return node(v).traced; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  void backward(Var loss);

  /// Adjoint of a traced node after backward(); nullopt for constants.
  std::optional<Tensor> gradient(Var v) const {
    if (!consumed_) throw std::logic_error("gradient requested before backward");
    const Node& nd = node(v);
    if (!nd.traced) return std::nullopt;
    return grads_[v.id];
  }

  // Op recording; used by the free functions below.
  using Aux = OpAux;
  Var record(Op op, std::initializer_list<Var> inputs, Tensor value, Aux aux = {}) {
    bool traced = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (Var in : inputs) {
      if (in.tape != this) throw ContractError("variable belongs to a different tape");
      ids.push_back(in.id);
      traced = traced || nodes_[in.id].traced;
    }
    Var v = push(op, std::move(ids), std::move(value), traced);
    nodes_.back().aux = std::move(aux);
    return v;
  }

 private:
  struct Node {
    Op op;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool traced;
    Aux aux;
  };

  Var push(Op op, std::vector<std::size_t> inputs, Tensor value, bool traced) {
    if (consumed_) throw std::logic_error("tape already consumed");
    nodes_.push_back(Node{op, std::move(inputs), std::move(value), traced, {}});
    return Var{this, nodes_.size() - 1};
  }

  const Node& node(Var v) const {
    if (v.tape != this || v.id >= nodes_.size()) throw ContractError("variable not on this tape");
    return nodes_[v.id];
  }

  void accumulate(std::size_t id, const Tensor& g) {
    if (!nodes_[id].traced) return;
    Tensor& dst = grads_[id];
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }

  void propagate(std::size_t id);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool consumed_ = false;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

inline void Tape::backward(Var loss) {
  if (consumed_) throw std::logic_error("tape already consumed");
  const Node& l = node(loss);
  if (l.value.rows() != 1 || l.value.cols() != 1) throw ContractError("backward: loss must be a 1x1 scalar");
  consumed_ = true;
  grads_.clear();
  grads_.reserve(nodes_.size());
  for (const auto& nd : nodes_)
    grads_.emplace_back(nd.traced ? Tensor(nd.value.rows(), nd.value.cols()) : Tensor());
  if (!l.traced) return;
  grads_[loss.id][0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;)
    if (nodes_[id].traced && nodes_[id].op != Op::kLeaf) propagate(id);
}

inline void Tape::propagate(std::size_t id) {
  const Node& nd = nodes_[id];
  const Tensor& g = grads_[id];
  const auto in = [&](std::size_t k) -> const Node& { return nodes_[nd.inputs[k]]; };
  const auto wants = [&](std::size_t k) { return nodes_[nd.inputs[k]].traced; };

  switch (nd.op) {
    case Op::kLeaf:
      break;
    case Op::kMatMul:
      if (wants(0)) accumulate(nd.inputs[0], matmul_nt(g, in(1).value));
      if (wants(1)) accumulate(nd.inputs[1], matmul_tn(in(0).value, g));
      break;
    case Op::kSpMM:
      accumulate(nd.inputs[0], spmm_transposed(*nd.aux.sparse, g));
      break;
    case Op::kAdd:
      accumulate(nd.inputs[0], g);
      accumulate(nd.inputs[1], g);
      break;
    case Op::kSub:
      accumulate(nd.inputs[0], g);
      if (wants(1)) accumulate(nd.inputs[1], scale(g, -1.0));
      break;
    case Op::kScale:
      accumulate(nd.inputs[0], scale(g, nd.aux.scalar));
      break;
    case Op::kRelu: {
      Tensor ga = g;
      const Tensor& x = in(0).value;
      for (std::size_t i = 0; i < ga.size(); ++i)
        if (!(x[i] > 0.0)) ga[i] = 0.0;
      accumulate(nd.inputs[0], ga);
      break;
    }
    case Op::kAddRowVector: {
      accumulate(nd.inputs[0], g);
      if (wants(1)) {
        Tensor gb(1, g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
        accumulate(nd.inputs[1], gb);
      }
      break;
    }
    case Op::kRowSoftmax: {
      // y = softmax(x / T): dx = y * (g - <g, y>) / T per row.
      const Tensor& y = nd.value;
      Tensor gx(y.rows(), y.cols());
      for (std::size_t i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) = y(i, j) * (g(i, j) - dot) / nd.aux.scalar;
      }
      accumulate(nd.inputs[0], gx);
      break;
    }
    case Op::kKlRows: {
      const Tensor& p = in(0).value;
      const Tensor& q = in(1).value;
      const double upstream = g[0] / static_cast<double>(p.rows());
      if (wants(0)) {
        Tensor gp(p.rows(), p.cols());
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double pi = std::max(p[i], kKlClamp);
          gp[i] = upstream * (std::log(pi) - std::log(std::max(q[i], kKlClamp)) + 1.0);
        }
        accumulate(nd.inputs[0], gp);
      }
      if (wants(1)) {
        Tensor gq(q.rows(), q.cols());
        for (std::size_t i = 0; i < q.size(); ++i)
          gq[i] = q[i] > kKlClamp ? -upstream * p[i] / q[i] : 0.0;
        accumulate(nd.inputs[1], gq);
      }
      break;
    }
    case Op::kBce: {
      const Tensor& z = in(0).value;
      const auto& y = nd.aux.labels;
      const double w = nd.aux.scalar;
      const double upstream = g[0] / static_cast<double>(z.rows());
      Tensor gz(z.rows(), 1);
      for (std::size_t i = 0; i < z.rows(); ++i)
        gz[i] = upstream * (y[i] == 1 ? -w * sigmoid(-z[i]) : sigmoid(z[i]));
      accumulate(nd.inputs[0], gz);
      break;
    }
    case Op::kSum: {
      const Tensor& x = in(0).value;
      accumulate(nd.inputs[0], Tensor(x.rows(), x.cols(), g[0]));
      break;
    }
    case Op::kSumSquares:
      accumulate(nd.inputs[0], scale(in(0).value, 2.0 * g[0]));
      break;
    case Op::kGatherRows: {
      const Tensor& x = in(0).value;
      Tensor gx(x.rows(), x.cols());
      for (std::size_t t = 0; t < nd.aux.index.size(); ++t) {
        auto dst = gx.row(nd.aux.index[t]);
        const auto src = g.row(t);
        for (std::size_t j = 0; j < x.cols(); ++j) dst[j] += src[j];
      }
      accumulate(nd.inputs[0], gx);
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Traced operations. Forward values come from the value-level kernels, so a
// traced computation and its untraced counterpart agree bit for bit.

inline Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractError("variables live on different tapes");
  return *a.tape;
}

inline Var matmul(Var a, Var b) {
  return same_tape(a, b).record(Tape::Op::kMatMul, {a, b}, matmul(a.value(), b.value()));
}

/// The sparse matrix must outlive the tape.
inline Var spmm(const SparseMatrix& s, Var x) {
  Tape::Aux aux;
  aux.sparse = &s;
  return x.tape->record(Tape::Op::kSpMM, {x}, spmm(s, x.value()), std::move(aux));
}

inline Var add(Var a, Var b) { return same_tape(a, b).record(Tape::Op::kAdd, {a, b}, add(a.value(), b.value())); }
inline Var sub(Var a, Var b) { return same_tape(a, b).record(Tape::Op::kSub, {a, b}, sub(a.value(), b.value())); }

inline Var scale(Var a, double c) {
  Tape::Aux aux;
  aux.scalar = c;
  return a.tape->record(Tape::Op::kScale, {a}, scale(a.value(), c), std::move(aux));
}

inline Var relu(Var a) { return a.tape->record(Tape::Op::kRelu, {a}, relu(a.value())); }

inline Var add_row_vector(Var a, Var bias) {
  return same_tape(a, bias).record(Tape::Op::kAddRowVector, {a, bias}, add_row_vector(a.value(), bias.value()));
}

inline Var row_softmax(Var x, double temperature) {
  Tape::Aux aux;
  aux.scalar = temperature;
  return x.tape->record(Tape::Op::kRowSoftmax, {x}, row_softmax(x.value(), temperature), std::move(aux));
}

inline Var kl_rows(Var p, Var q) {
  const double v = kl_rows(p.value(), q.value());
  return same_tape(p, q).record(Tape::Op::kKlRows, {p, q}, Tensor(1, 1, v));
}

inline Var bce_with_logits(Var logits, std::span<const int> labels, double positive_weight) {
  const double v = bce_with_logits(logits.value(), labels, positive_weight);
  Tape::Aux aux;
  aux.scalar = positive_weight;
  aux.labels.assign(labels.begin(), labels.end());
  return logits.tape->record(Tape::Op::kBce, {logits}, Tensor(1, 1, v), std::move(aux));
}

inline Var sum(Var a) { return a.tape->record(Tape::Op::kSum, {a}, Tensor(1, 1, sum(a.value()))); }

inline Var sum_squares(Var a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v * v;
  return a.tape->record(Tape::Op::kSumSquares, {a}, Tensor(1, 1, acc));
}

inline Var gather_rows(Var a, std::span<const std::size_t> idx) {
  Tape::Aux aux;
  aux.index.assign(idx.begin(), idx.end());
  return a.tape->record(Tape::Op::kGatherRows, {a}, gather_rows(a.value(), idx), std::move(aux));
}

}  // namespace shiftguard
