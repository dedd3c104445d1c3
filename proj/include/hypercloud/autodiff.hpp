#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hypercloud {

// Dense row-major storage; the flattened data order of a tensor is its
// row-major traversal, which is what reshape preserves.
template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = MatrixT<double>;
using Index = Eigen::Index;

// Tensors on the tape are immutable once created. Parameter leaves may borrow
// storage (see Tape::borrow), in which case the owner must outlive the tape.
using TensorPtr = std::shared_ptr<const Matrix>;

enum class Op {
  Leaf,
  MatMul,
  Add,  // same shape, or rhs a single row broadcast over lhs rows
  Mul,
  Relu,
  Tanh,
  Exp,
  Log,
  Neg,
  Sum,
  MaxRows,  // reduce-max over the set (row) dimension
  Slice,
  Reshape,
  Concat,
};

const char* op_name(Op op);

struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

class Tape;

// Handle to a node on a tape; lets network code be written as expressions.
struct Var {
  Tape* tape = nullptr;
  NodeId id;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

/// Eager reverse-mode tape. Every primitive computes its forward value on
/// append; backward() sweeps the nodes in reverse insertion order, which is a
/// topological order because inputs always precede their consumers.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  NodeId leaf(Matrix value, bool requires_grad = true);
  NodeId leaf(TensorPtr value, bool requires_grad = true);
  NodeId constant(Matrix value) { return leaf(std::move(value), false); }
  // Non-owning leaf over caller storage.
  NodeId borrow(const Matrix& value, bool requires_grad = true);

  // Parameterless primitives: matmul, add, mul, relu, tanh, exp, log, neg,
  // sum, max_rows.
  NodeId apply(Op kind, std::span<const NodeId> inputs);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId relu(NodeId a);
  NodeId tanh(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId neg(NodeId a);
  NodeId sum(NodeId a);
  NodeId max_rows(NodeId a);
  NodeId slice(NodeId a, Index row0, Index rows, Index col0, Index cols);
  NodeId reshape(NodeId a, Index rows, Index cols);
  // axis 0 stacks rows, axis 1 stacks columns.
  NodeId concat(std::span<const NodeId> inputs, int axis);

  Var var(NodeId id) { return Var{this, id}; }

  const Matrix& value(NodeId id) const { return *nodes_.at(id.index).value; }
  Op kind(NodeId id) const { return nodes_.at(id.index).kind; }
  bool requires_grad(NodeId id) const { return nodes_.at(id.index).requires_grad; }
  std::span<const NodeId> inputs(NodeId id) const { return nodes_.at(id.index).inputs; }
  // Row index of the maximum per column, for MaxRows nodes.
  const std::vector<Index>& argmax(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  // Loss must be 1x1. Gradients of earlier passes are discarded.
  void backward(NodeId loss);
  // Gradient of the last backward() pass; zeros for nodes the loss does not
  // depend on.
  const Matrix& grad(NodeId id) const;

 private:
  struct Node {
    Op kind = Op::Leaf;
    std::vector<NodeId> inputs;
    TensorPtr value;
    bool requires_grad = false;
    std::vector<Index> argmax;
    Index row0 = 0;
    Index col0 = 0;
    int axis = 0;
  };

  NodeId push(Node node);
  void accumulate(NodeId id, const Matrix& g);
  void check_id(NodeId id) const;

  std::vector<Node> nodes_;
  mutable std::vector<Matrix> grads_;
};

// Expression helpers over Var.
Var matmul(Var a, Var b);
Var operator+(Var a, Var b);
Var operator-(Var a);
Var operator-(Var a, Var b);
Var cwise_mul(Var a, Var b);
Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var sum(Var a);
Var max_rows(Var a);
Var slice(Var a, Index row0, Index rows, Index col0, Index cols);
Var reshape(Var a, Index rows, Index cols);
Var concat(std::span<const Var> parts, int axis);
// Scale by a constant.
Var scale(Var a, double factor);
// Elementwise clamp to [lo, hi], composed from add and relu.
Var clamp(Var a, double lo, double hi);

// Builds a scalar function of a single input leaf.
using TapeFunction = std::function<NodeId(Tape&, NodeId)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  // Flat (row-major) coordinates where one-sided differences disagree, i.e.
  // the function has a kink there. They do not contribute to max_rel_error.
  std::vector<Index> non_differentiable;
};

/// Compares the tape gradient of f at point with central differences of step
/// h. Per coordinate the error is |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
GradCheckResult grad_check(const TapeFunction& f, const Matrix& point, double h = 1e-5);

}  // namespace hypercloud
