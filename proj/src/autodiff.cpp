#include "hypercloud/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hypercloud {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << '[' << m.rows() << 'x' << m.cols() << ']';
  return os.str();
}

[[noreturn]] void shape_error(Op op, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(std::string(op_name(op)) + ": shape mismatch " + shape_str(a) +
                              " vs " + shape_str(b));
}

[[noreturn]] void shape_error(Op op, const Matrix& a, const std::string& detail) {
  throw std::invalid_argument(std::string(op_name(op)) + ": invalid shape " + shape_str(a) +
                              " (" + detail + ")");
}

TensorPtr make(Matrix m) { return std::make_shared<const Matrix>(std::move(m)); }

std::size_t arity(Op op) {
  switch (op) {
    case Op::MatMul:
    case Op::Add:
    case Op::Mul:
      return 2;
    case Op::Relu:
    case Op::Tanh:
    case Op::Exp:
    case Op::Log:
    case Op::Neg:
    case Op::Sum:
    case Op::MaxRows:
      return 1;
    default:
      return 0;
  }
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Mul: return "mul";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Neg: return "neg";
    case Op::Sum: return "sum";
    case Op::MaxRows: return "max_rows";
    case Op::Slice: return "slice";
    case Op::Reshape: return "reshape";
    case Op::Concat: return "concat";
  }
  return "unknown";
}

const Matrix& Var::value() const { return tape->value(id); }

void Tape::check_id(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw std::out_of_range("tape: node id " + std::to_string(id.index) + " out of range");
  }
}

NodeId Tape::push(Node node) {
  for (NodeId in : node.inputs) {
    node.requires_grad = node.requires_grad || nodes_[in.index].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return NodeId{nodes_.size() - 1};
}

NodeId Tape::leaf(Matrix value, bool requires_grad) {
  return leaf(make(std::move(value)), requires_grad);
}

NodeId Tape::leaf(TensorPtr value, bool requires_grad) {
  if (!value) throw std::invalid_argument("leaf: null tensor");
  Node n;
  n.kind = Op::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

NodeId Tape::borrow(const Matrix& value, bool requires_grad) {
  return leaf(TensorPtr(std::shared_ptr<const Matrix>(), &value), requires_grad);
}

NodeId Tape::apply(Op kind, std::span<const NodeId> inputs) {
  if (arity(kind) == 0) {
    throw std::invalid_argument(std::string("apply: primitive '") + op_name(kind) +
                                "' needs explicit arguments");
  }
  if (inputs.size() != arity(kind)) {
    throw std::invalid_argument(std::string(op_name(kind)) + ": expected " +
                                std::to_string(arity(kind)) + " inputs, got " +
                                std::to_string(inputs.size()));
  }
  for (NodeId in : inputs) check_id(in);

  const Matrix& a = value(inputs[0]);
  Node n;
  n.kind = kind;
  n.inputs.assign(inputs.begin(), inputs.end());

  switch (kind) {
    case Op::MatMul: {
      const Matrix& b = value(inputs[1]);
      if (a.cols() != b.rows()) shape_error(kind, a, b);
      n.value = make(a * b);
      break;
    }
    case Op::Add: {
      const Matrix& b = value(inputs[1]);
      if (a.rows() == b.rows() && a.cols() == b.cols()) {
        n.value = make(a + b);
      } else if (b.rows() == 1 && a.cols() == b.cols()) {
        n.value = make(a.rowwise() + b.row(0));
      } else {
        shape_error(kind, a, b);
      }
      break;
    }
    case Op::Mul: {
      const Matrix& b = value(inputs[1]);
      if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(kind, a, b);
      n.value = make(a.cwiseProduct(b));
      break;
    }
    case Op::Relu:
      n.value = make(a.cwiseMax(0.0));
      break;
    case Op::Tanh:
      n.value = make(a.array().tanh().matrix());
      break;
    case Op::Exp: {
      if (!a.allFinite()) throw std::domain_error("exp: non-finite input " + shape_str(a));
      Matrix out = a.array().exp().matrix();
      if (!out.allFinite()) throw std::domain_error("exp: overflow on input " + shape_str(a));
      n.value = make(std::move(out));
      break;
    }
    case Op::Log: {
      if (!a.allFinite()) throw std::domain_error("log: non-finite input " + shape_str(a));
      if (a.size() > 0 && a.minCoeff() <= 0.0) {
        throw std::domain_error("log: non-positive input " + shape_str(a));
      }
      n.value = make(a.array().log().matrix());
      break;
    }
    case Op::Neg:
      n.value = make(-a);
      break;
    case Op::Sum: {
      Matrix out(1, 1);
      out(0, 0) = a.sum();
      n.value = make(std::move(out));
      break;
    }
    case Op::MaxRows: {
      if (a.rows() == 0) shape_error(kind, a, "empty set dimension");
      Matrix out(1, a.cols());
      n.argmax.assign(static_cast<std::size_t>(a.cols()), 0);
      for (Index j = 0; j < a.cols(); ++j) {
        Index best = 0;
        double v = a(0, j);
        // strict comparison keeps the lowest index on ties
        for (Index i = 1; i < a.rows(); ++i) {
          if (a(i, j) > v) {
            v = a(i, j);
            best = i;
          }
        }
        out(0, j) = v;
        n.argmax[static_cast<std::size_t>(j)] = best;
      }
      n.value = make(std::move(out));
      break;
    }
    default:
      break;
  }
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) { return apply(Op::MatMul, std::array{a, b}); }
NodeId Tape::add(NodeId a, NodeId b) { return apply(Op::Add, std::array{a, b}); }
NodeId Tape::mul(NodeId a, NodeId b) { return apply(Op::Mul, std::array{a, b}); }
NodeId Tape::relu(NodeId a) { return apply(Op::Relu, std::array{a}); }
NodeId Tape::tanh(NodeId a) { return apply(Op::Tanh, std::array{a}); }
NodeId Tape::exp(NodeId a) { return apply(Op::Exp, std::array{a}); }
NodeId Tape::log(NodeId a) { return apply(Op::Log, std::array{a}); }
NodeId Tape::neg(NodeId a) { return apply(Op::Neg, std::array{a}); }
NodeId Tape::sum(NodeId a) { return apply(Op::Sum, std::array{a}); }
NodeId Tape::max_rows(NodeId a) { return apply(Op::MaxRows, std::array{a}); }

NodeId Tape::slice(NodeId a, Index row0, Index rows, Index col0, Index cols) {
  check_id(a);
  const Matrix& m = value(a);
  if (row0 < 0 || col0 < 0 || rows < 0 || cols < 0 || row0 + rows > m.rows() ||
      col0 + cols > m.cols()) {
    shape_error(Op::Slice, m,
                "block at (" + std::to_string(row0) + "," + std::to_string(col0) + ") of size " +
                    std::to_string(rows) + "x" + std::to_string(cols));
  }
  Node n;
  n.kind = Op::Slice;
  n.inputs = {a};
  n.row0 = row0;
  n.col0 = col0;
  n.value = make(m.block(row0, col0, rows, cols));
  return push(std::move(n));
}

NodeId Tape::reshape(NodeId a, Index rows, Index cols) {
  check_id(a);
  const Matrix& m = value(a);
  if (rows < 0 || cols < 0 || rows * cols != m.size()) {
    shape_error(Op::Reshape, m, "target " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  Node n;
  n.kind = Op::Reshape;
  n.inputs = {a};
  n.value = make(Eigen::Map<const Matrix>(m.data(), rows, cols));
  return push(std::move(n));
}

NodeId Tape::concat(std::span<const NodeId> inputs, int axis) {
  if (inputs.empty()) throw std::invalid_argument("concat: no inputs");
  if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  Index rows = 0, cols = 0;
  const Matrix& first = value(inputs[0]);
  for (NodeId in : inputs) {
    check_id(in);
    const Matrix& m = value(in);
    if (axis == 0) {
      if (m.cols() != first.cols()) shape_error(Op::Concat, first, m);
      rows += m.rows();
      cols = m.cols();
    } else {
      if (m.rows() != first.rows()) shape_error(Op::Concat, first, m);
      cols += m.cols();
      rows = m.rows();
    }
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (NodeId in : inputs) {
    const Matrix& m = value(in);
    if (axis == 0) {
      out.middleRows(offset, m.rows()) = m;
      offset += m.rows();
    } else {
      out.middleCols(offset, m.cols()) = m;
      offset += m.cols();
    }
  }
  Node n;
  n.kind = Op::Concat;
  n.inputs.assign(inputs.begin(), inputs.end());
  n.axis = axis;
  n.value = make(std::move(out));
  return push(std::move(n));
}

const std::vector<Index>& Tape::argmax(NodeId id) const {
  check_id(id);
  const Node& n = nodes_[id.index];
  if (n.kind != Op::MaxRows) throw std::invalid_argument("argmax: node is not max_rows");
  return n.argmax;
}

void Tape::accumulate(NodeId id, const Matrix& g) {
  Matrix& slot = grads_[id.index];
  if (slot.size() == 0 && g.size() != 0) {
    slot = g;
  } else {
    slot += g;
  }
}

void Tape::backward(NodeId loss) {
  check_id(loss);
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(lv));
  }
  grads_.assign(nodes_.size(), Matrix());
  grads_[loss.index] = Matrix::Ones(1, 1);

  for (std::size_t k = loss.index + 1; k-- > 0;) {
    const Node& n = nodes_[k];
    if (!n.requires_grad || grads_[k].size() == 0 || n.kind == Op::Leaf) continue;
    const Matrix& g = grads_[k];
    auto wants = [&](std::size_t i) { return nodes_[n.inputs[i].index].requires_grad; };
    auto in = [&](std::size_t i) -> const Matrix& { return *nodes_[n.inputs[i].index].value; };

    switch (n.kind) {
      case Op::MatMul:
        if (wants(0)) accumulate(n.inputs[0], g * in(1).transpose());
        if (wants(1)) accumulate(n.inputs[1], in(0).transpose() * g);
        break;
      case Op::Add:
        if (wants(0)) accumulate(n.inputs[0], g);
        if (wants(1)) {
          if (in(1).rows() == g.rows()) {
            accumulate(n.inputs[1], g);
          } else {
            accumulate(n.inputs[1], g.colwise().sum());
          }
        }
        break;
      case Op::Mul:
        if (wants(0)) accumulate(n.inputs[0], g.cwiseProduct(in(1)));
        if (wants(1)) accumulate(n.inputs[1], g.cwiseProduct(in(0)));
        break;
      case Op::Relu:
        // subgradient at 0 is 0
        accumulate(n.inputs[0], (in(0).array() > 0.0).select(g, 0.0).matrix());
        break;
      case Op::Tanh:
        accumulate(n.inputs[0],
                   g.cwiseProduct((1.0 - n.value->array().square()).matrix()));
        break;
      case Op::Exp:
        accumulate(n.inputs[0], g.cwiseProduct(*n.value));
        break;
      case Op::Log:
        accumulate(n.inputs[0], g.cwiseQuotient(in(0)));
        break;
      case Op::Neg:
        accumulate(n.inputs[0], -g);
        break;
      case Op::Sum:
        accumulate(n.inputs[0], Matrix::Constant(in(0).rows(), in(0).cols(), g(0, 0)));
        break;
      case Op::MaxRows: {
        Matrix d = Matrix::Zero(in(0).rows(), in(0).cols());
        for (Index j = 0; j < d.cols(); ++j) {
          d(n.argmax[static_cast<std::size_t>(j)], j) = g(0, j);
        }
        accumulate(n.inputs[0], d);
        break;
      }
      case Op::Slice: {
        Matrix d = Matrix::Zero(in(0).rows(), in(0).cols());
        d.block(n.row0, n.col0, g.rows(), g.cols()) = g;
        accumulate(n.inputs[0], d);
        break;
      }
      case Op::Reshape:
        accumulate(n.inputs[0], Eigen::Map<const Matrix>(g.data(), in(0).rows(), in(0).cols()));
        break;
      case Op::Concat: {
        Index offset = 0;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          const Matrix& m = in(i);
          if (wants(i)) {
            if (n.axis == 0) {
              accumulate(n.inputs[i], g.middleRows(offset, m.rows()));
            } else {
              accumulate(n.inputs[i], g.middleCols(offset, m.cols()));
            }
          }
          offset += n.axis == 0 ? m.rows() : m.cols();
        }
        break;
      }
      case Op::Leaf:
        break;
    }
  }

}

const Matrix& Tape::grad(NodeId id) const {
  check_id(id);
  if (id.index >= grads_.size()) throw std::logic_error("grad: backward() has not been run");
  Matrix& slot = grads_[id.index];
  const Matrix& v = *nodes_[id.index].value;
  if (slot.rows() != v.rows() || slot.cols() != v.cols()) slot = Matrix::Zero(v.rows(), v.cols());
  return slot;
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) { return {a.tape, a.tape->matmul(a.id, b.id)}; }
Var operator+(Var a, Var b) { return {a.tape, a.tape->add(a.id, b.id)}; }
Var operator-(Var a) { return {a.tape, a.tape->neg(a.id)}; }
Var operator-(Var a, Var b) { return a + (-b); }
Var cwise_mul(Var a, Var b) { return {a.tape, a.tape->mul(a.id, b.id)}; }
Var relu(Var a) { return {a.tape, a.tape->relu(a.id)}; }
Var tanh(Var a) { return {a.tape, a.tape->tanh(a.id)}; }
Var exp(Var a) { return {a.tape, a.tape->exp(a.id)}; }
Var log(Var a) { return {a.tape, a.tape->log(a.id)}; }
Var sum(Var a) { return {a.tape, a.tape->sum(a.id)}; }
Var max_rows(Var a) { return {a.tape, a.tape->max_rows(a.id)}; }

Var slice(Var a, Index row0, Index rows, Index col0, Index cols) {
  return {a.tape, a.tape->slice(a.id, row0, rows, col0, cols)};
}

Var reshape(Var a, Index rows, Index cols) { return {a.tape, a.tape->reshape(a.id, rows, cols)}; }

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  std::vector<NodeId> ids;
  ids.reserve(parts.size());
  for (const Var& v : parts) ids.push_back(v.id);
  return {parts[0].tape, parts[0].tape->concat(ids, axis)};
}

Var scale(Var a, double factor) {
  NodeId c = a.tape->constant(Matrix::Constant(a.rows(), a.cols(), factor));
  return {a.tape, a.tape->mul(a.id, c)};
}

Var clamp(Var a, double lo, double hi) {
  // lo + relu(a - lo) - relu(a - hi)
  Tape& t = *a.tape;
  Var neg_lo{&t, t.constant(Matrix::Constant(1, a.cols(), -lo))};
  Var neg_hi{&t, t.constant(Matrix::Constant(1, a.cols(), -hi))};
  Var pos_lo{&t, t.constant(Matrix::Constant(1, a.cols(), lo))};
  return (relu(a + neg_lo) - relu(a + neg_hi)) + pos_lo;
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const TapeFunction& f, const Matrix& point, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

  auto evaluate = [&](const Matrix& x) {
    Tape t;
    NodeId in = t.leaf(x, false);
    NodeId out = f(t, in);
    const Matrix& v = t.value(out);
    if (v.size() != 1) throw std::invalid_argument("grad_check: function is not scalar-valued");
    if (!std::isfinite(v(0, 0))) throw std::domain_error("grad_check: non-finite evaluation");
    return v(0, 0);
  };

  Tape tape;
  NodeId in = tape.leaf(point, true);
  NodeId out = f(tape, in);
  tape.backward(out);
  const double f0 = tape.value(out)(0, 0);
  if (!std::isfinite(f0)) throw std::domain_error("grad_check: non-finite evaluation");
  const Matrix analytic = tape.grad(in);

  // One-sided differences agreeing to this relative level means smooth.
  constexpr double kink_tol = 1e-3;

  GradCheckResult result;
  Matrix probe = point;
  for (Index k = 0; k < point.size(); ++k) {
    const double x0 = point.data()[k];
    probe.data()[k] = x0 + h;
    const double fp = evaluate(probe);
    probe.data()[k] = x0 - h;
    const double fm = evaluate(probe);
    probe.data()[k] = x0;

    const double fwd = (fp - f0) / h;
    const double bwd = (f0 - fm) / h;
    if (std::abs(fwd - bwd) > kink_tol * std::max({1.0, std::abs(fwd), std::abs(bwd)})) {
      result.non_differentiable.push_back(k);
      continue;
    }
    const double fd = (fp - fm) / (2.0 * h);
    const double ad = analytic.data()[k];
    const double err = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
    result.max_rel_error = std::max(result.max_rel_error, err);
  }
  return result;
}

}  // namespace hypercloud
