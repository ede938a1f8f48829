#include "cba/autodiff.hpp"

#include <cmath>
#include <optional>
#include <sstream>

namespace cba {

namespace {

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << t.rows() << "x" << t.cols();
  return os.str();
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                   " vs " + shape_str(b));
}

Tape* common_tape(const Tensor& a, const Tensor& b) {
  if (a.tape && b.tape && a.tape != b.tape)
    throw std::invalid_argument("operands belong to different tapes");
  return a.tape ? a.tape : b.tape;
}

int ensure_node(Tape* t, const Tensor& x) {
  if (x.tracked()) return x.node;
  TapeNode n;
  n.op = Op::Constant;
  n.value = x.value;
  return t->append(n);
}

Tensor record1(Tape* t, Op op, Matrix value, const Tensor& a, double s = 0.0,
               std::vector<int> idx = {}) {
  if (!t) return Tensor(std::move(value));
  TapeNode n;
  n.op = op;
  n.parents = {ensure_node(t, a), -1};
  n.value = value;
  n.scalar = s;
  n.indices = std::move(idx);
  int id = t->append(std::move(n));
  return Tensor(std::move(value), t, id);
}

Tensor record2(Tape* t, Op op, Matrix value, const Tensor& a, const Tensor& b) {
  if (!t) return Tensor(std::move(value));
  TapeNode n;
  n.op = op;
  int pa = ensure_node(t, a);
  int pb = ensure_node(t, b);
  n.parents = {pa, pb};
  n.value = value;
  int id = t->append(std::move(n));
  return Tensor(std::move(value), t, id);
}

}  // namespace

double Tensor::scalar() const {
  if (rows() != 1 || cols() != 1)
    throw ShapeError("scalar(): tensor is " + shape_str(*this) + ", expected 1x1");
  return value(0, 0);
}

double log_floor() { return std::exp(kLogFloorExponent); }

Tensor Tape::leaf(const Matrix& v) {
  TapeNode n;
  n.op = Op::Leaf;
  n.value = v;
  int id = append(std::move(n));
  return Tensor(v, this, id);
}

Tensor Tape::constant(const Matrix& v) {
  TapeNode n;
  n.op = Op::Constant;
  n.value = v;
  int id = append(std::move(n));
  return Tensor(v, this, id);
}

Matrix Tape::replay(int id) const {
  const TapeNode& n = node(id);
  auto p = [&](int k) { return replay(n.parents[static_cast<std::size_t>(k)]); };
  switch (n.op) {
    case Op::Leaf:
    case Op::Constant:
      return n.value;
    case Op::MatMul:
      return p(0) * p(1);
    case Op::Transpose:
      return p(0).transpose();
    case Op::Add:
      return p(0) + p(1);
    case Op::AddRowVec:
      return p(0).rowwise() + Eigen::RowVectorXd(p(1).row(0));
    case Op::AddScalar:
      return p(0).array() + n.scalar;
    case Op::Sub:
      return p(0) - p(1);
    case Op::Neg:
      return -p(0);
    case Op::Mul:
      return p(0).cwiseProduct(p(1));
    case Op::Div:
      return p(0).cwiseQuotient(p(1));
    case Op::Scale:
      return p(0) * n.scalar;
    case Op::Relu:
      return p(0).cwiseMax(0.0);
    case Op::Step:
      return (p(0).array() > 0.0).cast<double>();
    case Op::Exp:
      return p(0).array().exp();
    case Op::Log:
      return p(0).array().log();
    case Op::ClampFloor:
      return p(0).cwiseMax(n.scalar);
    case Op::RowSum:
      return p(0).rowwise().sum();
    case Op::ColSum:
      return p(0).colwise().sum();
    case Op::SumAll: {
      Matrix r(1, 1);
      r(0, 0) = p(0).sum();
      return r;
    }
    case Op::RowMax:
      return p(0).rowwise().maxCoeff();
    case Op::BroadcastCol:
      return p(0).replicate(1, node(id).value.cols());
    case Op::BroadcastRow:
      return p(0).replicate(node(id).value.rows(), 1);
    case Op::SelectCols: {
      Matrix a = p(0);
      Matrix r(a.rows(), 1);
      for (Eigen::Index i = 0; i < a.rows(); ++i)
        r(i, 0) = a(i, n.indices[static_cast<std::size_t>(i)]);
      return r;
    }
  }
  throw std::logic_error("replay: unknown op");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  return record2(common_tape(a, b), Op::MatMul, a.value * b.value, a, b);
}

Tensor transpose(const Tensor& a) {
  return record1(a.tape, Op::Transpose, a.value.transpose(), a);
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("add", a, b);
  return record2(common_tape(a, b), Op::Add, a.value + b.value, a, b);
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  if (v.rows() != 1 || v.cols() != a.cols()) shape_fail("add_rowvec", a, v);
  Matrix r = a.value.rowwise() + Eigen::RowVectorXd(v.value.row(0));
  return record2(common_tape(a, v), Op::AddRowVec, std::move(r), a, v);
}

Tensor add_scalar(const Tensor& a, double c) {
  return record1(a.tape, Op::AddScalar, a.value.array() + c, a, c);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("sub", a, b);
  return record2(common_tape(a, b), Op::Sub, a.value - b.value, a, b);
}

Tensor neg(const Tensor& a) { return record1(a.tape, Op::Neg, -a.value, a); }

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("mul", a, b);
  return record2(common_tape(a, b), Op::Mul, a.value.cwiseProduct(b.value), a, b);
}

Tensor div(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("div", a, b);
  return record2(common_tape(a, b), Op::Div, a.value.cwiseQuotient(b.value), a, b);
}

Tensor scale(const Tensor& a, double c) {
  return record1(a.tape, Op::Scale, a.value * c, a, c);
}

Tensor relu(const Tensor& a) {
  return record1(a.tape, Op::Relu, a.value.cwiseMax(0.0), a);
}

Tensor step(const Tensor& a) {
  Matrix r = (a.value.array() > 0.0).cast<double>();
  return record1(a.tape, Op::Step, std::move(r), a);
}

Tensor exp(const Tensor& a) {
  return record1(a.tape, Op::Exp, a.value.array().exp(), a);
}

Tensor clamp_floor(const Tensor& a, double c) {
  return record1(a.tape, Op::ClampFloor, a.value.cwiseMax(c), a, c);
}

Tensor log(const Tensor& a) {
  Tensor clamped = clamp_floor(a, log_floor());
  return record1(clamped.tape, Op::Log, clamped.value.array().log(), clamped);
}

Tensor row_sum(const Tensor& a) {
  return record1(a.tape, Op::RowSum, a.value.rowwise().sum(), a);
}

Tensor col_sum(const Tensor& a) {
  return record1(a.tape, Op::ColSum, a.value.colwise().sum(), a);
}

Tensor sum(const Tensor& a) {
  Matrix r(1, 1);
  r(0, 0) = a.value.sum();
  return record1(a.tape, Op::SumAll, std::move(r), a);
}

Tensor row_max(const Tensor& a) {
  return record1(a.tape, Op::RowMax, a.value.rowwise().maxCoeff(), a);
}

Tensor broadcast_col(const Tensor& v, Eigen::Index n) {
  if (v.cols() != 1) shape_fail("broadcast_col", v, v);
  return record1(v.tape, Op::BroadcastCol, v.value.replicate(1, n), v);
}

Tensor broadcast_row(const Tensor& v, Eigen::Index m) {
  if (v.rows() != 1) shape_fail("broadcast_row", v, v);
  return record1(v.tape, Op::BroadcastRow, v.value.replicate(m, 1), v);
}

Tensor select_cols(const Tensor& a, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != a.rows())
    throw ShapeError("select_cols: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(a.rows()) + " rows");
  Matrix r(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= a.cols())
      throw std::out_of_range("select_cols: label " + std::to_string(y) +
                              " out of range [0, " + std::to_string(a.cols()) +
                              ") at row " + std::to_string(i));
    r(i, 0) = a.value(i, y);
  }
  return record1(a.tape, Op::SelectCols, std::move(r), a, 0.0, labels);
}

Tensor softmax(const Tensor& z) {
  Tensor shifted = sub(z, broadcast_col(row_max(z), z.cols()));
  Tensor e = exp(shifted);
  return div(e, broadcast_col(row_sum(e), z.cols()));
}

Tensor log_softmax(const Tensor& z) {
  Tensor shifted = sub(z, broadcast_col(row_max(z), z.cols()));
  Tensor lse = log(row_sum(exp(shifted)));
  return sub(shifted, broadcast_col(lse, z.cols()));
}

Tensor mean_all(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.rows() * a.cols()));
}

Tensor nll_from_probs(const Tensor& probs, const std::vector<int>& labels) {
  Tensor picked = select_cols(probs, labels);
  return scale(sum(log(picked)), -1.0 / static_cast<double>(probs.rows()));
}

Tensor squared_error(const Tensor& a, const Tensor& b) {
  Tensor d = sub(a, b);
  return mean_all(mul(d, d));
}

Tensor detach(const Tensor& a) { return Tensor(a.value); }

std::vector<Tensor> backward(const Tensor& loss, const std::vector<Tensor>& wrt,
                             bool build_graph) {
  if (!loss.tracked())
    throw std::invalid_argument("backward: loss is not on a tape");
  if (loss.rows() != 1 || loss.cols() != 1)
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss));
  Tape* t = loss.tape;
  for (const Tensor& w : wrt)
    if (!w.tracked() || w.tape != t)
      throw std::invalid_argument("backward: wrt tensor not tracked on the loss tape");

  const int top = loss.node;
  std::vector<std::optional<Tensor>> adj(static_cast<std::size_t>(top) + 1);
  Matrix one(1, 1);
  one(0, 0) = 1.0;
  adj[static_cast<std::size_t>(top)] = Tensor(one);

  // Handle to a recorded node: tracked when the gradient graph is kept,
  // otherwise a plain value so the sweep adds no tape nodes.
  auto handle = [&](int id) {
    return build_graph ? Tensor(t->node(id).value, t, id) : Tensor(t->node(id).value);
  };
  auto acc = [&](int id, const Tensor& contrib) {
    if (id < 0) return;
    const Op op = t->node(id).op;
    if (op == Op::Constant || op == Op::Step || op == Op::RowMax) return;
    auto& slot = adj[static_cast<std::size_t>(id)];
    slot = slot ? add(*slot, contrib) : contrib;
  };

  for (int i = top; i >= 0; --i) {
    if (!adj[static_cast<std::size_t>(i)]) continue;
    // Copy: accumulation appends nodes, which may reallocate the tape.
    const TapeNode nd = t->node(i);
    const Tensor g = *adj[static_cast<std::size_t>(i)];
    const int pa = nd.parents[0];
    const int pb = nd.parents[1];
    switch (nd.op) {
      case Op::Leaf:
      case Op::Constant:
      case Op::Step:
      case Op::RowMax:
        break;
      case Op::MatMul:
        acc(pa, matmul(g, transpose(handle(pb))));
        acc(pb, matmul(transpose(handle(pa)), g));
        break;
      case Op::Transpose:
        acc(pa, transpose(g));
        break;
      case Op::Add:
        acc(pa, g);
        acc(pb, g);
        break;
      case Op::AddRowVec:
        acc(pa, g);
        acc(pb, col_sum(g));
        break;
      case Op::AddScalar:
        acc(pa, g);
        break;
      case Op::Sub:
        acc(pa, g);
        acc(pb, neg(g));
        break;
      case Op::Neg:
        acc(pa, neg(g));
        break;
      case Op::Mul:
        acc(pa, mul(g, handle(pb)));
        acc(pb, mul(g, handle(pa)));
        break;
      case Op::Div: {
        Tensor b = handle(pb);
        acc(pa, div(g, b));
        acc(pb, neg(div(mul(g, handle(pa)), mul(b, b))));
        break;
      }
      case Op::Scale:
        acc(pa, scale(g, nd.scalar));
        break;
      case Op::Relu:
        acc(pa, mul(g, step(handle(pa))));
        break;
      case Op::Exp:
        acc(pa, mul(g, handle(i)));
        break;
      case Op::Log:
        acc(pa, div(g, handle(pa)));
        break;
      case Op::ClampFloor:
        acc(pa, mul(g, step(add_scalar(handle(pa), -nd.scalar))));
        break;
      case Op::RowSum:
        acc(pa, broadcast_col(g, t->node(pa).value.cols()));
        break;
      case Op::ColSum:
        acc(pa, broadcast_row(g, t->node(pa).value.rows()));
        break;
      case Op::SumAll:
        acc(pa, broadcast_row(broadcast_col(g, t->node(pa).value.cols()),
                              t->node(pa).value.rows()));
        break;
      case Op::BroadcastCol:
        acc(pa, row_sum(g));
        break;
      case Op::BroadcastRow:
        acc(pa, col_sum(g));
        break;
      case Op::SelectCols: {
        const Matrix& av = t->node(pa).value;
        Matrix onehot = Matrix::Zero(av.rows(), av.cols());
        for (Eigen::Index r = 0; r < av.rows(); ++r)
          onehot(r, nd.indices[static_cast<std::size_t>(r)]) = 1.0;
        acc(pa, mul(broadcast_col(g, av.cols()), Tensor(onehot)));
        break;
      }
    }
  }

  std::vector<Tensor> grads;
  grads.reserve(wrt.size());
  for (const Tensor& w : wrt) {
    auto& slot = adj[static_cast<std::size_t>(w.node)];
    if (slot)
      grads.push_back(*slot);
    else
      grads.push_back(Tensor(Matrix::Zero(w.rows(), w.cols())));
  }
  return grads;
}

}  // namespace cba
