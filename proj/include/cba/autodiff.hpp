#pragma once

#include <Eigen/Core>

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace cba {

using Matrix = Eigen::MatrixXd;

class Tape;

// Dense 2-d tensor (row vectors are 1xN, column vectors Nx1), optionally a
// handle to a node on a tape. Untracked tensors are plain values.
struct Tensor {
  Matrix value;
  Tape* tape = nullptr;
  int node = -1;

  Tensor() = default;
  Tensor(Matrix v) : value(std::move(v)) {}  // untracked
  Tensor(Matrix v, Tape* t, int n) : value(std::move(v)), tape(t), node(n) {}

  bool tracked() const { return node >= 0; }
  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
  double scalar() const;
};

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class Op {
  Leaf,
  Constant,
  MatMul,
  Transpose,
  Add,
  AddRowVec,
  AddScalar,
  Sub,
  Neg,
  Mul,
  Div,
  Scale,
  Relu,
  Step,
  Exp,
  Log,        // precondition: input >= clamp floor (see cba::log)
  ClampFloor,
  RowSum,
  ColSum,
  SumAll,
  RowMax,     // detached: no gradient flows through the max
  BroadcastCol,
  BroadcastRow,
  SelectCols,
};

// Append-only record of one forward computation. Parent ids always reference
// earlier nodes, so the tape is acyclic by construction.
struct TapeNode {
  Op op = Op::Leaf;
  std::array<int, 2> parents{-1, -1};
  Matrix value;
  double scalar = 0.0;        // Scale / AddScalar / ClampFloor coefficient
  std::vector<int> indices;   // SelectCols labels
};

class Tape {
 public:
  int append(TapeNode n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }
  const TapeNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }

  Tensor leaf(const Matrix& v);
  Tensor constant(const Matrix& v);

  // Recompute a node's value from its parents; used to check that the tape
  // faithfully captured the forward pass.
  Matrix replay(int id) const;

 private:
  std::vector<TapeNode> nodes_;
};

// log() floors its argument at exp(-700) before taking the logarithm, so
// finite inputs never produce -inf.
inline constexpr double kLogFloorExponent = -700.0;
double log_floor();

// Primitive forward ops. Each records a tape node when any operand is
// tracked; mixing tensors from two different tapes is an error.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& a, const Tensor& v);
Tensor add_scalar(const Tensor& a, double c);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor step(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // clamps, then Op::Log
Tensor clamp_floor(const Tensor& a, double c);
Tensor row_sum(const Tensor& a);
Tensor col_sum(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor row_max(const Tensor& a);
Tensor broadcast_col(const Tensor& v, Eigen::Index n);
Tensor broadcast_row(const Tensor& v, Eigen::Index m);
Tensor select_cols(const Tensor& a, const std::vector<int>& labels);

// Composites built from the primitives above.
Tensor softmax(const Tensor& z);
Tensor log_softmax(const Tensor& z);
Tensor mean_all(const Tensor& a);
// -1/n * sum(log(P[i, y_i])) over rows of a row-stochastic P.
Tensor nll_from_probs(const Tensor& probs, const std::vector<int>& labels);
Tensor squared_error(const Tensor& a, const Tensor& b);  // mean over all entries

Tensor detach(const Tensor& a);

// Reverse sweep from a scalar loss. Returns one gradient per wrt tensor, in
// order; a tensor unreachable from the loss gets a zero gradient. With
// build_graph the returned gradients are tracked on the same tape, so a
// second backward through them yields second-order derivatives.
std::vector<Tensor> backward(const Tensor& loss, const std::vector<Tensor>& wrt,
                             bool build_graph = false);

}  // namespace cba
