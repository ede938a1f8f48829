#include "cba/model.hpp"

namespace cba {

Tensor backbone_forward(const ModelTensors& m, const Tensor& X) {
  Tensor h = X;
  for (const TensorLayer& layer : m.backbone)
    h = relu(add_rowvec(matmul(h, transpose(layer.W)), layer.b));
  return h;
}

Tensor head_forward(const ModelTensors& m, const Tensor& H) {
  return add_rowvec(matmul(H, transpose(m.head.W)), m.head.b);
}

Tensor cba_forward(const ModelTensors& m, const Tensor& Z) {
  Tensor hidden = relu(add_rowvec(matmul(Z, transpose(m.cba_in.W)), m.cba_in.b));
  Tensor out = add_rowvec(matmul(hidden, transpose(m.cba_out.W)), m.cba_out.b);
  return softmax(add(out, Z));
}

Tensor logits_forward(const ModelTensors& m, const Tensor& X) {
  return head_forward(m, backbone_forward(m, X));
}

Matrix plain_logits(const ParamSet& p, const Matrix& X) {
  Matrix h = X;
  for (const LayerParams& layer : p.backbone)
    h = ((h * layer.W.transpose()).rowwise() + Eigen::RowVectorXd(layer.b.row(0)))
            .cwiseMax(0.0);
  return (h * p.head.W.transpose()).rowwise() + Eigen::RowVectorXd(p.head.b.row(0));
}

std::vector<int> predict(const ParamSet& p, const Matrix& X) {
  std::vector<int> labels;
  if (X.rows() == 0) return labels;
  Matrix Z = plain_logits(p, X);
  labels.reserve(static_cast<std::size_t>(Z.rows()));
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    int best = 0;
    for (Eigen::Index c = 1; c < Z.cols(); ++c)
      if (Z(i, c) > Z(i, best)) best = static_cast<int>(c);
    labels.push_back(best);
  }
  return labels;
}

}  // namespace cba
