#pragma once

#include "cba/buffer.hpp"
#include "cba/model.hpp"

namespace cba {

enum class Method { ER, DERPP };

struct MethodConfig {
  Method method = Method::ER;
  bool use_cba = false;
  double alpha = 0.03;  // inner (classifier) learning rate
  double beta = 0.01;   // outer (CBA) learning rate
  double derpp_distill_weight = 0.5;
  double derpp_replay_weight = 0.5;
};

// B^trn = B^t  u  B^buf; the buffer part may be empty early in the stream.
struct TrainBatch {
  Matrix new_x;
  std::vector<int> new_y;
  Matrix buf_x;
  std::vector<int> buf_y;

  Eigen::Index total() const {
    return static_cast<Eigen::Index>(new_y.size() + buf_y.size());
  }
  Matrix combined_x() const;
  std::vector<int> combined_y() const;
};

// Mean cross-entropy over new u buf. With CBA the per-example probability is
// cba_forward(head logits); both routes take log of the softmax output so a
// zero-initialized CBA reproduces the baseline bit for bit.
Tensor er_loss(const ModelTensors& m, const TrainBatch& batch, bool with_cba);

// CE(new) + replay_w * CE(buf) + distill_w * MSE(current head logits on the
// second buffer batch, stored logits). CBA wraps only the CE terms.
Tensor derpp_loss(const ModelTensors& m, const TrainBatch& batch,
                  const BufferBatch& second_buf, bool with_cba,
                  const MethodConfig& cfg);

Tensor method_loss(const ModelTensors& m, const TrainBatch& batch,
                   const BufferBatch* second_buf, bool with_cba,
                   const MethodConfig& cfg);

// Plain SGD on theta; CBA parameters untouched. Returns the loss value and
// throws on a non-finite loss.
double baseline_train_step(ParamSet& params, const TrainBatch& batch,
                           const BufferBatch* second_buf, const MethodConfig& cfg);

}  // namespace cba
