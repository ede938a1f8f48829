#pragma once

#include "cba/params.hpp"

namespace cba {

// ReLU MLP features; an empty backbone is the identity.
Tensor backbone_forward(const ModelTensors& m, const Tensor& X);

// Z = H * W^T + b
Tensor head_forward(const ModelTensors& m, const Tensor& H);

// P = softmax(W2 * relu(W1 z + b1) + b2 + z), row-wise, with the skip
// connection adding the raw logits before the softmax.
Tensor cba_forward(const ModelTensors& m, const Tensor& Z);

Tensor logits_forward(const ModelTensors& m, const Tensor& X);

// Argmax over head logits, ties broken toward the lowest class index. Reads
// only backbone and head; the CBA group is never touched on this path.
std::vector<int> predict(const ParamSet& p, const Matrix& X);

Matrix plain_logits(const ParamSet& p, const Matrix& X);

}  // namespace cba
