#pragma once

#include "cba/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace cba {

using GradMap = std::map<std::string, Matrix>;

struct ModelSpec {
  int input_dim = 16;
  std::vector<int> backbone_widths = {64};
  int class_count = 10;
  int cba_hidden = 256;
  std::uint64_t seed = 0;
};

struct LayerParams {
  Matrix W;  // out x in
  Matrix b;  // 1 x out
};

// theta = backbone + head, omega = cba_in + cba_out.
struct ParamSet {
  std::vector<LayerParams> backbone;
  LayerParams head;     // W: C x d_feat
  LayerParams cba_in;   // W1: H x C
  LayerParams cba_out;  // W2: C x H, zero-initialized

  int feature_dim() const { return static_cast<int>(head.W.cols()); }
  int class_count() const { return static_cast<int>(head.W.rows()); }
};

enum class ParamGroup { Theta, Omega, All };

// Visits parameters in canonical order: backbone<k>.W/.b, head.W/.b,
// cba.W1/.b1/.W2/.b2 (the checkpoint file order).
void for_each_param(ParamSet& p, ParamGroup g,
                    const std::function<void(const std::string&, Matrix&)>& fn);
void for_each_param(const ParamSet& p, ParamGroup g,
                    const std::function<void(const std::string&, const Matrix&)>& fn);

GradMap to_gradmap(const ParamSet& p, ParamGroup g);
void apply_update(ParamSet& p, ParamGroup g, const GradMap& grads, double lr);

// Backbone/head weights from a fan-in-scaled uniform distribution; the CBA
// output layer starts at zero so training begins from the unmodified
// posterior.
ParamSet init_params(const ModelSpec& spec);

// Flat little-endian binary checkpoint: magic "CBA1", then per tensor
// name length (u32), name bytes, rank (u32), dims (u32 each), values (f64).
void save_checkpoint(const ParamSet& p, const std::string& path);
ParamSet load_checkpoint(const std::string& path);

// Parameters as tape tensors. Tracked groups become leaves; the rest stay
// untracked and enter the tape as constants on first use.
struct TensorLayer {
  Tensor W, b;
};
struct ModelTensors {
  std::vector<TensorLayer> backbone;
  TensorLayer head;
  TensorLayer cba_in, cba_out;
};
ModelTensors attach(Tape& tape, const ParamSet& p, bool track_theta, bool track_omega);

std::vector<Tensor> theta_leaves(const ModelTensors& m);
std::vector<Tensor> omega_leaves(const ModelTensors& m);
std::vector<std::string> theta_names(const ParamSet& p);
std::vector<std::string> omega_names();

// Central differences (eval(p+eps) - eval(p-eps)) / 2eps per coordinate.
// The oracle only calls eval; it shares nothing with the tape machinery.
GradMap finite_difference_gradient(
    const std::function<double(const GradMap&)>& eval, const GradMap& params,
    double epsilon);

}  // namespace cba
