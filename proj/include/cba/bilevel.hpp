#pragma once

#include "cba/methods.hpp"

#include <memory>
#include <optional>

namespace cba {

struct AlignmentRecord {
  long step = 0;
  double inner_product = 0.0;  // <grad_theta L_buf(f), grad_theta L_trn(F)>
  double trn_grad_sq = 0.0;
};

struct DiagRecord {
  long step = 0;
  double inner_loss = 0.0;
  double outer_loss = 0.0;
  double align_ip = 0.0;
  double trn_grad_sq = 0.0;
};

struct BilevelState {
  ParamSet params;
  long step = 0;
  double alpha = 0.03;
  double beta = 0.01;
  // Used by the hypergradient oracle comparisons: the inner step then leaves
  // the backbone untouched, so the restricted omega-path is the whole truth.
  bool freeze_backbone = false;
  std::optional<DiagRecord> last_diag;
};

// The retained one-step unrolling of the inner update. The actual SGD step
// over all of theta is detached; only the head copy (w_tilde, b_tilde) stays
// on the tape as a function of omega.
struct InnerUnroll {
  std::unique_ptr<Tape> tape;
  ModelTensors leaves;
  ParamSet updated;     // theta after the detached step, omega unchanged
  Tensor w_tilde;       // W - alpha * grad_W L_trn, omega-differentiable
  Tensor b_tilde;
  GradMap theta_grads;  // detached grad_theta L_trn values
  double loss_value = 0.0;
};

Tensor inner_loss(const ModelTensors& m, const TrainBatch& trn,
                  const BufferBatch* distill, const MethodConfig& cfg);

InnerUnroll inner_update(const BilevelState& state, const TrainBatch& trn,
                         const BufferBatch* distill, const MethodConfig& cfg);

// Mean cross-entropy of the plain classifier on buffer data, with features
// from the updated backbone and the omega-differentiable head. No CBA here.
Tensor outer_loss(const InnerUnroll& unroll, const Matrix& buf_x,
                  const std::vector<int>& buf_y);

// omega <- omega - beta * grad; theta untouched.
void outer_update(BilevelState& state, const GradMap& omega_grad);

// grad_omega of the outer loss through the retained head-only inner graph.
GradMap hypergradient(const BilevelState& state, const TrainBatch& trn,
                      const BufferBatch* distill, const Matrix& buf_x,
                      const std::vector<int>& buf_y, const MethodConfig& cfg);

// Central differences of omega -> outer loss after a fresh one-step inner
// update at the perturbed omega. Pure forward evaluations.
GradMap hypergradient_fd_oracle(const BilevelState& state, const TrainBatch& trn,
                                const BufferBatch* distill, const Matrix& buf_x,
                                const std::vector<int>& buf_y,
                                const MethodConfig& cfg, double epsilon);

AlignmentRecord gradient_alignment(const ParamSet& params, const TrainBatch& trn,
                                   const BufferBatch* distill,
                                   const TrainBatch& buf, const MethodConfig& cfg);

// Per-step RNG streams, derived per (seed, step, purpose) so that a CBA run
// and its baseline consume identical draws from the shared streams.
struct StepRngs {
  Rng inner;
  Rng outer;
  Rng reservoir;
};
StepRngs make_step_rngs(std::uint64_t buffer_seed, long step);

struct NewBatch {
  Matrix x;
  std::vector<int> y;
  std::vector<long> stream_index;
};

// One full bi-level step: sample B_buf, inner loss + update, fresh B_buf,
// outer loss, hypergradient, outer update, then reservoir-insert the new
// batch. With an empty buffer it degrades to a baseline step on the new
// batch alone. A non-finite hypergradient skips the outer update.
void cba_train_step(BilevelState& state, const NewBatch& batch, MemoryBuffer& buffer,
                    StepRngs& rngs, const MethodConfig& cfg, int buf_batch_size,
                    bool record_diag);

// Shared with the baseline path so both consume the same RNG streams.
void baseline_stream_step(ParamSet& params, const NewBatch& batch,
                          MemoryBuffer& buffer, StepRngs& rngs,
                          const MethodConfig& cfg, int buf_batch_size);

}  // namespace cba
