#include "cba/bilevel.hpp"

#include <cmath>
#include <stdexcept>

namespace cba {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

double plain_ce(const ParamSet& p, const Matrix& x, const std::vector<int>& y) {
  Tensor z(plain_logits(p, x));
  return nll_from_probs(softmax(z), y).scalar();
}

TrainBatch as_train_batch(const NewBatch& batch, const BufferBatch& buf) {
  TrainBatch trn;
  trn.new_x = batch.x;
  trn.new_y = batch.y;
  trn.buf_x = buf.X;
  trn.buf_y = buf.y;
  return trn;
}

std::vector<BufferEntry> to_entries(const NewBatch& batch, const ParamSet& params,
                                    bool with_logits) {
  std::vector<BufferEntry> entries;
  Matrix z;
  if (with_logits) z = plain_logits(params, batch.x);
  for (Eigen::Index i = 0; i < batch.x.rows(); ++i) {
    BufferEntry e;
    e.x = batch.x.row(i).transpose();
    e.y = batch.y[static_cast<std::size_t>(i)];
    e.stream_index = batch.stream_index[static_cast<std::size_t>(i)];
    if (with_logits) e.logits = z.row(i).transpose();
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace

Tensor inner_loss(const ModelTensors& m, const TrainBatch& trn,
                  const BufferBatch* distill, const MethodConfig& cfg) {
  return method_loss(m, trn, distill, /*with_cba=*/true, cfg);
}

InnerUnroll inner_update(const BilevelState& state, const TrainBatch& trn,
                         const BufferBatch* distill, const MethodConfig& cfg) {
  InnerUnroll u;
  u.tape = std::make_unique<Tape>();
  u.leaves = attach(*u.tape, state.params, /*track_theta=*/true, /*track_omega=*/true);
  Tensor loss = inner_loss(u.leaves, trn, distill, cfg);
  u.loss_value = loss.scalar();
  if (!std::isfinite(u.loss_value))
    throw std::runtime_error("inner_update: non-finite inner loss");

  // Keep the gradient graph: the head gradient stays a function of omega.
  std::vector<Tensor> leaves = theta_leaves(u.leaves);
  std::vector<Tensor> grads = backward(loss, leaves, /*build_graph=*/true);
  std::vector<std::string> names = theta_names(state.params);
  GradMap gm;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!all_finite(grads[i].value))
      throw std::runtime_error("inner_update: non-finite gradient for " + names[i]);
    gm[names[i]] = grads[i].value;
  }
  u.theta_grads = gm;

  const Tensor& grad_w = grads[grads.size() - 2];
  const Tensor& grad_b = grads[grads.size() - 1];
  u.w_tilde = sub(u.leaves.head.W, scale(grad_w, state.alpha));
  u.b_tilde = sub(u.leaves.head.b, scale(grad_b, state.alpha));

  u.updated = state.params;
  if (state.freeze_backbone) {
    for (std::size_t k = 0; k < u.updated.backbone.size(); ++k) {
      gm.erase("backbone" + std::to_string(k) + ".W");
      gm.erase("backbone" + std::to_string(k) + ".b");
    }
  }
  apply_update(u.updated, ParamGroup::Theta, gm, state.alpha);
  // The detached head step and the symbolic copy are the same computation.
  u.updated.head.W = u.w_tilde.value;
  u.updated.head.b = u.b_tilde.value;
  return u;
}

Tensor outer_loss(const InnerUnroll& unroll, const Matrix& buf_x,
                  const std::vector<int>& buf_y) {
  if (buf_y.empty()) throw std::invalid_argument("outer_loss: empty buffer batch");
  // Updated-backbone features enter as constants: the omega path through the
  // backbone is deliberately dropped.
  Matrix h = buf_x;
  for (const LayerParams& layer : unroll.updated.backbone)
    h = ((h * layer.W.transpose()).rowwise() + Eigen::RowVectorXd(layer.b.row(0)))
            .cwiseMax(0.0);
  Tensor z = add_rowvec(matmul(Tensor(h), transpose(unroll.w_tilde)), unroll.b_tilde);
  return nll_from_probs(softmax(z), buf_y);
}

void outer_update(BilevelState& state, const GradMap& omega_grad) {
  for (const auto& [name, g] : omega_grad)
    if (!all_finite(g))
      throw std::invalid_argument("outer_update: non-finite gradient for " + name);
  apply_update(state.params, ParamGroup::Omega, omega_grad, state.beta);
}

GradMap hypergradient(const BilevelState& state, const TrainBatch& trn,
                      const BufferBatch* distill, const Matrix& buf_x,
                      const std::vector<int>& buf_y, const MethodConfig& cfg) {
  InnerUnroll unroll = inner_update(state, trn, distill, cfg);
  Tensor loss = outer_loss(unroll, buf_x, buf_y);
  std::vector<Tensor> grads = backward(loss, omega_leaves(unroll.leaves));
  GradMap gm;
  std::vector<std::string> names = omega_names();
  for (std::size_t i = 0; i < names.size(); ++i) gm[names[i]] = grads[i].value;
  return gm;
}

GradMap hypergradient_fd_oracle(const BilevelState& state, const TrainBatch& trn,
                                const BufferBatch* distill, const Matrix& buf_x,
                                const std::vector<int>& buf_y,
                                const MethodConfig& cfg, double epsilon) {
  GradMap omega0 = to_gradmap(state.params, ParamGroup::Omega);
  auto eval = [&](const GradMap& omega) {
    ParamSet p = state.params;
    for_each_param(p, ParamGroup::Omega, [&](const std::string& name, Matrix& v) {
      v = omega.at(name);
    });
    Tape tape;
    ModelTensors m = attach(tape, p, /*track_theta=*/true, /*track_omega=*/false);
    Tensor loss = inner_loss(m, trn, distill, cfg);
    std::vector<Tensor> grads = backward(loss, theta_leaves(m));
    std::vector<std::string> names = theta_names(p);
    GradMap gm;
    for (std::size_t i = 0; i < names.size(); ++i) gm[names[i]] = grads[i].value;
    if (state.freeze_backbone)
      for (std::size_t k = 0; k < p.backbone.size(); ++k) {
        gm.erase("backbone" + std::to_string(k) + ".W");
        gm.erase("backbone" + std::to_string(k) + ".b");
      }
    apply_update(p, ParamGroup::Theta, gm, state.alpha);
    return plain_ce(p, buf_x, buf_y);
  };
  return finite_difference_gradient(eval, omega0, epsilon);
}

AlignmentRecord gradient_alignment(const ParamSet& params, const TrainBatch& trn,
                                   const BufferBatch* distill,
                                   const TrainBatch& buf, const MethodConfig& cfg) {
  AlignmentRecord rec;

  Tape buf_tape;
  ModelTensors mb = attach(buf_tape, params, true, false);
  std::vector<Tensor> g_buf =
      backward(er_loss(mb, buf, /*with_cba=*/false), theta_leaves(mb));

  Tape trn_tape;
  ModelTensors mt = attach(trn_tape, params, true, false);
  std::vector<Tensor> g_trn =
      backward(method_loss(mt, trn, distill, /*with_cba=*/true, cfg), theta_leaves(mt));

  for (std::size_t i = 0; i < g_trn.size(); ++i) {
    rec.inner_product += g_buf[i].value.cwiseProduct(g_trn[i].value).sum();
    rec.trn_grad_sq += g_trn[i].value.squaredNorm();
  }
  return rec;
}

StepRngs make_step_rngs(std::uint64_t buffer_seed, long step) {
  const auto s = static_cast<std::uint64_t>(step);
  return {make_rng(buffer_seed, s, 0), make_rng(buffer_seed, s, 1),
          make_rng(buffer_seed, s, 2)};
}

void cba_train_step(BilevelState& state, const NewBatch& batch, MemoryBuffer& buffer,
                    StepRngs& rngs, const MethodConfig& cfg, int buf_batch_size,
                    bool record_diag) {
  if (batch.y.empty()) throw std::invalid_argument("cba_train_step: empty new batch");

  BufferBatch inner_buf = buffer.sample(buf_batch_size, rngs.inner);
  BufferBatch distill;
  if (cfg.method == Method::DERPP) distill = buffer.sample(buf_batch_size, rngs.inner);
  TrainBatch trn = as_train_batch(batch, inner_buf);

  state.last_diag.reset();
  if (inner_buf.empty()) {
    // First batches of task 1: no outer data yet, plain step on the new batch.
    try {
      baseline_train_step(state.params, trn, &distill, cfg);
    } catch (const std::exception& e) {
      throw std::runtime_error("step " + std::to_string(state.step) + ": " + e.what());
    }
  } else {
    InnerUnroll unroll;
    try {
      unroll = inner_update(state, trn, &distill, cfg);
    } catch (const std::exception& e) {
      throw std::runtime_error("step " + std::to_string(state.step) + ": " + e.what());
    }

    // A larger outer batch keeps the hypergradient estimate low-variance; it
    // only consumes the dedicated outer RNG stream, so baseline runs are
    // unaffected.
    BufferBatch outer_buf = buffer.sample(4 * buf_batch_size, rngs.outer);
    Tensor loss = outer_loss(unroll, outer_buf.X, outer_buf.y);

    if (record_diag) {
      TrainBatch buf_only;
      buf_only.buf_x = outer_buf.X;
      buf_only.buf_y = outer_buf.y;
      AlignmentRecord align =
          gradient_alignment(state.params, trn, &distill, buf_only, cfg);
      DiagRecord d;
      d.step = state.step;
      d.inner_loss = unroll.loss_value;
      d.outer_loss = loss.scalar();
      d.align_ip = align.inner_product;
      d.trn_grad_sq = align.trn_grad_sq;
      state.last_diag = d;
    }

    state.params = unroll.updated;  // theta steps with omega^k values

    std::vector<Tensor> grads = backward(loss, omega_leaves(unroll.leaves));
    GradMap omega_grad;
    std::vector<std::string> names = omega_names();
    bool finite = true;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (!all_finite(grads[i].value)) finite = false;
      omega_grad[names[i]] = grads[i].value;
    }
    if (finite)
      outer_update(state, omega_grad);
    // else: skip the outer step; an online stream cannot be replayed.
  }

  buffer.reservoir_update(
      to_entries(batch, state.params, cfg.method == Method::DERPP), rngs.reservoir);
  ++state.step;
}

void baseline_stream_step(ParamSet& params, const NewBatch& batch,
                          MemoryBuffer& buffer, StepRngs& rngs,
                          const MethodConfig& cfg, int buf_batch_size) {
  BufferBatch inner_buf = buffer.sample(buf_batch_size, rngs.inner);
  BufferBatch distill;
  if (cfg.method == Method::DERPP) distill = buffer.sample(buf_batch_size, rngs.inner);
  TrainBatch trn = as_train_batch(batch, inner_buf);
  baseline_train_step(params, trn, &distill, cfg);
  buffer.reservoir_update(to_entries(batch, params, cfg.method == Method::DERPP),
                          rngs.reservoir);
}

}  // namespace cba
