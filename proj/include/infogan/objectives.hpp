#pragma once

#include "infogan/autodiff.hpp"
#include "infogan/error.hpp"
#include "infogan/latent.hpp"

namespace infogan {

enum class GanMode { minimax, nonsaturating };

struct GanLosses {
  Var loss_d;
  Var loss_g;
};

/// Generator loss from fake-sample logits.
inline Var generator_loss(Var d_fake, GanMode mode) {
  if (mode == GanMode::minimax) return ops::scale(ops::reduce_mean(ops::softplus(d_fake)), -1.0);
  return ops::reduce_mean(ops::softplus(ops::scale(d_fake, -1.0)));
}

/// Discriminator and generator losses from raw logits.
///
/// -log sigmoid(x) = softplus(-x) and -log(1 - sigmoid(x)) = softplus(x),
/// so no probability is ever formed explicitly.
inline GanLosses gan_losses(Var d_real, Var d_fake, GanMode mode) {
  Var real_term = ops::reduce_mean(ops::softplus(ops::scale(d_real, -1.0)));
  Var fake_term = ops::reduce_mean(ops::softplus(d_fake));
  GanLosses out;
  out.loss_d = ops::add(real_term, fake_term);
  out.loss_g = mode == GanMode::minimax ? ops::scale(fake_term, -1.0) : generator_loss(d_fake, mode);
  return out;
}

struct MiBound {
  Var disc;  // scalar
  Var cont;  // scalar
};

/// Monte-Carlo estimate of the variational bound, per code family:
/// batch mean of log Q(c|x) plus the family's prior entropy.
inline MiBound mi_lower_bound(Tape& tape, const LatentSpec& spec, const QPosteriorParams& q, const LatentBatch& batch) {
  const EntropyReport h = entropy(spec);
  LogQ lq = log_q(tape, spec, q, batch);
  MiBound out;
  out.disc = ops::add(ops::reduce_mean(lq.discrete), tape.constant(Tensor::scalar(h.discrete)));
  out.cont = ops::add(ops::reduce_mean(lq.continuous), tape.constant(Tensor::scalar(h.continuous)));
  return out;
}

struct LossBundle {
  double loss_d = 0.0;
  double loss_g = 0.0;
  double li_disc = 0.0;
  double li_cont = 0.0;
  double lambda_disc = 0.0;
  double lambda_cont = 0.0;
};

struct InfoObjectives {
  Var d_objective;   // minimized by the discriminator step
  Var gq_objective;  // loss_G - lambda_disc * L_I_disc - lambda_cont * L_I_cont
};

inline InfoObjectives infogan_losses(Var loss_d, Var loss_g, Var li_disc, Var li_cont, double lambda_disc,
                                     double lambda_cont) {
  if (!(lambda_disc >= 0.0) || !(lambda_cont >= 0.0)) throw UsageError("infogan_losses: lambda must be non-negative");
  InfoObjectives out;
  out.d_objective = loss_d;
  out.gq_objective =
      ops::sub(ops::sub(loss_g, ops::scale(li_disc, lambda_disc)), ops::scale(li_cont, lambda_cont));
  return out;
}

// D*(x) for fixed G. Test utility.
inline double optimal_discriminator(double p_data, double p_g) {
  if (!(p_data >= 0.0) || !(p_g >= 0.0)) throw DomainError("optimal_discriminator: densities must be non-negative");
  if (p_data == 0.0 && p_g == 0.0) throw DomainError("optimal_discriminator: both densities are zero");
  return p_data / (p_data + p_g);
}

}  // namespace infogan
