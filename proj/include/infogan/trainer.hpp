#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "infogan/autodiff.hpp"
#include "infogan/checkpoint.hpp"
#include "infogan/config.hpp"
#include "infogan/data_io.hpp"
#include "infogan/latent.hpp"
#include "infogan/models.hpp"
#include "infogan/objectives.hpp"
#include "infogan/rng.hpp"

namespace infogan {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update of `param` in place.
inline void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg,
                      std::string_view name = "parameter") {
  if (grad.shape() != param.shape()) {
    throw StructuralError("adam: gradient shape " + shape_string(grad.shape()) + " does not match " +
                          std::string(name) + " " + shape_string(param.shape()));
  }
  for (double g : grad.data()) {
    if (std::isnan(g) || std::isinf(g)) throw NumericError("adam: non-finite gradient for " + std::string(name));
  }
  if (state.t == 0) {
    state.m = Tensor(param.shape(), 0.0);
    state.v = Tensor(param.shape(), 0.0);
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    param[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

struct MetricsRow {
  std::size_t iter = 0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double li_disc = 0.0;
  double li_cont = 0.0;
};

class MetricsTrace {
 public:
  void add(const MetricsRow& row) {
    if (!rows_.empty() && row.iter <= rows_.back().iter) throw UsageError("metrics: iterations must increase");
    rows_.push_back(row);
  }

  const std::vector<MetricsRow>& rows() const { return rows_; }

  // Mean of li_disc over rows with iter > last_iter - window.
  double tail_mean_li_disc(std::size_t window) const {
    if (rows_.empty()) return 0.0;
    const std::size_t last = rows_.back().iter;
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& row : rows_) {
      if (row.iter + window > last) {
        total += row.li_disc;
        ++n;
      }
    }
    return total / static_cast<double>(n);
  }

  std::string to_csv() const {
    std::string out = "iter,loss_d,loss_g,li_disc,li_cont\n";
    char buf[160];
    for (const auto& r : rows_) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", r.iter, r.loss_d, r.loss_g, r.li_disc,
                    r.li_cont);
      out += buf;
    }
    return out;
  }

 private:
  std::vector<MetricsRow> rows_;
};

inline Dataset load_dataset(const TrainingConfig& cfg) {
  if (cfg.dataset == DatasetKind::mnist) {
    if (cfg.mnist_images.empty() || cfg.mnist_labels.empty()) {
      throw IoError("dataset = mnist needs mnist_images and mnist_labels paths in the config");
    }
    return load_mnist_idx(cfg.mnist_images, cfg.mnist_labels, cfg.mnist_limit);
  }
  Pcg32 rng = make_stream(cfg.seed, Stream::dataset);
  return synth_templates(cfg.toy_k, cfg.toy_n, cfg.toy_noise, rng);
}

/// Alternating minimax training.
///
/// Each iteration runs a discriminator step (trunk + D head on loss_D, real
/// and fake batches normalized separately) followed by a generator /
/// recognition step on a fresh latent draw: the generator minimizes
/// loss_G - lambda_disc * L_I_disc - lambda_cont * L_I_cont, while the Q head
/// and shared trunk maximize L_I_disc + L_I_cont. Setting both lambdas to zero
/// gives the plain-GAN baseline whose Q is still trained. Each of the three
/// updates keeps its own Adam moments.
class Trainer {
 public:
  Trainer(TrainingConfig cfg, Dataset data)
      : cfg_(std::move(cfg)),
        data_(std::move(data)),
        spec_(cfg_.latent_spec()),
        data_rng_(make_stream(cfg_.seed, Stream::data)),
        latent_rng_(make_stream(cfg_.seed, Stream::latent)) {
    cfg_.validate();
    if (data_.size() < cfg_.batch_size) throw UsageError("trainer: dataset smaller than one batch");
    Pcg32 init_rng = make_stream(cfg_.seed, Stream::init);
    model_ = ModelPair::init(cfg_.model_config(data_.image_dim()), init_rng);
    order_.resize(data_.size());
    reshuffle();
  }

  const TrainingConfig& config() const { return cfg_; }
  const Dataset& dataset() const { return data_; }
  ModelPair& model() { return model_; }
  const ModelPair& model() const { return model_; }
  const MetricsTrace& trace() const { return trace_; }
  std::size_t iteration() const { return iteration_; }
  // One optimizer slot per parameter; the trunk's slot is stepped by both the D-step and the Q update.
  const AdamState& adam_state(const std::string& name) const { return adam_.at(name); }

  Tensor next_real_batch() {
    const std::size_t b = cfg_.batch_size, dim = data_.image_dim();
    Tensor out({b, dim});
    for (std::size_t r = 0; r < b; ++r) {
      if (cursor_ == order_.size()) reshuffle();
      const std::size_t idx = order_[cursor_++];
      std::copy_n(data_.images.data().begin() + static_cast<std::ptrdiff_t>(idx * dim), dim,
                  out.data().begin() + static_cast<std::ptrdiff_t>(r * dim));
    }
    return out;
  }

  // Discriminator update. Returns loss_D measured before the update.
  double discriminator_step(const Tensor& real) {
    LatentBatch latent = sample_latent(spec_, cfg_.batch_size, latent_rng_);
    Tensor fake;
    {
      Tape gen_tape;
      Forward gen(gen_tape, model_, Mode::train);
      fake = gen_forward(gen, latent).value();
    }
    Tape tape;
    Forward fwd(tape, model_, Mode::train);
    Var d_real = disc_q_forward(fwd, tape.constant(real), false).d_logit;
    Var d_fake = disc_q_forward(fwd, tape.constant(fake), false).d_logit;
    GanLosses losses = gan_losses(d_real, d_fake, cfg_.gan_mode);
    check_finite(losses.loss_d, "loss_D");
    apply(fwd, tape, losses.loss_d, {ParamGroup::trunk, ParamGroup::d_head}, d_config());
    return losses.loss_d.value().item();
  }

  struct GeneratorStepResult {
    double loss_g;
    double li_disc;
    double li_cont;
  };

  GeneratorStepResult generator_step() {
    LatentBatch latent = sample_latent(spec_, cfg_.batch_size, latent_rng_);
    Tape tape;
    Forward fwd(tape, model_, Mode::train);
    Var x = gen_forward(fwd, latent);
    DiscQOutput out = disc_q_forward(fwd, x);
    Var loss_g = generator_loss(out.d_logit, cfg_.gan_mode);
    MiBound bound = mi_lower_bound(tape, spec_, out.q, latent);
    InfoObjectives obj = infogan_losses(loss_g, loss_g, bound.disc, bound.cont, cfg_.lambda_disc, cfg_.lambda_cont);
    Var q_objective = ops::scale(ops::add(bound.disc, bound.cont), -1.0);
    check_finite(loss_g, "loss_G");
    check_finite(bound.disc, "L_I_disc");
    check_finite(bound.cont, "L_I_cont");

    // Both gradient sets are taken before either update is applied.
    std::vector<Var> gen_vars = fwd.params(ParamGroup::generator);
    std::vector<Var> q_vars = fwd.params(ParamGroup::trunk);
    for (Var v : fwd.params(ParamGroup::q_head)) q_vars.push_back(v);
    Gradients gen_grads = tape.backward(obj.gq_objective, gen_vars);
    Gradients q_grads = tape.backward(q_objective, q_vars);
    update(fwd, gen_grads, {ParamGroup::generator}, g_config());
    update(fwd, q_grads, {ParamGroup::trunk, ParamGroup::q_head}, d_config());
    return {loss_g.value().item(), bound.disc.value().item(), bound.cont.value().item()};
  }

  /// One full iteration: D-step then G/Q-step.
  LossBundle step() {
    ++iteration_;
    const Tensor real = next_real_batch();
    const double loss_d = discriminator_step(real);
    const GeneratorStepResult g = generator_step();
    LossBundle bundle{loss_d, g.loss_g, g.li_disc, g.li_cont, cfg_.lambda_disc, cfg_.lambda_cont};
    if (iteration_ % cfg_.log_every == 0) {
      trace_.add({iteration_, bundle.loss_d, bundle.loss_g, bundle.li_disc, bundle.li_cont});
    }
    return bundle;
  }

  void run(const std::function<void(std::size_t, const LossBundle&)>& on_step = {}) {
    while (iteration_ < cfg_.iterations) {
      const LossBundle b = step();
      if (on_step) on_step(iteration_, b);
    }
  }

 private:
  void check_finite(Var loss, const char* what) const {
    if (!std::isfinite(loss.value().item())) {
      throw NumericError(std::string("training diverged: ") + what + " is not finite at iteration " +
                         std::to_string(iteration_));
    }
  }

  AdamConfig d_config() const { return {cfg_.lr_d, cfg_.beta1, cfg_.beta2, cfg_.epsilon}; }
  AdamConfig g_config() const { return {cfg_.lr_g, cfg_.beta1, cfg_.beta2, cfg_.epsilon}; }

  void apply(Forward& fwd, Tape& tape, Var root, std::initializer_list<ParamGroup> groups, const AdamConfig& adam) {
    std::vector<Var> vars;
    for (ParamGroup g : groups) {
      for (Var v : fwd.params(g)) vars.push_back(v);
    }
    update(fwd, tape.backward(root, vars), groups, adam);
  }

  void update(Forward& fwd, const Gradients& grads, std::initializer_list<ParamGroup> groups, const AdamConfig& adam) {
    for (ParamGroup g : groups) {
      for (const std::string& name : model_.trainable_names(g)) {
        adam_step(model_.at(name), grads[fwd.param(name)], adam_[name], adam, name);
      }
    }
  }

  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), data_rng_);
    cursor_ = 0;
  }

  TrainingConfig cfg_;
  Dataset data_;
  LatentSpec spec_;
  ModelPair model_;
  Pcg32 data_rng_;
  Pcg32 latent_rng_;
  std::map<std::string, AdamState> adam_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t iteration_ = 0;
  MetricsTrace trace_;
};

struct TrainResult {
  ModelPair model;
  MetricsTrace trace;
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Runs cfg.iterations steps and writes the metrics CSV and checkpoint when
/// their paths are set.
inline TrainResult train_run(const TrainingConfig& cfg,
                             const std::function<void(std::size_t, const LossBundle&)>& on_step = {}) {
  cfg.validate();
  Trainer trainer(cfg, load_dataset(cfg));
  trainer.run(on_step);
  const Dataset& data = trainer.dataset();
  if (!cfg.metrics.empty()) write_file(cfg.metrics, trainer.trace().to_csv());
  if (!cfg.checkpoint.empty()) save_checkpoint(trainer.model(), cfg, data.height, data.width, cfg.checkpoint);
  return {trainer.model(), trainer.trace(), data.height, data.width};
}

}  // namespace infogan
