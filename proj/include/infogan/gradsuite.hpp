#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "infogan/autodiff.hpp"
#include "infogan/gradcheck.hpp"
#include "infogan/latent.hpp"
#include "infogan/models.hpp"
#include "infogan/objectives.hpp"
#include "infogan/rng.hpp"

namespace infogan {

struct GradCase {
  std::string name;
  LossBuilder build;
  std::vector<Tensor> params;
};

namespace detail {

inline Tensor random_tensor(Shape shape, Pcg32& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape), 0.0);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

// Values bounded away from `kink` by at least `margin`, so a finite
// difference never straddles a non-differentiable point.
inline Tensor away_from(Tensor t, double kink, double margin) {
  for (double& v : t.data()) {
    if (std::abs(v - kink) < margin) v = v < kink ? kink - margin : kink + margin;
  }
  return t;
}

// Contracts any output with fixed random weights into a scalar.
inline Var project(Tape& tape, Var y, const Tensor& weights) { return ops::reduce_sum(ops::mul(y, tape.constant(weights))); }

}  // namespace detail

/// One grad-check case per catalogue op plus composite cases (GAN losses,
/// Gaussian Q log-likelihood, and the full InfoGAN objective on a tiny net).
/// Inputs are drawn from `seed`.
inline std::vector<GradCase> gradient_cases(std::uint64_t seed) {
  using detail::project;
  using detail::random_tensor;
  Pcg32 rng = make_stream(seed, Stream::eval);
  std::vector<GradCase> cases;
  const std::size_t b = 3, f = 4;

  auto unary = [&](std::string name, Tensor x, auto fn, Shape out = {}) {
    Tensor w = random_tensor(out.empty() ? x.shape() : out, rng);
    cases.push_back({std::move(name),
                     [w, fn](Tape& t, std::span<const Var> p) { return project(t, fn(p[0]), w); },
                     {std::move(x)}});
  };
  auto binary = [&](std::string name, Tensor x, Tensor y, Shape out, auto fn) {
    Tensor w = random_tensor(std::move(out), rng);
    cases.push_back({std::move(name),
                     [w, fn](Tape& t, std::span<const Var> p) { return project(t, fn(p[0], p[1]), w); },
                     {std::move(x), std::move(y)}});
  };

  binary("matmul", random_tensor({b, f}, rng), random_tensor({f, 2}, rng), {b, 2},
         [](Var x, Var y) { return ops::matmul(x, y); });
  binary("add", random_tensor({b, f}, rng), random_tensor({b, f}, rng), {b, f},
         [](Var x, Var y) { return ops::add(x, y); });
  binary("add_broadcast", random_tensor({b, f}, rng), random_tensor({f}, rng), {b, f},
         [](Var x, Var y) { return ops::add(x, y); });
  binary("sub", random_tensor({b, f}, rng), random_tensor({f}, rng), {b, f},
         [](Var x, Var y) { return ops::sub(x, y); });
  binary("mul", random_tensor({b, f}, rng), random_tensor({b, f}, rng), {b, f},
         [](Var x, Var y) { return ops::mul(x, y); });
  unary("scale", random_tensor({b, f}, rng), [](Var x) { return ops::scale(x, -2.5); });
  unary("relu", detail::away_from(random_tensor({b, f}, rng), 0.0, 1e-3), [](Var x) { return ops::relu(x); });
  unary("lrelu", detail::away_from(random_tensor({b, f}, rng), 0.0, 1e-3),
        [](Var x) { return ops::leaky_relu(x, 0.1); });
  unary("tanh", random_tensor({b, f}, rng, -2.0, 2.0), [](Var x) { return ops::tanh(x); });
  unary("sigmoid", random_tensor({b, f}, rng, -4.0, 4.0), [](Var x) { return ops::sigmoid(x); });
  unary("exp", random_tensor({b, f}, rng, -2.0, 2.0), [](Var x) { return ops::exp(x); });
  unary("log", random_tensor({b, f}, rng, 0.2, 3.0), [](Var x) { return ops::log(x); });
  unary("softplus", random_tensor({b, f}, rng, -5.0, 5.0), [](Var x) { return ops::softplus(x); });
  unary("clamp",
        detail::away_from(detail::away_from(random_tensor({b, f}, rng, -1.5, 1.5), -1.0, 1e-3), 1.0, 1e-3),
        [](Var x) { return ops::clamp(x, -1.0, 1.0); });
  unary("softmax", random_tensor({b, f}, rng, -3.0, 3.0), [](Var x) { return ops::softmax(x); });
  unary("log_softmax", random_tensor({b, f}, rng, -3.0, 3.0), [](Var x) { return ops::log_softmax(x); });
  unary("reduce_sum_rows", random_tensor({b, f}, rng), [](Var x) { return ops::reduce_sum(x, 1); }, {b, 1});
  unary("reduce_mean_rows", random_tensor({b, f}, rng), [](Var x) { return ops::reduce_mean(x, 1); }, {b, 1});
  unary("reduce_mean_all", random_tensor({b, f}, rng), [](Var x) { return ops::reduce_mean(x); }, {1});
  unary("reshape", random_tensor({b, f}, rng), [](Var x) { return ops::reshape(x, {f, b}); }, {f, b});
  binary("concat", random_tensor({b, 2}, rng), random_tensor({b, 3}, rng), {b, 5},
         [](Var x, Var y) { return ops::concat({x, y}, 1); });
  {
    Tensor w = random_tensor({b, f}, rng);
    cases.push_back({"batchnorm_train",
                     [w](Tape& t, std::span<const Var> p) {
                       return project(t, ops::batchnorm_train(p[0], p[1], p[2], 1e-5), w);
                     },
                     {random_tensor({b, f}, rng, -2.0, 2.0), random_tensor({f}, rng, 0.5, 1.5),
                      random_tensor({f}, rng)}});
  }
  {
    Tensor w = random_tensor({b, f}, rng);
    cases.push_back({"batchnorm_eval",
                     [w](Tape& t, std::span<const Var> p) {
                       return project(t, ops::batchnorm_eval(p[0], p[1], p[2], p[3], p[4], 1e-5), w);
                     },
                     {random_tensor({b, f}, rng), random_tensor({f}, rng, 0.5, 1.5), random_tensor({f}, rng),
                      random_tensor({f}, rng), random_tensor({f}, rng, 0.5, 2.0)}});
  }
  {
    Tensor w = random_tensor({b, f}, rng);
    Tensor eps = random_tensor({b, f}, rng, -2.0, 2.0);
    cases.push_back({"gaussian_reparam",
                     [w, eps](Tape& t, std::span<const Var> p) {
                       return project(t, ops::gaussian_reparam(p[0], p[1], t.constant(eps)), w);
                     },
                     {random_tensor({b, f}, rng), random_tensor({b, f}, rng)}});
  }
  for (GanMode mode : {GanMode::minimax, GanMode::nonsaturating}) {
    cases.push_back({mode == GanMode::minimax ? "gan_losses_minimax" : "gan_losses_nonsaturating",
                     [mode](Tape&, std::span<const Var> p) {
                       GanLosses l = gan_losses(p[0], p[1], mode);
                       return ops::add(l.loss_d, ops::scale(l.loss_g, 0.7));
                     },
                     {random_tensor({8, 1}, rng, -3.0, 3.0), random_tensor({8, 1}, rng, -3.0, 3.0)}});
  }
  {
    // Gaussian L_I with the code produced by the reparameterized sampler.
    Tensor eps = random_tensor({b, 2}, rng, -2.0, 2.0);
    std::vector<Tensor> params{random_tensor({b, 2}, rng), random_tensor({b, 2}, rng, -1.0, 0.5),
                               random_tensor({b, 2}, rng), random_tensor({b, 2}, rng, -1.0, 0.5)};
    cases.push_back({"gaussian_log_q",
                     [eps](Tape& t, std::span<const Var> p) {
                       Var c = ops::gaussian_reparam(p[0], p[1], t.constant(eps));
                       Var diff = ops::sub(c, p[2]);
                       Var quad = ops::mul(ops::mul(diff, diff), ops::exp(ops::scale(p[3], -2.0)));
                       Var lq = ops::sub(ops::scale(quad, -0.5), p[3]);
                       return ops::reduce_mean(ops::reduce_sum(lq, 1));
                     },
                     std::move(params)});
  }
  {
    // Full objective on a 2-unit net: loss_D + loss_G - L_I terms.
    ModelConfig cfg;
    cfg.latent = LatentSpec{{CodeBlock::categorical(3), CodeBlock::uniform(-1.0, 1.0)}, 2, NoisePrior::normal};
    cfg.image_dim = 4;
    cfg.generator = NetConfig{{2}, Activation::relu, true};
    cfg.trunk = NetConfig{{2, 2}, Activation::leaky_relu, true};
    cfg.q_hidden = 2;
    Pcg32 init = make_stream(seed, Stream::init);
    ModelPair model = ModelPair::init(cfg, init);
    const std::vector<std::string> names = model.trainable_names();
    const std::size_t batch = 6;
    LossBuilder build;
    // Weights are redrawn (larger than the 0.02 init so every path carries
    // signal) until the point is well conditioned: no batchnorm feature with
    // near-zero batch variance and no activation input near its kink.
    for (int attempt = 0;; ++attempt) {
      std::normal_distribution<double> w(0.0, 0.7);
      for (const std::string& name : names) {
        for (double& v : model.at(name).data()) v = w(rng);
      }
      LatentBatch latent = sample_latent(cfg.latent, batch, rng);
      Tensor real = random_tensor({batch, 4}, rng, 0.0, 1.0);
      build = [model, names, latent, real](Tape& t, std::span<const Var> p) {
        ModelPair local = model;
        Forward fwd(t, local, Mode::train, false);
        for (std::size_t i = 0; i < names.size(); ++i) fwd.bind(names[i], p[i]);
        Var fake = gen_forward(fwd, latent);
        DiscQOutput on_fake = disc_q_forward(fwd, fake);
        DiscQOutput on_real = disc_q_forward(fwd, t.constant(real), false);
        GanLosses gan = gan_losses(on_real.d_logit, on_fake.d_logit, GanMode::nonsaturating);
        MiBound bound = mi_lower_bound(t, local.config().latent, on_fake.q, latent);
        InfoObjectives obj = infogan_losses(gan.loss_d, gan.loss_g, bound.disc, bound.cont, 1.0, 0.1);
        return ops::add(obj.d_objective, obj.gq_objective);
      };
      Tape tape;
      std::vector<Var> leaves;
      for (const std::string& name : names) leaves.push_back(tape.parameter(model.entry(name).value));
      build(tape, leaves);
      bool ok = true;
      for (std::size_t i = 0; i < tape.size() && ok; ++i) {
        const Var v{&tape, i};
        const Op op = tape.op(v);
        if (op == Op::batchnorm_train) {
          auto saved = tape.saved(v);
          for (std::size_t c = saved.size() / 2; c < saved.size(); ++c) ok = ok && saved[c] > 1e-2;
        } else if (op == Op::relu || op == Op::leaky_relu) {
          for (double x : tape.value(Var{&tape, tape.inputs(v)[0]}).data()) ok = ok && std::abs(x) > 1e-3;
        }
      }
      if (ok) break;
      if (attempt == 1000) throw UsageError("gradient_cases: no well-conditioned point found for infogan_full");
    }
    std::vector<Tensor> params;
    for (const std::string& name : names) params.push_back(model.at(name));
    cases.push_back({"infogan_full", std::move(build), std::move(params)});
  }
  return cases;
}

struct GradSuiteReport {
  std::map<std::string, double> worst;  // case name -> max relative error over seeds
  double max_error = 0.0;
  std::string worst_case;
};

inline GradSuiteReport run_grad_suite(std::uint64_t first_seed, std::size_t seeds, double step = 1e-6) {
  GradSuiteReport report;
  for (std::uint64_t s = first_seed; s < first_seed + seeds; ++s) {
    for (GradCase& c : gradient_cases(s)) {
      const double err = grad_check(c.build, c.params, step);
      double& slot = report.worst[c.name];
      slot = std::max(slot, err);
      if (err >= report.max_error) {
        report.max_error = err;
        report.worst_case = c.name;
      }
    }
  }
  return report;
}

}  // namespace infogan
