#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "infogan/autodiff.hpp"
#include "infogan/error.hpp"
#include "infogan/latent.hpp"
#include "infogan/rng.hpp"
#include "infogan/tensor.hpp"

namespace infogan {

enum class Activation { relu, leaky_relu };

/// Hidden widths of a fully connected stack; input and output widths come
/// from the surrounding ModelConfig.
struct NetConfig {
  std::vector<std::size_t> hidden;
  Activation activation = Activation::leaky_relu;
  bool batchnorm = false;

  bool operator==(const NetConfig&) const = default;
};

struct ModelConfig {
  LatentSpec latent;
  std::size_t image_dim = 64;
  NetConfig generator{{128, 256}, Activation::relu, false};
  NetConfig trunk{{256, 128}, Activation::leaky_relu, false};
  std::size_t q_hidden = 64;
  double leaky_rate = 0.1;

  bool operator==(const ModelConfig&) const = default;
};

inline constexpr double kInitStddev = 0.02;
inline constexpr double kBatchnormMomentum = 0.9;
inline constexpr double kBatchnormEps = 1e-5;

enum class ParamGroup { generator, trunk, d_head, q_head };

struct NamedTensor {
  std::string name;
  ParamGroup group = ParamGroup::generator;
  bool trainable = true;  // false for batchnorm running statistics
  Tensor value;
};

/// Generator plus the discriminator/recognition network sharing one trunk.
///
/// Parameters live in one ordered table keyed by dotted names
/// (`gen.fc0.w`, `trunk.bn1.running_mean`, `q_head.block0.logits.b`, ...).
/// The order is fixed by the config, so checkpoints and RNG consumption
/// during initialization are reproducible.
class ModelPair {
 public:
  ModelPair() = default;

  // Weights ~ N(0, 0.02), biases 0, batchnorm scale 1 and shift 0.
  static ModelPair init(const ModelConfig& config, Pcg32& rng) {
    validate(config);
    ModelPair model;
    model.config_ = config;
    std::normal_distribution<double> normal(0.0, kInitStddev);

    auto add_linear = [&](const std::string& prefix, ParamGroup group, std::size_t in, std::size_t out) {
      Tensor w({in, out});
      for (double& v : w.data()) v = normal(rng);
      model.add(prefix + ".w", group, true, std::move(w));
      model.add(prefix + ".b", group, true, Tensor({out}, 0.0));
    };
    auto add_bn = [&](const std::string& prefix, ParamGroup group, std::size_t width) {
      model.add(prefix + ".gamma", group, true, Tensor({width}, 1.0));
      model.add(prefix + ".beta", group, true, Tensor({width}, 0.0));
      model.add(prefix + ".running_mean", group, false, Tensor({width}, 0.0));
      model.add(prefix + ".running_var", group, false, Tensor({width}, 1.0));
    };

    std::size_t width = config.latent.input_dim();
    for (std::size_t i = 0; i < config.generator.hidden.size(); ++i) {
      const std::size_t out = config.generator.hidden[i];
      add_linear("gen.fc" + std::to_string(i), ParamGroup::generator, width, out);
      if (config.generator.batchnorm) add_bn("gen.bn" + std::to_string(i), ParamGroup::generator, out);
      width = out;
    }
    add_linear("gen.out", ParamGroup::generator, width, config.image_dim);

    width = config.image_dim;
    for (std::size_t i = 0; i < config.trunk.hidden.size(); ++i) {
      const std::size_t out = config.trunk.hidden[i];
      add_linear("trunk.fc" + std::to_string(i), ParamGroup::trunk, width, out);
      if (config.trunk.batchnorm && i > 0) add_bn("trunk.bn" + std::to_string(i), ParamGroup::trunk, out);
      width = out;
    }
    const std::size_t features = width;
    add_linear("d_head.out", ParamGroup::d_head, features, 1);

    add_linear("q_head.fc", ParamGroup::q_head, features, config.q_hidden);
    if (config.trunk.batchnorm) add_bn("q_head.bn", ParamGroup::q_head, config.q_hidden);
    for (std::size_t b = 0; b < config.latent.blocks.size(); ++b) {
      const CodeBlock& block = config.latent.blocks[b];
      const std::string prefix = "q_head.block" + std::to_string(b);
      if (block.is_categorical()) {
        add_linear(prefix + ".logits", ParamGroup::q_head, config.q_hidden, block.categories());
      } else {
        add_linear(prefix + ".mu", ParamGroup::q_head, config.q_hidden, block.dim);
        add_linear(prefix + ".log_sigma", ParamGroup::q_head, config.q_hidden, block.dim);
      }
    }
    return model;
  }

  static void validate(const ModelConfig& config) {
    config.latent.validate();
    if (config.latent.blocks.empty()) throw StructuralError("model: latent spec needs at least one code block");
    if (config.image_dim == 0) throw StructuralError("model: image_dim must be positive");
    if (config.generator.hidden.empty()) throw StructuralError("model: generator needs at least one hidden layer");
    if (config.trunk.hidden.empty()) throw StructuralError("model: trunk needs at least one hidden layer");
    for (std::size_t w : config.generator.hidden) {
      if (w == 0) throw StructuralError("model: generator layer width must be positive");
    }
    for (std::size_t w : config.trunk.hidden) {
      if (w == 0) throw StructuralError("model: trunk layer width must be positive");
    }
    if (config.q_hidden == 0) throw StructuralError("model: q_hidden must be positive");
  }

  const ModelConfig& config() const { return config_; }
  std::size_t generator_input_dim() const { return config_.latent.input_dim(); }

  const std::vector<NamedTensor>& entries() const { return entries_; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  NamedTensor& entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw StructuralError("model: no parameter named '" + name + "'");
    return entries_[it->second];
  }
  const NamedTensor& entry(const std::string& name) const { return const_cast<ModelPair*>(this)->entry(name); }

  Tensor& at(const std::string& name) { return entry(name).value; }
  const Tensor& at(const std::string& name) const { return entry(name).value; }

  std::vector<std::string> trainable_names(ParamGroup group) const {
    std::vector<std::string> out;
    for (const auto& e : entries_) {
      if (e.trainable && e.group == group) out.push_back(e.name);
    }
    return out;
  }

  std::vector<std::string> trainable_names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) {
      if (e.trainable) out.push_back(e.name);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& e : entries_) total += e.trainable ? e.value.size() : 0;
    return total;
  }

  // Rebuilds the table from a config and a full set of named tensors
  // (used by checkpoint loading). Names and shapes must match exactly.
  static ModelPair from_entries(const ModelConfig& config, std::vector<std::pair<std::string, Tensor>> tensors) {
    Pcg32 scratch(0, 0);
    ModelPair model = init(config, scratch);
    if (tensors.size() != model.entries_.size()) {
      throw StructuralError("model: expected " + std::to_string(model.entries_.size()) + " tensors, got " +
                            std::to_string(tensors.size()));
    }
    std::set<std::string> seen;
    for (auto& [name, value] : tensors) {
      if (!seen.insert(name).second) throw StructuralError("model: duplicate tensor '" + name + "'");
      NamedTensor& e = model.entry(name);
      if (e.value.shape() != value.shape()) {
        throw StructuralError("model: shape mismatch for '" + name + "': expected " + shape_string(e.value.shape()) +
                              ", got " + shape_string(value.shape()));
      }
      e.value = std::move(value);
    }
    return model;
  }

 private:
  void add(std::string name, ParamGroup group, bool trainable, Tensor value) {
    index_.emplace(name, entries_.size());
    entries_.push_back(NamedTensor{std::move(name), group, trainable, std::move(value)});
  }

  ModelConfig config_;
  std::vector<NamedTensor> entries_;
  std::map<std::string, std::size_t> index_;
};

enum class Mode { train, eval };

/// One forward pass of the model onto a tape.
///
/// Parameters are bound lazily as gradient-tracking leaves the first time a
/// layer asks for them; `bind` lets callers supply their own leaves (the
/// gradient checker does this). In train mode batchnorm uses batch
/// statistics and, when `update_stats` is set, folds them into the model's
/// running averages.
class Forward {
 public:
  Forward(Tape& tape, ModelPair& model, Mode mode, bool update_stats = true)
      : tape_(tape), model_(model), mode_(mode), update_stats_(update_stats) {}

  Tape& tape() { return tape_; }
  ModelPair& model() { return model_; }
  Mode mode() const { return mode_; }

  void bind(const std::string& name, Var v) { bound_[name] = v; }

  Var param(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const NamedTensor& e = model_.entry(name);
    Var v = e.trainable ? tape_.parameter(e.value) : tape_.constant(e.value);
    bound_.emplace(name, v);
    return v;
  }

  // Leaves for every trainable parameter in a group (binding any not yet used).
  std::vector<Var> params(ParamGroup group) {
    std::vector<Var> out;
    for (const std::string& name : model_.trainable_names(group)) out.push_back(param(name));
    return out;
  }

  const std::map<std::string, Var>& bound() const { return bound_; }

  Var linear(const std::string& prefix, Var x) {
    return ops::add(ops::matmul(x, param(prefix + ".w")), param(prefix + ".b"));
  }

  Var batchnorm(const std::string& prefix, Var x) {
    Var gamma = param(prefix + ".gamma");
    Var beta = param(prefix + ".beta");
    if (mode_ == Mode::eval) {
      return ops::batchnorm_eval(x, gamma, beta, param(prefix + ".running_mean"), param(prefix + ".running_var"),
                                 kBatchnormEps);
    }
    Var y = ops::batchnorm_train(x, gamma, beta, kBatchnormEps);
    if (update_stats_) {
      auto saved = tape_.saved(y);
      const std::size_t f = saved.size() / 2;
      const double n = static_cast<double>(x.shape()[0]);
      const double unbias = n > 1 ? n / (n - 1) : 1.0;
      Tensor& rm = model_.at(prefix + ".running_mean");
      Tensor& rv = model_.at(prefix + ".running_var");
      for (std::size_t c = 0; c < f; ++c) {
        rm[c] = kBatchnormMomentum * rm[c] + (1.0 - kBatchnormMomentum) * saved[c];
        rv[c] = kBatchnormMomentum * rv[c] + (1.0 - kBatchnormMomentum) * saved[f + c] * unbias;
      }
    }
    return y;
  }

  Var activate(Var x, Activation act) {
    return act == Activation::relu ? ops::relu(x) : ops::leaky_relu(x, model_.config().leaky_rate);
  }

 private:
  Tape& tape_;
  ModelPair& model_;
  Mode mode_;
  bool update_stats_;
  std::map<std::string, Var> bound_;
};

/// G(z, c): pixels in (0, 1) through a final sigmoid.
inline Var gen_forward(Forward& fwd, Var z, Var c) {
  const ModelConfig& cfg = fwd.model().config();
  const std::size_t batch = c.shape()[0];
  if (c.shape() != Shape{batch, cfg.latent.encoded_dim()}) {
    throw StructuralError("gen_forward: code input " + shape_string(c.shape()) + " does not match encoded width " +
                          std::to_string(cfg.latent.encoded_dim()));
  }
  Var h = c;
  if (cfg.latent.noise_dim > 0) {
    if (!z.valid() || z.shape() != Shape{batch, cfg.latent.noise_dim}) {
      throw StructuralError("gen_forward: noise input does not match noise_dim " + std::to_string(cfg.latent.noise_dim));
    }
    h = ops::concat({z, c}, 1);
  }
  for (std::size_t i = 0; i < cfg.generator.hidden.size(); ++i) {
    h = fwd.linear("gen.fc" + std::to_string(i), h);
    if (cfg.generator.batchnorm) h = fwd.batchnorm("gen.bn" + std::to_string(i), h);
    h = fwd.activate(h, cfg.generator.activation);
  }
  return ops::sigmoid(fwd.linear("gen.out", h));
}

inline Var gen_forward(Forward& fwd, const LatentBatch& batch) {
  Tape& tape = fwd.tape();
  Var z = batch.z.size() > 0 && fwd.model().config().latent.noise_dim > 0 ? tape.constant(batch.z) : Var{};
  return gen_forward(fwd, z, tape.constant(batch.c_encoded));
}

struct DiscQOutput {
  Var d_logit;  // B x 1
  QPosteriorParams q;
  Var features;  // trunk output shared by both heads
};

/// Shared trunk feeding the discriminator head and the recognition head.
/// With `with_q` false the recognition head is not evaluated.
inline DiscQOutput disc_q_forward(Forward& fwd, Var x, bool with_q = true) {
  const ModelConfig& cfg = fwd.model().config();
  if (x.shape().size() != 2 || x.shape()[1] != cfg.image_dim) {
    throw StructuralError("disc_q_forward: input " + shape_string(x.shape()) + " does not match image_dim " +
                          std::to_string(cfg.image_dim));
  }
  Var h = x;
  for (std::size_t i = 0; i < cfg.trunk.hidden.size(); ++i) {
    h = fwd.linear("trunk.fc" + std::to_string(i), h);
    if (cfg.trunk.batchnorm && i > 0) h = fwd.batchnorm("trunk.bn" + std::to_string(i), h);
    h = fwd.activate(h, cfg.trunk.activation);
  }
  DiscQOutput out;
  out.features = h;
  out.d_logit = fwd.linear("d_head.out", h);
  if (!with_q) return out;

  Var q = fwd.linear("q_head.fc", h);
  if (cfg.trunk.batchnorm) q = fwd.batchnorm("q_head.bn", q);
  q = fwd.activate(q, cfg.trunk.activation);
  for (std::size_t b = 0; b < cfg.latent.blocks.size(); ++b) {
    const std::string prefix = "q_head.block" + std::to_string(b);
    QBlockParams params;
    if (cfg.latent.blocks[b].is_categorical()) {
      params.logits = fwd.linear(prefix + ".logits", q);
    } else {
      params.mu = fwd.linear(prefix + ".mu", q);
      params.log_sigma = ops::clamp(fwd.linear(prefix + ".log_sigma", q), kLogSigmaMin, kLogSigmaMax);
    }
    out.q.blocks.push_back(params);
  }
  return out;
}

}  // namespace infogan
