#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "infogan/data_io.hpp"
#include "infogan/error.hpp"
#include "infogan/latent.hpp"
#include "infogan/models.hpp"
#include "infogan/objectives.hpp"

namespace infogan {

enum class BatchnormSetting { automatic, on, off };

/// Everything needed to reproduce a training run.
///
/// Text form: UTF-8, one `key = value` per line, `#` starts a comment.
/// `code` may repeat; the first `code` line replaces the default code list.
/// Defaults reproduce the toy-templates experiment.
struct TrainingConfig {
  std::uint64_t seed = 1;
  std::size_t iterations = 5000;
  std::size_t batch_size = 64;
  double lr_d = 2e-4;
  double lr_g = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lambda_disc = 1.0;
  double lambda_cont = 0.1;
  GanMode gan_mode = GanMode::nonsaturating;

  DatasetKind dataset = DatasetKind::toy;
  std::size_t toy_k = 4;
  std::size_t toy_n = 8192;
  double toy_noise = 0.05;
  std::string mnist_images;
  std::string mnist_labels;
  std::size_t mnist_limit = 10000;

  std::size_t noise_dim = 16;
  NoisePrior noise_prior = NoisePrior::normal;
  std::vector<CodeBlock> codes{CodeBlock::categorical(4), CodeBlock::uniform(-1.0, 1.0)};
  std::vector<std::size_t> gen_layers{128, 256};
  std::vector<std::size_t> trunk_layers{256, 128};
  std::size_t q_hidden = 64;
  BatchnormSetting batchnorm = BatchnormSetting::automatic;

  std::size_t log_every = 1;
  std::string checkpoint;
  std::string metrics;

  LatentSpec latent_spec() const { return LatentSpec{codes, noise_dim, noise_prior}; }

  // `auto` enables batchnorm on both datasets; without it the toy run never
  // picks up the categorical code at the default init scale.
  bool batchnorm_enabled() const { return batchnorm != BatchnormSetting::off; }

  ModelConfig model_config(std::size_t image_dim) const {
    ModelConfig m;
    m.latent = latent_spec();
    m.image_dim = image_dim;
    m.generator = NetConfig{gen_layers, Activation::relu, batchnorm_enabled()};
    m.trunk = NetConfig{trunk_layers, Activation::leaky_relu, batchnorm_enabled()};
    m.q_hidden = q_hidden;
    return m;
  }

  void validate() const {
    if (iterations == 0) throw UsageError("config: iterations must be positive");
    if (batch_size < 2) throw UsageError("config: batch_size must be at least 2");
    if (!(lr_d > 0.0) || !(lr_g > 0.0)) throw UsageError("config: learning rates must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw UsageError("config: adam betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw UsageError("config: epsilon must be positive");
    if (!(lambda_disc >= 0.0) || !(lambda_cont >= 0.0)) throw UsageError("config: lambda must be non-negative");
    if (log_every == 0) throw UsageError("config: log_every must be positive");
    if (codes.empty()) throw UsageError("config: at least one code block is required");
    latent_spec().validate();
    if (dataset == DatasetKind::toy && (toy_k < 2 || toy_k > 4)) throw UsageError("config: toy_k must be 2, 3 or 4");
  }

  static TrainingConfig parse(std::string_view text);
  std::string to_text() const;

  bool operator==(const TrainingConfig&) const = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::size_t> parse_widths(std::string_view text, std::string_view key) {
  std::vector<std::size_t> out;
  if (trim(text).empty()) return out;
  for (auto part : split(text, ',')) {
    const std::size_t w = parse_size(trim(part), key);
    if (w == 0) throw UsageError(std::string(key) + ": layer widths must be positive");
    out.push_back(w);
  }
  return out;
}

inline std::string format_widths(const std::vector<std::size_t>& widths) {
  std::string out;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(widths[i]);
  }
  return out;
}

}  // namespace detail

inline TrainingConfig TrainingConfig::parse(std::string_view text) {
  using namespace detail;
  TrainingConfig cfg;
  bool codes_seen = false;

  auto as_double = [](std::string_view v, std::string_view key) { return parse_double(v, key); };
  auto as_size = [](std::string_view v, std::string_view key) { return parse_size(v, key); };

  const std::map<std::string_view, std::function<void(std::string_view, std::string_view)>> setters{
      {"seed", [&](auto v, auto k) { cfg.seed = as_size(v, k); }},
      {"iterations", [&](auto v, auto k) { cfg.iterations = as_size(v, k); }},
      {"batch_size", [&](auto v, auto k) { cfg.batch_size = as_size(v, k); }},
      {"lr_d", [&](auto v, auto k) { cfg.lr_d = as_double(v, k); }},
      {"lr_g", [&](auto v, auto k) { cfg.lr_g = as_double(v, k); }},
      {"beta1", [&](auto v, auto k) { cfg.beta1 = as_double(v, k); }},
      {"beta2", [&](auto v, auto k) { cfg.beta2 = as_double(v, k); }},
      {"epsilon", [&](auto v, auto k) { cfg.epsilon = as_double(v, k); }},
      {"lambda_disc", [&](auto v, auto k) { cfg.lambda_disc = as_double(v, k); }},
      {"lambda_cont", [&](auto v, auto k) { cfg.lambda_cont = as_double(v, k); }},
      {"gan_mode",
       [&](auto v, auto) {
         if (v == "minimax") {
           cfg.gan_mode = GanMode::minimax;
         } else if (v == "nonsaturating") {
           cfg.gan_mode = GanMode::nonsaturating;
         } else {
           throw UsageError("gan_mode: expected minimax or nonsaturating");
         }
       }},
      {"dataset",
       [&](auto v, auto) {
         if (v == "toy") {
           cfg.dataset = DatasetKind::toy;
         } else if (v == "mnist") {
           cfg.dataset = DatasetKind::mnist;
         } else {
           throw UsageError("dataset: expected toy or mnist");
         }
       }},
      {"toy_k", [&](auto v, auto k) { cfg.toy_k = as_size(v, k); }},
      {"toy_n", [&](auto v, auto k) { cfg.toy_n = as_size(v, k); }},
      {"toy_noise", [&](auto v, auto k) { cfg.toy_noise = as_double(v, k); }},
      {"mnist_images", [&](auto v, auto) { cfg.mnist_images = std::string(v); }},
      {"mnist_labels", [&](auto v, auto) { cfg.mnist_labels = std::string(v); }},
      {"mnist_limit", [&](auto v, auto k) { cfg.mnist_limit = as_size(v, k); }},
      {"noise_dim", [&](auto v, auto k) { cfg.noise_dim = as_size(v, k); }},
      {"noise_prior",
       [&](auto v, auto) {
         if (v == "normal") {
           cfg.noise_prior = NoisePrior::normal;
         } else if (v == "uniform") {
           cfg.noise_prior = NoisePrior::uniform;
         } else {
           throw UsageError("noise_prior: expected normal or uniform");
         }
       }},
      {"code",
       [&](auto v, auto) {
         if (!codes_seen) cfg.codes.clear();
         codes_seen = true;
         cfg.codes.push_back(parse_code_block(v));
       }},
      {"gen_layers", [&](auto v, auto k) { cfg.gen_layers = parse_widths(v, k); }},
      {"trunk_layers", [&](auto v, auto k) { cfg.trunk_layers = parse_widths(v, k); }},
      {"q_hidden", [&](auto v, auto k) { cfg.q_hidden = as_size(v, k); }},
      {"batchnorm",
       [&](auto v, auto) {
         if (v == "auto") {
           cfg.batchnorm = BatchnormSetting::automatic;
         } else if (v == "on") {
           cfg.batchnorm = BatchnormSetting::on;
         } else if (v == "off") {
           cfg.batchnorm = BatchnormSetting::off;
         } else {
           throw UsageError("batchnorm: expected auto, on or off");
         }
       }},
      {"log_every", [&](auto v, auto k) { cfg.log_every = as_size(v, k); }},
      {"checkpoint", [&](auto v, auto) { cfg.checkpoint = std::string(v); }},
      {"metrics", [&](auto v, auto) { cfg.metrics = std::string(v); }},
  };

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no);
    if (eq == std::string_view::npos) throw UsageError(where + ": expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) throw UsageError(where + ": unknown key '" + std::string(key) + "'");
    try {
      it->second(value, key);
    } catch (const UsageError& e) {
      throw UsageError(where + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

inline std::string TrainingConfig::to_text() const {
  using detail::format_double;
  std::ostringstream out;
  out << "seed = " << seed << '\n';
  out << "iterations = " << iterations << '\n';
  out << "batch_size = " << batch_size << '\n';
  out << "lr_d = " << format_double(lr_d) << '\n';
  out << "lr_g = " << format_double(lr_g) << '\n';
  out << "beta1 = " << format_double(beta1) << '\n';
  out << "beta2 = " << format_double(beta2) << '\n';
  out << "epsilon = " << format_double(epsilon) << '\n';
  out << "lambda_disc = " << format_double(lambda_disc) << '\n';
  out << "lambda_cont = " << format_double(lambda_cont) << '\n';
  out << "gan_mode = " << (gan_mode == GanMode::minimax ? "minimax" : "nonsaturating") << '\n';
  out << "dataset = " << (dataset == DatasetKind::toy ? "toy" : "mnist") << '\n';
  out << "toy_k = " << toy_k << '\n';
  out << "toy_n = " << toy_n << '\n';
  out << "toy_noise = " << format_double(toy_noise) << '\n';
  out << "mnist_images = " << mnist_images << '\n';
  out << "mnist_labels = " << mnist_labels << '\n';
  out << "mnist_limit = " << mnist_limit << '\n';
  out << "noise_dim = " << noise_dim << '\n';
  out << "noise_prior = " << (noise_prior == NoisePrior::normal ? "normal" : "uniform") << '\n';
  for (const CodeBlock& block : codes) out << "code = " << format_code_block(block) << '\n';
  out << "gen_layers = " << detail::format_widths(gen_layers) << '\n';
  out << "trunk_layers = " << detail::format_widths(trunk_layers) << '\n';
  out << "q_hidden = " << q_hidden << '\n';
  out << "batchnorm = "
      << (batchnorm == BatchnormSetting::automatic ? "auto" : batchnorm == BatchnormSetting::on ? "on" : "off") << '\n';
  out << "log_every = " << log_every << '\n';
  out << "checkpoint = " << checkpoint << '\n';
  out << "metrics = " << metrics << '\n';
  return out.str();
}

}  // namespace infogan
