#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "infogan/autodiff.hpp"
#include "infogan/error.hpp"
#include "infogan/rng.hpp"
#include "infogan/tensor.hpp"

namespace infogan {

// Bounds applied to the recognition head's log standard deviation.
inline constexpr double kLogSigmaMin = -7.0;
inline constexpr double kLogSigmaMax = 7.0;

struct Categorical {
  std::size_t k = 2;
  std::vector<double> probs;  // length k
  bool operator==(const Categorical&) const = default;
};

struct Uniform {
  double lo = -1.0;
  double hi = 1.0;
  bool operator==(const Uniform&) const = default;
};

struct Gaussian {
  double mean = 0.0;
  double sigma = 1.0;
  bool operator==(const Gaussian&) const = default;
};

/// One independent factor of the latent code.
///
/// A categorical block carries a single category per sample and is fed to
/// the generator one-hot encoded (width k). Continuous blocks may span
/// several dimensions, all sharing the same prior.
struct CodeBlock {
  std::variant<Categorical, Uniform, Gaussian> kind;
  std::size_t dim = 1;

  static CodeBlock categorical(std::size_t k) {
    return CodeBlock{Categorical{k, std::vector<double>(k, 1.0 / static_cast<double>(k))}, 1};
  }
  static CodeBlock categorical(std::vector<double> probs) {
    const std::size_t k = probs.size();
    return CodeBlock{Categorical{k, std::move(probs)}, 1};
  }
  static CodeBlock uniform(double lo, double hi, std::size_t dim = 1) { return CodeBlock{Uniform{lo, hi}, dim}; }
  static CodeBlock gaussian(double mean, double sigma, std::size_t dim = 1) {
    return CodeBlock{Gaussian{mean, sigma}, dim};
  }

  bool is_categorical() const { return std::holds_alternative<Categorical>(kind); }
  std::size_t categories() const { return is_categorical() ? std::get<Categorical>(kind).k : 0; }
  std::size_t encoded_width() const { return is_categorical() ? categories() : dim; }

  void validate() const {
    if (dim == 0) throw UsageError("code block: dim must be positive");
    if (const auto* cat = std::get_if<Categorical>(&kind)) {
      if (cat->k < 2) throw UsageError("code block: categorical needs k >= 2");
      if (cat->probs.size() != cat->k) throw UsageError("code block: categorical probs must have length k");
      if (dim != 1) throw UsageError("code block: categorical blocks have dim 1");
      double total = 0.0;
      for (double p : cat->probs) {
        if (!(p >= 0.0)) throw UsageError("code block: categorical probs must be non-negative");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-12) throw UsageError("code block: categorical probs must sum to 1");
    } else if (const auto* u = std::get_if<Uniform>(&kind)) {
      if (!(u->lo < u->hi)) throw UsageError("code block: uniform needs lo < hi");
    } else if (const auto* g = std::get_if<Gaussian>(&kind)) {
      if (!(g->sigma > 0.0)) throw UsageError("code block: gaussian needs sigma > 0");
    }
  }

  bool operator==(const CodeBlock&) const = default;
};

namespace detail {

inline double parse_double(std::string_view text, std::string_view what) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw UsageError(std::string(what) + ": not a number: '" + std::string(text) + "'");
  return value;
}

inline std::size_t parse_size(std::string_view text, std::string_view what) {
  std::size_t value = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw UsageError(std::string(what) + ": not a non-negative integer: '" + std::string(text) + "'");
  }
  return value;
}

inline std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

// Grammar: cat:K | cat:K:p1,...,pK | unif:lo:hi[:dim] | gauss:mean:sigma[:dim]
inline CodeBlock parse_code_block(std::string_view text) {
  const auto parts = detail::split(text, ':');
  CodeBlock block;
  if (parts[0] == "cat" && (parts.size() == 2 || parts.size() == 3)) {
    const std::size_t k = detail::parse_size(parts[1], "code");
    if (parts.size() == 2) {
      if (k < 2) throw UsageError("code: categorical needs k >= 2");
      block = CodeBlock::categorical(k);
    } else {
      std::vector<double> probs;
      for (auto p : detail::split(parts[2], ',')) probs.push_back(detail::parse_double(p, "code"));
      if (probs.size() != k) throw UsageError("code: expected " + std::to_string(k) + " probabilities");
      block = CodeBlock::categorical(std::move(probs));
    }
  } else if (parts[0] == "unif" && (parts.size() == 3 || parts.size() == 4)) {
    block = CodeBlock::uniform(detail::parse_double(parts[1], "code"), detail::parse_double(parts[2], "code"),
                               parts.size() == 4 ? detail::parse_size(parts[3], "code") : 1);
  } else if (parts[0] == "gauss" && (parts.size() == 3 || parts.size() == 4)) {
    block = CodeBlock::gaussian(detail::parse_double(parts[1], "code"), detail::parse_double(parts[2], "code"),
                                parts.size() == 4 ? detail::parse_size(parts[3], "code") : 1);
  } else {
    throw UsageError("code: cannot parse '" + std::string(text) + "' (expected cat:K, unif:lo:hi or gauss:mean:sigma)");
  }
  block.validate();
  return block;
}

inline std::string format_code_block(const CodeBlock& block) {
  using detail::format_double;
  std::string out;
  if (const auto* cat = std::get_if<Categorical>(&block.kind)) {
    out = "cat:" + std::to_string(cat->k);
    const bool uniform = std::all_of(cat->probs.begin(), cat->probs.end(),
                                     [&](double p) { return p == 1.0 / static_cast<double>(cat->k); });
    if (!uniform) {
      out += ':';
      for (std::size_t i = 0; i < cat->probs.size(); ++i) {
        if (i) out += ',';
        out += format_double(cat->probs[i]);
      }
    }
    return out;
  }
  if (const auto* u = std::get_if<Uniform>(&block.kind)) {
    out = "unif:" + format_double(u->lo) + ":" + format_double(u->hi);
  } else {
    const auto& g = std::get<Gaussian>(block.kind);
    out = "gauss:" + format_double(g.mean) + ":" + format_double(g.sigma);
  }
  if (block.dim != 1) out += ":" + std::to_string(block.dim);
  return out;
}

enum class NoisePrior { normal, uniform };

struct LatentSpec {
  std::vector<CodeBlock> blocks;
  std::size_t noise_dim = 0;
  NoisePrior noise_prior = NoisePrior::normal;

  void validate() const {
    for (const CodeBlock& b : blocks) b.validate();
  }

  std::size_t encoded_dim() const {
    std::size_t total = 0;
    for (const CodeBlock& b : blocks) total += b.encoded_width();
    return total;
  }

  // Width of the generator input: z followed by the encoded codes.
  std::size_t input_dim() const { return noise_dim + encoded_dim(); }

  bool has_categorical() const {
    return std::any_of(blocks.begin(), blocks.end(), [](const CodeBlock& b) { return b.is_categorical(); });
  }
  bool has_continuous() const {
    return std::any_of(blocks.begin(), blocks.end(), [](const CodeBlock& b) { return !b.is_categorical(); });
  }

  bool operator==(const LatentSpec&) const = default;
};

/// Sampled values of one block: category ids for categorical blocks,
/// a B x dim matrix for continuous blocks.
struct BlockSample {
  std::vector<std::size_t> category;
  Tensor value;
};

struct LatentBatch {
  std::size_t batch = 0;
  Tensor z;                         // B x noise_dim (absent when noise_dim == 0)
  std::vector<BlockSample> codes;   // one per spec block
  Tensor c_encoded;                 // B x encoded_dim
};

inline Tensor one_hot(std::span<const std::size_t> ids, std::size_t k) {
  Tensor out({ids.size(), k}, 0.0);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= k) throw UsageError("one_hot: category " + std::to_string(ids[r]) + " out of range");
    out[r * k + ids[r]] = 1.0;
  }
  return out;
}

// Argmax per row; ties resolve to the lowest index.
inline std::vector<std::size_t> argmax_rows(const Tensor& m) {
  const std::size_t rows = m.rows(), cols = m.cols();
  std::vector<std::size_t> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 1; c < cols; ++c) {
      if (m[r * cols + c] > m[r * cols + out[r]]) out[r] = c;
    }
  }
  return out;
}

inline std::vector<std::size_t> decode_one_hot(const Tensor& encoded) { return argmax_rows(encoded); }

// Re-encodes raw block values into the generator's c input.
inline Tensor encode_codes(const LatentSpec& spec, std::span<const BlockSample> codes, std::size_t batch) {
  if (codes.size() != spec.blocks.size()) throw StructuralError("encode_codes: block count mismatch");
  const std::size_t width = spec.encoded_dim();
  if (width == 0) throw StructuralError("encode_codes: spec has no code blocks");
  Tensor out({batch, width}, 0.0);
  std::size_t offset = 0;
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const CodeBlock& block = spec.blocks[b];
    const std::size_t w = block.encoded_width();
    for (std::size_t r = 0; r < batch; ++r) {
      if (block.is_categorical()) {
        const std::size_t id = codes[b].category.at(r);
        if (id >= w) throw UsageError("encode_codes: category out of range");
        out[r * width + offset + id] = 1.0;
      } else {
        for (std::size_t d = 0; d < w; ++d) out[r * width + offset + d] = codes[b].value[r * w + d];
      }
    }
    offset += w;
  }
  return out;
}

inline BlockSample sample_block(const CodeBlock& block, std::size_t batch, Pcg32& rng) {
  BlockSample out;
  if (const auto* cat = std::get_if<Categorical>(&block.kind)) {
    std::discrete_distribution<std::size_t> pick(cat->probs.begin(), cat->probs.end());
    out.category.resize(batch);
    for (auto& id : out.category) id = pick(rng);
    return out;
  }
  out.value = Tensor({batch, block.dim});
  if (const auto* u = std::get_if<Uniform>(&block.kind)) {
    std::uniform_real_distribution<double> dist(u->lo, u->hi);
    for (double& v : out.value.data()) v = dist(rng);
  } else {
    const auto& g = std::get<Gaussian>(block.kind);
    std::normal_distribution<double> dist(g.mean, g.sigma);
    for (double& v : out.value.data()) v = dist(rng);
  }
  return out;
}

inline Tensor sample_noise(const LatentSpec& spec, std::size_t batch, Pcg32& rng) {
  Tensor z({batch, spec.noise_dim});
  if (spec.noise_prior == NoisePrior::normal) {
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : z.data()) v = dist(rng);
  } else {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& v : z.data()) v = dist(rng);
  }
  return z;
}

/// Draws z from the noise prior and every code block from its own prior.
inline LatentBatch sample_latent(const LatentSpec& spec, std::size_t batch, Pcg32& rng) {
  if (batch == 0) throw UsageError("sample_latent: batch must be positive");
  spec.validate();
  LatentBatch out;
  out.batch = batch;
  if (spec.noise_dim > 0) out.z = sample_noise(spec, batch, rng);
  for (const CodeBlock& block : spec.blocks) out.codes.push_back(sample_block(block, batch, rng));
  if (!spec.blocks.empty()) out.c_encoded = encode_codes(spec, out.codes, batch);
  return out;
}

struct EntropyReport {
  std::vector<double> per_block;
  double discrete = 0.0;
  double continuous = 0.0;
  double total = 0.0;
};

/// Analytic entropy of the code prior in nats (differential for continuous
/// blocks). Blocks are independent, so entropies add.
inline EntropyReport entropy(const LatentSpec& spec) {
  spec.validate();
  EntropyReport report;
  for (const CodeBlock& block : spec.blocks) {
    double h = 0.0;
    if (const auto* cat = std::get_if<Categorical>(&block.kind)) {
      for (double p : cat->probs) {
        if (p > 0.0) h -= p * std::log(p);
      }
      report.discrete += h;
    } else {
      if (const auto* u = std::get_if<Uniform>(&block.kind)) {
        h = std::log(u->hi - u->lo);
      } else {
        const auto& g = std::get<Gaussian>(block.kind);
        h = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * g.sigma * g.sigma);
      }
      h *= static_cast<double>(block.dim);
      report.continuous += h;
    }
    report.per_block.push_back(h);
    report.total += h;
  }
  return report;
}

/// Recognition-network outputs for one block: logits (B x K) for a
/// categorical block; mean and log-std (B x dim each) for a continuous one.
struct QBlockParams {
  Var logits;
  Var mu;
  Var log_sigma;
};

struct QPosteriorParams {
  std::vector<QBlockParams> blocks;
};

struct LogQ {
  Var discrete;    // B x 1
  Var continuous;  // B x 1
};

/// Per-sample log Q(c|x) split by code family.
///
/// Categorical terms are log-softmax at the sampled category; continuous
/// terms are factored Gaussian log densities with sigma = exp(log_sigma).
/// A family with no blocks contributes a zero column.
inline LogQ log_q(Tape& tape, const LatentSpec& spec, const QPosteriorParams& params, const LatentBatch& batch) {
  if (params.blocks.size() != spec.blocks.size() || batch.codes.size() != spec.blocks.size()) {
    throw UsageError("log_q: parameter/batch block structure does not match the latent spec");
  }
  const std::size_t n = batch.batch;
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  Var disc;
  Var cont;
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const CodeBlock& block = spec.blocks[b];
    const QBlockParams& q = params.blocks[b];
    Var term;
    if (block.is_categorical()) {
      if (!q.logits.valid() || q.logits.shape() != Shape{n, block.categories()}) {
        throw UsageError("log_q: logits shape mismatch for block " + std::to_string(b));
      }
      Var mask = tape.constant(one_hot(batch.codes[b].category, block.categories()));
      term = ops::reduce_sum(ops::mul(ops::log_softmax(q.logits), mask), 1);
      disc = disc.valid() ? ops::add(disc, term) : term;
    } else {
      const Shape expect{n, block.dim};
      if (!q.mu.valid() || !q.log_sigma.valid() || q.mu.shape() != expect || q.log_sigma.shape() != expect ||
          batch.codes[b].value.shape() != expect) {
        throw UsageError("log_q: gaussian parameter shape mismatch for block " + std::to_string(b));
      }
      Var c = tape.constant(batch.codes[b].value);
      Var diff = ops::sub(c, q.mu);
      Var inv_var = ops::exp(ops::scale(q.log_sigma, -2.0));
      Var quad = ops::scale(ops::mul(ops::mul(diff, diff), inv_var), -0.5);
      Var offset = tape.constant(Tensor(expect, -half_log_2pi));
      Var density = ops::add(ops::sub(quad, q.log_sigma), offset);
      term = ops::reduce_sum(density, 1);
      cont = cont.valid() ? ops::add(cont, term) : term;
    }
  }
  if (!disc.valid()) disc = tape.constant(Tensor({n, 1}, 0.0));
  if (!cont.valid()) cont = tape.constant(Tensor({n, 1}, 0.0));
  return {disc, cont};
}

}  // namespace infogan
