#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "infogan/assignment.hpp"
#include "infogan/autodiff.hpp"
#include "infogan/data_io.hpp"
#include "infogan/error.hpp"
#include "infogan/latent.hpp"
#include "infogan/models.hpp"
#include "infogan/rng.hpp"

namespace infogan {

namespace detail {

struct RunningStats {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return sum / static_cast<double>(n); }
  // Sample standard deviation over sqrt(n).
  double standard_error() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
    return std::sqrt(var / static_cast<double>(n));
  }
};

inline void check_prob_row(const std::vector<double>& row, const std::string& what) {
  double total = 0.0;
  for (double p : row) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError(what + ": entries must be finite and non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError(what + ": row does not sum to 1");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Monte-Carlo bound estimate

struct MiEstimate {
  double disc = 0.0;
  double disc_se = 0.0;
  double cont = 0.0;
  double cont_se = 0.0;
  double h_disc = 0.0;
  double h_cont = 0.0;
  std::size_t samples = 0;
};

/// Scores log Q(c | G(z, c)) on fresh latent draws (eval mode, no
/// statistics updates) and returns the per-family mean of L_I with its
/// standard error.
inline MiEstimate estimate_mi_bound(const ModelPair& model, std::size_t n_samples, Pcg32& rng,
                                    std::size_t chunk = 500) {
  if (n_samples < 100) throw UsageError("estimate_mi_bound: n_samples must be at least 100");
  ModelPair local = model;
  const LatentSpec& spec = local.config().latent;
  const EntropyReport h = entropy(spec);
  detail::RunningStats disc, cont;
  std::size_t done = 0;
  while (done < n_samples) {
    const std::size_t b = std::min(chunk, n_samples - done);
    LatentBatch latent = sample_latent(spec, b, rng);
    Tape tape;
    Forward fwd(tape, local, Mode::eval, false);
    DiscQOutput out = disc_q_forward(fwd, gen_forward(fwd, latent));
    LogQ lq = log_q(tape, spec, out.q, latent);
    for (std::size_t r = 0; r < b; ++r) {
      disc.add(lq.discrete.value()[r] + h.discrete);
      cont.add(lq.continuous.value()[r] + h.continuous);
    }
    done += b;
  }
  return {disc.mean(), disc.standard_error(), cont.mean(), cont.standard_error(), h.discrete, h.continuous, n_samples};
}

// ---------------------------------------------------------------------------
// Two-sided sampling identity

struct LemmaJointSpec {
  std::vector<std::vector<double>> joint;   // P(x, y), |X| x |Y|
  std::vector<std::vector<double>> payoff;  // f(x, y)

  std::size_t nx() const { return joint.size(); }
  std::size_t ny() const { return joint.empty() ? 0 : joint[0].size(); }

  void validate() const {
    if (joint.empty() || joint[0].empty()) throw DomainError("lemma: empty joint");
    double total = 0.0;
    for (std::size_t x = 0; x < nx(); ++x) {
      if (joint[x].size() != ny() || payoff.size() != nx() || payoff[x].size() != ny()) {
        throw DomainError("lemma: joint and payoff tables must share one rectangular shape");
      }
      for (double p : joint[x]) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("lemma: joint entries must be non-negative");
        total += p;
      }
    }
    if (std::abs(total - 1.0) > 1e-12) throw DomainError("lemma: joint does not sum to 1");
  }
};

struct LemmaResult {
  double lhs_exact = 0.0;
  double rhs_exact = 0.0;
  double lhs_mc = 0.0;
  double rhs_mc = 0.0;
  double lhs_se = 0.0;
  double rhs_se = 0.0;
};

/// E_{x, y|x}[f(x, y)] against E_{x, y|x, x'|y}[f(x', y)], exactly by
/// enumeration and by ancestral sampling. Columns y with zero marginal are
/// skipped in the enumeration.
inline LemmaResult verify_lemma(const LemmaJointSpec& spec, std::size_t n_mc, Pcg32& rng) {
  spec.validate();
  const std::size_t nx = spec.nx(), ny = spec.ny();
  std::vector<double> px(nx, 0.0), py(ny, 0.0);
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t y = 0; y < ny; ++y) {
      px[x] += spec.joint[x][y];
      py[y] += spec.joint[x][y];
    }
  }
  LemmaResult out;
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t y = 0; y < ny; ++y) {
      const double p = spec.joint[x][y];
      out.lhs_exact += p * spec.payoff[x][y];
      if (py[y] == 0.0 || p == 0.0) continue;
      double inner = 0.0;
      for (std::size_t x2 = 0; x2 < nx; ++x2) inner += spec.joint[x2][y] / py[y] * spec.payoff[x2][y];
      out.rhs_exact += p * inner;
    }
  }
  if (n_mc == 0) return out;

  std::discrete_distribution<std::size_t> draw_x(px.begin(), px.end());
  std::vector<std::discrete_distribution<std::size_t>> y_given_x, x_given_y(ny);
  for (std::size_t x = 0; x < nx; ++x) {
    if (px[x] > 0.0) {
      y_given_x.emplace_back(spec.joint[x].begin(), spec.joint[x].end());
    } else {
      y_given_x.emplace_back();
    }
  }
  for (std::size_t y = 0; y < ny; ++y) {
    if (py[y] == 0.0) continue;
    std::vector<double> col(nx);
    for (std::size_t x = 0; x < nx; ++x) col[x] = spec.joint[x][y];
    x_given_y[y] = std::discrete_distribution<std::size_t>(col.begin(), col.end());
  }
  detail::RunningStats lhs, rhs;
  for (std::size_t i = 0; i < n_mc; ++i) {
    const std::size_t x = draw_x(rng);
    const std::size_t y = y_given_x[x](rng);
    lhs.add(spec.payoff[x][y]);
    const std::size_t x2 = x_given_y[y](rng);
    rhs.add(spec.payoff[x2][y]);
  }
  out.lhs_mc = lhs.mean();
  out.rhs_mc = rhs.mean();
  out.lhs_se = lhs.standard_error();
  out.rhs_se = rhs.standard_error();
  return out;
}

// Random joint with |X|, |Y| in [1, max_size] and payoffs in [-1, 1].
inline LemmaJointSpec random_lemma_joint(Pcg32& rng, std::size_t max_size = 6) {
  std::uniform_int_distribution<std::size_t> size(1, max_size);
  std::uniform_real_distribution<double> unit(0.0, 1.0), payoff(-1.0, 1.0);
  const std::size_t nx = size(rng), ny = size(rng);
  LemmaJointSpec spec;
  spec.joint.assign(nx, std::vector<double>(ny));
  spec.payoff.assign(nx, std::vector<double>(ny));
  double total = 0.0;
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t y = 0; y < ny; ++y) {
      spec.joint[x][y] = unit(rng);
      total += spec.joint[x][y];
      spec.payoff[x][y] = payoff(rng);
    }
  }
  for (auto& row : spec.joint) {
    for (double& p : row) p /= total;
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Enumerable channel

struct ChannelSpec {
  std::vector<double> prior;                 // P(c), length K
  std::vector<std::vector<double>> channel;  // P(x|c), K x M
  std::vector<std::vector<double>> q;        // Q(c|x), M x K

  void validate() const {
    const std::size_t k = prior.size();
    if (k == 0 || channel.size() != k) throw DomainError("channel: prior and channel table disagree on K");
    detail::check_prob_row(prior, "channel prior");
    const std::size_t m = channel[0].size();
    if (m == 0 || q.size() != m) throw DomainError("channel: Q table must have one row per observation");
    for (const auto& row : channel) {
      if (row.size() != m) throw DomainError("channel: ragged P(x|c) table");
      detail::check_prob_row(row, "channel P(x|c)");
    }
    for (const auto& row : q) {
      if (row.size() != k) throw DomainError("channel: Q rows must have K entries");
      detail::check_prob_row(row, "channel Q(c|x)");
    }
  }
};

struct ChannelReport {
  double mutual_information = 0.0;
  double li = 0.0;
  double gap = 0.0;
  double expected_kl = 0.0;
  bool finite = true;
  std::string diagnostic;
};

/// Exact I(c; x), the variational bound L_I for the given Q, and the gap
/// I - L_I alongside E_x[KL(P(c|x) || Q(c|x))].
inline ChannelReport channel_bound_check(const ChannelSpec& chan) {
  chan.validate();
  const std::size_t k = chan.prior.size(), m = chan.q.size();
  std::vector<double> px(m, 0.0);
  double h_c = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    if (chan.prior[c] > 0.0) h_c -= chan.prior[c] * std::log(chan.prior[c]);
    for (std::size_t x = 0; x < m; ++x) px[x] += chan.prior[c] * chan.channel[c][x];
  }
  ChannelReport out;
  double expected_log_q = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t x = 0; x < m; ++x) {
      const double joint = chan.prior[c] * chan.channel[c][x];
      if (joint == 0.0) continue;
      const double posterior = joint / px[x];
      out.mutual_information += joint * std::log(chan.channel[c][x] / px[x]);
      if (chan.q[x][c] == 0.0) {
        if (out.finite) {
          out.diagnostic = "Q(c=" + std::to_string(c) + "|x=" + std::to_string(x) +
                           ") is zero where the posterior is positive; L_I = -inf";
        }
        out.finite = false;
        continue;
      }
      expected_log_q += joint * std::log(chan.q[x][c]);
      out.expected_kl += joint * std::log(posterior / chan.q[x][c]);
    }
  }
  if (!out.finite) {
    out.li = -std::numeric_limits<double>::infinity();
    out.gap = std::numeric_limits<double>::infinity();
    out.expected_kl = std::numeric_limits<double>::infinity();
    return out;
  }
  out.li = expected_log_q + h_c;
  out.gap = out.mutual_information - out.li;
  return out;
}

// Q(c|x) by Bayes' rule; rows with P(x) = 0 fall back to the prior.
inline std::vector<std::vector<double>> bayes_posterior(const std::vector<double>& prior,
                                                        const std::vector<std::vector<double>>& channel) {
  const std::size_t k = prior.size(), m = channel.at(0).size();
  std::vector<std::vector<double>> q(m, std::vector<double>(k, 0.0));
  for (std::size_t x = 0; x < m; ++x) {
    double px = 0.0;
    for (std::size_t c = 0; c < k; ++c) px += prior[c] * channel[c][x];
    for (std::size_t c = 0; c < k; ++c) q[x][c] = px > 0.0 ? prior[c] * channel[c][x] / px : prior[c];
  }
  return q;
}

// Binary symmetric channel with P(x = c) = accuracy, uniform prior, exact posterior Q.
inline ChannelSpec binary_symmetric_channel(double accuracy) {
  ChannelSpec chan;
  chan.prior = {0.5, 0.5};
  chan.channel = {{accuracy, 1.0 - accuracy}, {1.0 - accuracy, accuracy}};
  chan.q = bayes_posterior(chan.prior, chan.channel);
  return chan;
}

namespace detail {

inline std::vector<double> random_simplex(std::size_t n, Pcg32& rng) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> p(n);
  double total = 0.0;
  for (double& v : p) {
    v = expo(rng) + 1e-3;
    total += v;
  }
  for (double& v : p) v /= total;
  // Push the rounding residue into the largest entry so the row sums to 1 tightly.
  double sum = 0.0;
  for (double v : p) sum += v;
  *std::max_element(p.begin(), p.end()) += 1.0 - sum;
  return p;
}

}  // namespace detail

// Random channel with K, M in [2, max_size] and a random strictly positive Q.
inline ChannelSpec random_channel(Pcg32& rng, std::size_t max_size = 6) {
  std::uniform_int_distribution<std::size_t> size(2, max_size);
  const std::size_t k = size(rng), m = size(rng);
  ChannelSpec chan;
  chan.prior = detail::random_simplex(k, rng);
  for (std::size_t c = 0; c < k; ++c) chan.channel.push_back(detail::random_simplex(m, rng));
  for (std::size_t x = 0; x < m; ++x) chan.q.push_back(detail::random_simplex(k, rng));
  return chan;
}

// ---------------------------------------------------------------------------
// Latent traversal

/// Rows of generated images with one block swept over `values` left to
/// right while z and the other codes stay fixed per row. Categorical values
/// are category ids; continuous values may lie outside the prior. Images
/// are ordered row-major (rows x values.size()).
inline Tensor traversal_images(const ModelPair& model, std::size_t block, const std::vector<double>& values,
                               std::size_t rows, Pcg32& rng) {
  const LatentSpec& spec = model.config().latent;
  if (block >= spec.blocks.size()) {
    throw UsageError("traversal: block index " + std::to_string(block) + " out of range (spec has " +
                     std::to_string(spec.blocks.size()) + " blocks)");
  }
  if (rows == 0 || values.empty()) throw UsageError("traversal: rows and values must be non-empty");
  const CodeBlock& target = spec.blocks[block];
  for (double v : values) {
    if (!std::isfinite(v)) throw UsageError("traversal: sweep values must be finite");
    if (target.is_categorical() &&
        (v < 0.0 || v != std::floor(v) || v >= static_cast<double>(target.categories()))) {
      throw UsageError("traversal: category id " + detail::format_double(v) + " invalid for block " +
                       std::to_string(block));
    }
  }
  const std::size_t cols = values.size(), n = rows * cols;
  LatentBatch base = sample_latent(spec, rows, rng);
  LatentBatch grid;
  grid.batch = n;
  if (spec.noise_dim > 0) grid.z = Tensor({n, spec.noise_dim});
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    BlockSample s;
    if (spec.blocks[b].is_categorical()) {
      s.category.resize(n);
    } else {
      s.value = Tensor({n, spec.blocks[b].dim});
    }
    grid.codes.push_back(std::move(s));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      for (std::size_t d = 0; d < spec.noise_dim; ++d) grid.z.at(i, d) = base.z.at(r, d);
      for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
        const bool swept = b == block;
        if (spec.blocks[b].is_categorical()) {
          grid.codes[b].category[i] = swept ? static_cast<std::size_t>(values[c]) : base.codes[b].category[r];
        } else {
          for (std::size_t d = 0; d < spec.blocks[b].dim; ++d) {
            grid.codes[b].value.at(i, d) = swept ? values[c] : base.codes[b].value.at(r, d);
          }
        }
      }
    }
  }
  grid.c_encoded = encode_codes(spec, grid.codes, n);
  ModelPair local = model;
  Tape tape;
  Forward fwd(tape, local, Mode::eval, false);
  return gen_forward(fwd, grid).value();
}

inline std::vector<double> linspace(double from, double to, std::size_t steps) {
  if (steps == 0) throw UsageError("linspace: steps must be positive");
  if (steps == 1) return {from};
  std::vector<double> out(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    out[i] = from + (to - from) * static_cast<double>(i) / static_cast<double>(steps - 1);
  }
  return out;
}

inline void traversal_grid(const ModelPair& model, std::size_t block, const std::vector<double>& values,
                           std::size_t rows, Pcg32& rng, std::size_t height, std::size_t width,
                           const std::filesystem::path& path) {
  if (height * width != model.config().image_dim) throw UsageError("traversal: image geometry does not match model");
  const Tensor images = traversal_images(model, block, values, rows, rng);
  write_image_grid(images, rows, values.size(), height, width, path);
}

// ---------------------------------------------------------------------------
// Unsupervised categorical classifier

struct ClassifierResult {
  double error_rate = 0.0;
  std::vector<int> assignment;             // category -> class, -1 if unused
  std::vector<std::vector<double>> counts;  // K x classes
  std::size_t matched = 0;
};

/// Scores predicted category ids against labels under the best one-to-one
/// category-to-class matching.
inline ClassifierResult score_categories(const std::vector<std::size_t>& predicted, const std::vector<int>& labels,
                                         std::size_t k, std::size_t num_classes) {
  if (predicted.size() != labels.size() || predicted.empty()) {
    throw UsageError("classifier: predictions and labels must be non-empty and equally long");
  }
  if (k < num_classes) {
    throw UsageError("classifier: block has " + std::to_string(k) + " categories but the data has " +
                     std::to_string(num_classes) + " classes");
  }
  ClassifierResult out;
  out.counts.assign(k, std::vector<double>(num_classes, 0.0));
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes || predicted[i] >= k) {
      throw UsageError("classifier: label or prediction out of range");
    }
    out.counts[predicted[i]][static_cast<std::size_t>(labels[i])] += 1.0;
  }
  const Assignment a = max_weight_assignment(out.counts);
  out.assignment = a.row_to_col;
  out.matched = static_cast<std::size_t>(std::llround(a.total));
  out.error_rate = 1.0 - static_cast<double>(out.matched) / static_cast<double>(predicted.size());
  return out;
}

// Q's categorical logits for `block` on every image (eval mode).
inline Tensor categorical_logits(const ModelPair& model, const Tensor& images, std::size_t block,
                                 std::size_t chunk = 1000) {
  const LatentSpec& spec = model.config().latent;
  if (block >= spec.blocks.size() || !spec.blocks[block].is_categorical()) {
    throw UsageError("classifier: block " + std::to_string(block) + " is not a categorical code");
  }
  const std::size_t n = images.rows(), dim = images.cols(), k = spec.blocks[block].categories();
  ModelPair local = model;
  Tensor out({n, k});
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t b = std::min(chunk, n - start);
    Tensor x({b, dim});
    std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(start * dim), b * dim, x.data().begin());
    Tape tape;
    Forward fwd(tape, local, Mode::eval, false);
    DiscQOutput q = disc_q_forward(fwd, tape.constant(x));
    const Tensor& logits = q.q.blocks[block].logits.value();
    std::copy(logits.data().begin(), logits.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(start * k));
  }
  return out;
}

inline ClassifierResult categorical_classifier_eval(const ModelPair& model, const Dataset& data, std::size_t block) {
  if (data.labels.empty()) throw UsageError("classifier: dataset has no labels");
  const Tensor logits = categorical_logits(model, data.images, block);
  return score_categories(argmax_rows(logits), data.labels, logits.cols(), data.num_classes);
}

}  // namespace infogan
