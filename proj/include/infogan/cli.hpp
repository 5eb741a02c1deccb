#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "infogan/checkpoint.hpp"
#include "infogan/config.hpp"
#include "infogan/error.hpp"
#include "infogan/eval.hpp"
#include "infogan/gradsuite.hpp"
#include "infogan/trainer.hpp"

namespace infogan {

namespace detail {

// Accumulates one `key=value` summary line.
class Summary {
 public:
  template <class T>
  Summary& add(const std::string& key, const T& value) {
    if (!line_.empty()) line_ += ' ';
    std::ostringstream os;
    if constexpr (std::is_floating_point_v<T>) {
      os << std::setprecision(10) << value;
    } else {
      os << value;
    }
    line_ += key + "=" + os.str();
    return *this;
  }
  const std::string& str() const { return line_; }

 private:
  std::string line_;
};

inline TrainingConfig load_config_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("config file not found: '" + path + "'");
  return TrainingConfig::parse(read_file(path));
}

// Labeled data a checkpoint was trained on, unless MNIST paths override it.
inline Dataset evaluation_data(const Checkpoint& ck, const std::string& images, const std::string& labels,
                               std::size_t limit) {
  if (!images.empty() || !labels.empty()) {
    if (images.empty() || labels.empty()) throw UsageError("classify: pass both --mnist-images and --mnist-labels");
    return load_mnist_idx(images, labels, limit);
  }
  return load_dataset(ck.config);
}

}  // namespace detail

/// Command-line entry point. Returns 0 on success, 2 on usage errors and 1
/// on runtime failures; writes one summary line to `out` on success.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"InfoGAN desk-scale lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::size_t iterations_override = 0;
  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--iterations", iterations_override, "override the configured iteration count");

  std::string checkpoint;
  std::size_t samples = 10000;
  std::uint64_t seed = 1;
  auto* eval_mi = app.add_subcommand("eval-mi", "Monte-Carlo estimate of the information bound");
  eval_mi->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_mi->add_option("--samples", samples, "latent draws (>= 100)");
  eval_mi->add_option("--seed", seed, "sampling seed");

  std::size_t block = 0, steps = 10, rows = 5;
  double from = -2.0, to = 2.0;
  std::string out_path;
  auto* traverse = app.add_subcommand("traverse", "latent traversal grid as PGM");
  traverse->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  traverse->add_option("--block", block, "code block index");
  auto* from_opt = traverse->add_option("--from", from, "first sweep value (category id for categorical blocks)");
  auto* to_opt = traverse->add_option("--to", to, "last sweep value");
  traverse->add_option("--steps", steps, "sweep points for continuous blocks");
  traverse->add_option("--rows", rows, "independent (z, other codes) draws");
  traverse->add_option("--seed", seed, "sampling seed");
  traverse->add_option("--out", out_path, "output PGM")->required();

  std::string mnist_images, mnist_labels;
  std::size_t limit = 10000;
  auto* classify = app.add_subcommand("classify", "unsupervised classification with a categorical code");
  classify->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  classify->add_option("--mnist-images", mnist_images, "IDX image file (defaults to the checkpoint's toy data)");
  classify->add_option("--mnist-labels", mnist_labels, "IDX label file");
  classify->add_option("--limit", limit, "use the first N records (0 = all)");
  classify->add_option("--block", block, "categorical block index");

  std::size_t n_mc = 100000;
  auto* lemma = app.add_subcommand("verify-lemma", "two-sided sampling identity on a random joint");
  lemma->add_option("--seed", seed, "seed for the joint and the sampler");
  lemma->add_option("--samples", n_mc, "Monte-Carlo draws per side");

  std::size_t trials = 1000;
  auto* channel = app.add_subcommand("channel-check", "exact bound checks on enumerable channels");
  channel->add_option("--seed", seed, "seed for random channels");
  channel->add_option("--trials", trials, "random channels");

  std::size_t seeds = 100;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--seeds", seeds, "seeds per case");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  detail::Summary s;
  try {
    if (*train) {
      TrainingConfig cfg = detail::load_config_file(config_path);
      if (iterations_override > 0) cfg.iterations = iterations_override;
      TrainResult r = train_run(cfg);
      const auto& last = r.trace.rows().back();
      s.add("command", "train").add("iterations", cfg.iterations).add("loss_d", last.loss_d)
          .add("loss_g", last.loss_g).add("li_disc_tail500", r.trace.tail_mean_li_disc(500))
          .add("checkpoint", cfg.checkpoint.empty() ? "-" : cfg.checkpoint)
          .add("metrics", cfg.metrics.empty() ? "-" : cfg.metrics);
    } else if (*eval_mi) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      Pcg32 rng = make_stream(seed, Stream::eval);
      const MiEstimate e = estimate_mi_bound(ck.model, samples, rng);
      s.add("command", "eval-mi").add("samples", e.samples).add("li_disc", e.disc).add("li_disc_se", e.disc_se)
          .add("h_disc", e.h_disc).add("li_cont", e.cont).add("li_cont_se", e.cont_se).add("h_cont", e.h_cont);
    } else if (*traverse) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      const LatentSpec& spec = ck.model.config().latent;
      if (block >= spec.blocks.size()) throw UsageError("traverse: block index out of range");
      std::vector<double> values;
      if (spec.blocks[block].is_categorical()) {
        const double last = static_cast<double>(spec.blocks[block].categories() - 1);
        const double lo = from_opt->count() ? from : 0.0, hi = to_opt->count() ? to : last;
        for (double v = lo; v <= hi; v += 1.0) values.push_back(v);
      } else {
        values = linspace(from, to, steps);
      }
      Pcg32 rng = make_stream(seed, Stream::eval);
      traversal_grid(ck.model, block, values, rows, rng, ck.height, ck.width, out_path);
      s.add("command", "traverse").add("block", block).add("columns", values.size()).add("rows", rows)
          .add("width", values.size() * ck.width).add("height", rows * ck.height).add("out", out_path);
    } else if (*classify) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      const Dataset data = detail::evaluation_data(ck, mnist_images, mnist_labels, limit);
      const ClassifierResult r = categorical_classifier_eval(ck.model, data, block);
      std::string mapping;
      for (std::size_t k = 0; k < r.assignment.size(); ++k) {
        if (k) mapping += ',';
        mapping += std::to_string(r.assignment[k]);
      }
      s.add("command", "classify").add("n", data.size()).add("error_rate", r.error_rate).add("assignment", mapping);
    } else if (*lemma) {
      Pcg32 rng = make_stream(seed, Stream::eval);
      const LemmaJointSpec joint = random_lemma_joint(rng);
      const LemmaResult r = verify_lemma(joint, n_mc, rng);
      s.add("command", "verify-lemma").add("nx", joint.nx()).add("ny", joint.ny()).add("lhs_exact", r.lhs_exact)
          .add("rhs_exact", r.rhs_exact).add("lhs_mc", r.lhs_mc).add("lhs_se", r.lhs_se).add("rhs_mc", r.rhs_mc)
          .add("rhs_se", r.rhs_se);
    } else if (*channel) {
      const ChannelReport bsc = channel_bound_check(binary_symmetric_channel(0.9));
      Pcg32 rng = make_stream(seed, Stream::eval);
      double min_gap = std::numeric_limits<double>::infinity(), max_kl_mismatch = 0.0, max_tight = 0.0;
      for (std::size_t i = 0; i < trials; ++i) {
        ChannelSpec chan = random_channel(rng);
        const ChannelReport r = channel_bound_check(chan);
        min_gap = std::min(min_gap, r.gap);
        max_kl_mismatch = std::max(max_kl_mismatch, std::abs(r.gap - r.expected_kl));
        chan.q = bayes_posterior(chan.prior, chan.channel);
        max_tight = std::max(max_tight, std::abs(channel_bound_check(chan).gap));
      }
      s.add("command", "channel-check").add("bsc_i", bsc.mutual_information).add("bsc_li", bsc.li)
          .add("trials", trials).add("min_gap", min_gap).add("max_gap_kl_mismatch", max_kl_mismatch)
          .add("max_posterior_gap", max_tight);
    } else if (*gradcheck) {
      const GradSuiteReport r = run_grad_suite(1, seeds);
      s.add("command", "gradcheck").add("seeds", seeds).add("cases", r.worst.size())
          .add("max_rel_error", r.max_error).add("worst_case", r.worst_case);
      if (r.max_error > 1e-5) {
        err << "gradient check failed: " << r.worst_case << " max relative error " << r.max_error << "\n";
        out << s.str() << "\n";
        return 1;
      }
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  out << s.str() << "\n";
  return 0;
}

}  // namespace infogan
