#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "infogan/assignment.hpp"
#include "infogan/eval.hpp"

using namespace infogan;
namespace fs = std::filesystem;

namespace {

ModelConfig eval_config(std::size_t k = 4) {
  ModelConfig cfg;
  cfg.latent = LatentSpec{{CodeBlock::categorical(k), CodeBlock::uniform(-1.0, 1.0)}, 3, NoisePrior::normal};
  cfg.image_dim = 16;
  cfg.generator = NetConfig{{8}, Activation::relu, true};
  cfg.trunk = NetConfig{{8, 6}, Activation::leaky_relu, true};
  cfg.q_hidden = 5;
  return cfg;
}

ModelPair eval_model(std::uint64_t seed = 1, std::size_t k = 4) {
  Pcg32 rng = make_stream(seed, Stream::init);
  return ModelPair::init(eval_config(k), rng);
}

std::vector<std::vector<double>> random_counts(Pcg32& rng, std::size_t n) {
  std::uniform_int_distribution<int> count(0, 50);
  std::vector<std::vector<double>> w(n, std::vector<double>(n));
  for (auto& row : w) {
    for (double& v : row) v = count(rng);
  }
  return w;
}

}  // namespace

TEST(Assignment, MatchesBruteForceOverAllPermutations) {
  Pcg32 rng = make_stream(10, Stream::eval);
  for (int trial = 0; trial < 5; ++trial) {
    const auto w = random_counts(rng, 10);
    std::vector<int> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    double best = -1.0;
    do {
      double s = 0.0;
      for (std::size_t r = 0; r < 10; ++r) s += w[r][static_cast<std::size_t>(perm[r])];
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const Assignment exact = max_weight_assignment(w);
    EXPECT_EQ(exact.total, best);
    double check = 0.0;
    std::vector<int> used(10, 0);
    for (std::size_t r = 0; r < 10; ++r) {
      ASSERT_GE(exact.row_to_col[r], 0);
      check += w[r][static_cast<std::size_t>(exact.row_to_col[r])];
      EXPECT_EQ(used[static_cast<std::size_t>(exact.row_to_col[r])]++, 0);
    }
    EXPECT_EQ(check, best);
    EXPECT_GE(exact.total, greedy_assignment(w).total);
  }
}

TEST(Assignment, ExactBeatsGreedyOnAdversarialCase) {
  const std::vector<std::vector<double>> w = {{10, 9}, {9, 0}};
  EXPECT_EQ(greedy_assignment(w).total, 10.0);
  EXPECT_EQ(max_weight_assignment(w).total, 18.0);
}

TEST(Assignment, RectangularLeavesRowsUnmatched) {
  const std::vector<std::vector<double>> w = {{1, 5}, {7, 2}, {3, 3}};
  const Assignment a = max_weight_assignment(w);
  EXPECT_EQ(a.total, 12.0);
  EXPECT_EQ(a.row_to_col, (std::vector<int>{1, 0, -1}));
  EXPECT_THROW(max_weight_assignment({}), UsageError);
}

TEST(Classifier, PermutedLabelsGiveZeroError) {
  Pcg32 rng = make_stream(3, Stream::eval);
  std::uniform_int_distribution<int> label(0, 9);
  const std::vector<std::size_t> perm = {3, 7, 0, 9, 1, 4, 8, 2, 6, 5};
  std::vector<int> labels(1000);
  std::vector<std::size_t> pred(1000);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = label(rng);
    pred[i] = perm[static_cast<std::size_t>(labels[i])];
  }
  const ClassifierResult r = score_categories(pred, labels, 10, 10);
  EXPECT_EQ(r.error_rate, 0.0);
  for (std::size_t c = 0; c < 10; ++c) EXPECT_EQ(r.assignment[perm[c]], static_cast<int>(c));
}

TEST(Classifier, ErrorIsInvariantUnderClassRelabeling) {
  Pcg32 rng = make_stream(4, Stream::eval);
  std::uniform_int_distribution<int> label(0, 4);
  std::uniform_int_distribution<std::size_t> cat(0, 5);
  std::vector<int> labels(500), relabeled(500);
  std::vector<std::size_t> pred(500);
  const int map[5] = {2, 4, 0, 1, 3};
  for (std::size_t i = 0; i < 500; ++i) {
    labels[i] = label(rng);
    relabeled[i] = map[labels[i]];
    pred[i] = rng() % 3 == 0 ? cat(rng) : static_cast<std::size_t>(labels[i]);
  }
  EXPECT_EQ(score_categories(pred, labels, 6, 5).error_rate, score_categories(pred, relabeled, 6, 5).error_rate);
  EXPECT_THROW(score_categories(pred, labels, 4, 5), UsageError);
  EXPECT_THROW(score_categories({}, {}, 4, 4), UsageError);
}

TEST(Classifier, UniformLogitsAreAtChance) {
  ModelPair m = eval_model(2, 10);
  for (const char* name : {"q_head.block0.logits.w", "q_head.block0.logits.b"}) {
    for (double& v : m.at(name).data()) v = 0.0;
  }
  Pcg32 rng = make_stream(2, Stream::data);
  std::uniform_real_distribution<double> pixel(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, 9);
  Dataset data;
  data.height = 4;
  data.width = 4;
  data.num_classes = 10;
  data.images = Tensor({10000, 16});
  for (double& v : data.images.data()) v = pixel(rng);
  for (int i = 0; i < 10000; ++i) data.labels.push_back(label(rng));
  const ClassifierResult r = categorical_classifier_eval(m, data, 0);
  EXPECT_GE(r.error_rate, 0.5);
  EXPECT_NEAR(r.error_rate, 0.9, 0.02);
}

TEST(Classifier, RejectsContinuousBlockAndUnlabeledData) {
  const ModelPair m = eval_model();
  Dataset data;
  data.images = Tensor({4, 16}, 0.5);
  data.labels = {0, 1, 2, 3};
  data.num_classes = 4;
  EXPECT_THROW(categorical_classifier_eval(m, data, 1), UsageError);
  data.labels.clear();
  EXPECT_THROW(categorical_classifier_eval(m, data, 0), UsageError);
}

TEST(MiEstimate, BelowEntropyCeiling) {
  const ModelPair m = eval_model();
  Pcg32 rng = make_stream(1, Stream::eval);
  const MiEstimate e = estimate_mi_bound(m, 2000, rng);
  EXPECT_NEAR(e.h_disc, std::log(4.0), 1e-15);
  EXPECT_NEAR(e.h_cont, std::log(2.0), 1e-15);
  EXPECT_LE(e.disc, e.h_disc + 3.0 * e.disc_se);
  EXPECT_GT(e.disc_se, 0.0);
  EXPECT_EQ(e.samples, 2000u);
  EXPECT_THROW(estimate_mi_bound(m, 99, rng), UsageError);
}

TEST(MiEstimate, StandardErrorShrinksAsInverseRootN) {
  const ModelPair m = eval_model(5);
  Pcg32 rng = make_stream(5, Stream::eval);
  double small = 0.0, large = 0.0;
  const int trials = 10;
  for (int t = 0; t < trials; ++t) {
    small += estimate_mi_bound(m, 100, rng).cont_se;
    large += estimate_mi_bound(m, 10000, rng).cont_se;
  }
  const double ratio = large / small;
  EXPECT_GE(ratio, 0.08);
  EXPECT_LE(ratio, 0.125);
}

TEST(MiEstimate, LeavesModelUntouchedAndIsDeterministic) {
  const ModelPair m = eval_model();
  const Tensor before = m.at("gen.bn0.running_mean");
  Pcg32 a = make_stream(3, Stream::eval), b = make_stream(3, Stream::eval);
  const MiEstimate x = estimate_mi_bound(m, 300, a), y = estimate_mi_bound(m, 300, b);
  EXPECT_EQ(x.disc, y.disc);
  EXPECT_EQ(x.cont, y.cont);
  EXPECT_TRUE(bitwise_equal(before, m.at("gen.bn0.running_mean")));
}

TEST(Lemma, IndependentUniformBothSidesOne) {
  LemmaJointSpec spec;
  spec.joint = {{0.25, 0.25}, {0.25, 0.25}};
  spec.payoff = {{0.0, 1.0}, {1.0, 2.0}};
  Pcg32 rng = make_stream(1, Stream::eval);
  const LemmaResult r = verify_lemma(spec, 0, rng);
  EXPECT_NEAR(r.lhs_exact, 1.0, 1e-15);
  EXPECT_NEAR(r.rhs_exact, 1.0, 1e-15);
}

TEST(Lemma, CorrelatedJointExactSidesAgree) {
  LemmaJointSpec spec;
  spec.joint = {{0.4, 0.1}, {0.1, 0.4}};
  spec.payoff = {{0.3, -1.7}, {2.5, 0.9}};
  Pcg32 rng = make_stream(7, Stream::eval);
  const LemmaResult r = verify_lemma(spec, 100000, rng);
  // Oracle: enumerate x, y ~ P(y|x), x' ~ P(x'|y).
  double lhs = 0.0, rhs = 0.0;
  const double py[2] = {0.5, 0.5};
  for (int x = 0; x < 2; ++x) {
    for (int y = 0; y < 2; ++y) {
      lhs += spec.joint[x][y] * spec.payoff[x][y];
      for (int xp = 0; xp < 2; ++xp) rhs += spec.joint[x][y] * spec.joint[xp][y] / py[y] * spec.payoff[xp][y];
    }
  }
  EXPECT_NEAR(r.lhs_exact, lhs, 1e-12);
  EXPECT_NEAR(r.rhs_exact, rhs, 1e-12);
  EXPECT_NEAR(r.lhs_exact, r.rhs_exact, 1e-12);
  EXPECT_LE(std::abs(r.lhs_mc - r.lhs_exact), 3.0 * r.lhs_se);
  EXPECT_LE(std::abs(r.rhs_mc - r.rhs_exact), 3.0 * r.rhs_se);
}

TEST(Lemma, RandomJointsAgreeExactly) {
  Pcg32 rng = make_stream(11, Stream::eval);
  for (int t = 0; t < 500; ++t) {
    const LemmaJointSpec spec = random_lemma_joint(rng);
    const LemmaResult r = verify_lemma(spec, 0, rng);
    ASSERT_NEAR(r.lhs_exact, r.rhs_exact, 1e-12) << t;
  }
}

TEST(Lemma, ZeroMarginalColumnIsSkipped) {
  LemmaJointSpec spec;
  spec.joint = {{0.5, 0.0}, {0.5, 0.0}};
  spec.payoff = {{1.0, 100.0}, {3.0, -100.0}};
  Pcg32 rng = make_stream(1, Stream::eval);
  const LemmaResult r = verify_lemma(spec, 1000, rng);
  EXPECT_NEAR(r.lhs_exact, 2.0, 1e-15);
  EXPECT_NEAR(r.rhs_exact, 2.0, 1e-15);
  spec.joint[0][0] = 0.6;
  EXPECT_THROW(verify_lemma(spec, 0, rng), DomainError);
}

TEST(Channel, BinarySymmetricChannelIsTight) {
  const ChannelReport r = channel_bound_check(binary_symmetric_channel(0.9));
  const double oracle = std::log(2.0) + 0.9 * std::log(0.9) + 0.1 * std::log(0.1);
  EXPECT_NEAR(r.mutual_information, oracle, 1e-15);
  EXPECT_NEAR(r.mutual_information, 0.368064, 1e-6);
  EXPECT_NEAR(r.li, r.mutual_information, 1e-12);
  EXPECT_NEAR(r.gap, 0.0, 1e-12);
  EXPECT_TRUE(r.finite);
}

TEST(Channel, PriorAsQGivesZeroBound) {
  ChannelSpec chan = binary_symmetric_channel(0.8);
  chan.q = {{0.5, 0.5}, {0.5, 0.5}};
  const ChannelReport r = channel_bound_check(chan);
  EXPECT_NEAR(r.li, 0.0, 1e-15);
  EXPECT_NEAR(r.gap, r.mutual_information, 1e-15);
}

TEST(Channel, InvertibleChannelAttainsEntropy) {
  ChannelSpec chan;
  chan.prior = {0.2, 0.3, 0.5};
  chan.channel = {{0, 0, 1}, {1, 0, 0}, {0, 1, 0}};
  chan.q = bayes_posterior(chan.prior, chan.channel);
  const ChannelReport r = channel_bound_check(chan);
  const double h = -(0.2 * std::log(0.2) + 0.3 * std::log(0.3) + 0.5 * std::log(0.5));
  EXPECT_NEAR(r.mutual_information, h, 1e-12);
  EXPECT_NEAR(r.li, h, 1e-12);
}

TEST(Channel, RandomChannelsGapIsExpectedKl) {
  Pcg32 rng = make_stream(2, Stream::eval);
  for (int t = 0; t < 1000; ++t) {
    ChannelSpec chan = random_channel(rng);
    const ChannelReport r = channel_bound_check(chan);
    ASSERT_GE(r.gap, -1e-12);
    ASSERT_NEAR(r.gap, r.expected_kl, 1e-12);
    chan.q = bayes_posterior(chan.prior, chan.channel);
    ASSERT_NEAR(channel_bound_check(chan).gap, 0.0, 1e-12);
  }
}

TEST(Channel, ZeroInQIsDiagnosedNotFatal) {
  ChannelSpec chan = binary_symmetric_channel(0.9);
  chan.q = {{1.0, 0.0}, {0.0, 1.0}};
  const ChannelReport r = channel_bound_check(chan);
  EXPECT_FALSE(r.finite);
  EXPECT_TRUE(std::isinf(r.li) && r.li < 0);
  EXPECT_FALSE(r.diagnostic.empty());
  chan.q = {{0.7, 0.2}, {0.5, 0.5}};
  EXPECT_THROW(channel_bound_check(chan), DomainError);
}

TEST(Traversal, LayoutAndDeterminism) {
  const ModelPair m = eval_model();
  const fs::path dir = fs::temp_directory_path() / "infogan_eval";
  fs::create_directories(dir);
  const std::vector<double> sweep = linspace(-2.0, 2.0, 10);
  EXPECT_EQ(sweep.front(), -2.0);
  EXPECT_EQ(sweep.back(), 2.0);
  for (int run = 0; run < 2; ++run) {
    Pcg32 rng = make_stream(9, Stream::eval);
    traversal_grid(m, 1, sweep, 5, rng, 4, 4, dir / ("t" + std::to_string(run) + ".pgm"));
  }
  const std::string a = read_file(dir / "t0.pgm"), b = read_file(dir / "t1.pgm");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.substr(0, 12), "P5\n40 20\n255");
  fs::remove_all(dir);
}

TEST(Traversal, SweepChangesColumnsAndRowsDiffer) {
  const ModelPair m = eval_model(3);
  Pcg32 rng = make_stream(4, Stream::eval);
  const Tensor img = traversal_images(m, 0, {0, 1, 2, 3}, 3, rng);
  ASSERT_EQ(img.shape(), (Shape{12, 16}));
  auto row_of = [&](std::size_t i) { return std::vector<double>(img.data().begin() + i * 16, img.data().begin() + (i + 1) * 16); };
  EXPECT_NE(row_of(0), row_of(1));  // different category, same row
  EXPECT_NE(row_of(0), row_of(4));  // same category, different row
}

TEST(Traversal, ValidatesSweepValues) {
  const ModelPair m = eval_model();
  Pcg32 rng = make_stream(1, Stream::eval);
  EXPECT_THROW(traversal_images(m, 0, {0, 4}, 2, rng), UsageError);
  EXPECT_THROW(traversal_images(m, 0, {0.5}, 2, rng), UsageError);
  EXPECT_THROW(traversal_images(m, 2, {0}, 2, rng), UsageError);
  EXPECT_THROW(traversal_images(m, 1, {}, 2, rng), UsageError);
  EXPECT_NO_THROW(traversal_images(m, 1, {-2.0, 2.0}, 2, rng));
}
