#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "infogan/gradcheck.hpp"
#include "infogan/models.hpp"

using namespace infogan;

namespace {

ModelConfig small_config(bool batchnorm = false) {
  ModelConfig cfg;
  cfg.latent = LatentSpec{{CodeBlock::categorical(3), CodeBlock::uniform(-1.0, 1.0, 2)}, 4, NoisePrior::normal};
  cfg.image_dim = 16;
  cfg.generator = NetConfig{{8, 12}, Activation::relu, batchnorm};
  cfg.trunk = NetConfig{{12, 6}, Activation::leaky_relu, batchnorm};
  cfg.q_hidden = 5;
  return cfg;
}

}  // namespace

TEST(Init, WeightStatisticsAndZeroBiases) {
  ModelConfig cfg = small_config();
  cfg.generator.hidden = {400};
  Pcg32 rng = make_stream(1, Stream::init);
  const ModelPair m = ModelPair::init(cfg, rng);
  const Tensor& w = m.at("gen.fc0.w");
  double sum = 0.0, sq = 0.0;
  for (double v : w.data()) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(w.size());
  EXPECT_NEAR(sum / n, 0.0, 0.002);
  EXPECT_NEAR(std::sqrt(sq / n), 0.02, 0.002);
  for (double v : m.at("gen.fc0.b").data()) EXPECT_EQ(v, 0.0);
}

TEST(Init, DeterministicGivenSeed) {
  Pcg32 a = make_stream(4, Stream::init), b = make_stream(4, Stream::init), c = make_stream(5, Stream::init);
  const ModelPair x = ModelPair::init(small_config(true), a);
  const ModelPair y = ModelPair::init(small_config(true), b);
  const ModelPair z = ModelPair::init(small_config(true), c);
  ASSERT_EQ(x.entries().size(), y.entries().size());
  for (std::size_t i = 0; i < x.entries().size(); ++i) {
    EXPECT_EQ(x.entries()[i].name, y.entries()[i].name);
    EXPECT_TRUE(bitwise_equal(x.entries()[i].value, y.entries()[i].value));
  }
  EXPECT_FALSE(bitwise_equal(x.at("trunk.fc0.w"), z.at("trunk.fc0.w")));
}

TEST(Init, ParameterLayout) {
  Pcg32 rng = make_stream(1, Stream::init);
  const ModelPair m = ModelPair::init(small_config(true), rng);
  EXPECT_EQ(m.at("gen.fc0.w").shape(), (Shape{4 + 5, 8}));
  EXPECT_EQ(m.at("gen.out.w").shape(), (Shape{12, 16}));
  EXPECT_TRUE(m.contains("gen.bn1.running_var"));
  EXPECT_FALSE(m.contains("trunk.bn0.gamma"));
  EXPECT_TRUE(m.contains("trunk.bn1.gamma"));
  EXPECT_EQ(m.at("q_head.block0.logits.w").shape(), (Shape{5, 3}));
  EXPECT_EQ(m.at("q_head.block1.log_sigma.w").shape(), (Shape{5, 2}));
  EXPECT_FALSE(m.entry("gen.bn0.running_mean").trainable);
  for (const std::string& name : m.trainable_names(ParamGroup::d_head)) EXPECT_EQ(name.rfind("d_head.", 0), 0u);
}

TEST(Init, StructuralErrors) {
  Pcg32 rng = make_stream(1, Stream::init);
  ModelConfig cfg = small_config();
  cfg.generator.hidden.clear();
  EXPECT_THROW(ModelPair::init(cfg, rng), StructuralError);
  cfg = small_config();
  cfg.trunk.hidden = {4, 0};
  EXPECT_THROW(ModelPair::init(cfg, rng), StructuralError);
  cfg = small_config();
  cfg.latent.blocks.clear();
  EXPECT_THROW(ModelPair::init(cfg, rng), StructuralError);
}

TEST(Forward, OutputsFiniteAndInRange) {
  Pcg32 rng = make_stream(2, Stream::init);
  ModelPair m = ModelPair::init(small_config(), rng);
  Pcg32 data = make_stream(2, Stream::data);
  std::uniform_real_distribution<double> pixel(0.0, 1.0);
  Tensor x({1000, 16});
  for (double& v : x.data()) v = pixel(data);
  Tape tape;
  Forward fwd(tape, m, Mode::train);
  const DiscQOutput out = disc_q_forward(fwd, tape.constant(x));
  EXPECT_EQ(out.d_logit.shape(), (Shape{1000, 1}));
  EXPECT_TRUE(out.d_logit.value().all_finite());
  ASSERT_EQ(out.q.blocks.size(), 2u);
  EXPECT_EQ(out.q.blocks[0].logits.shape(), (Shape{1000, 3}));
  for (double v : out.q.blocks[1].log_sigma.value().data()) {
    EXPECT_GE(v, kLogSigmaMin);
    EXPECT_LE(v, kLogSigmaMax);
  }

  const LatentBatch latent = sample_latent(m.config().latent, 50, data);
  const Tensor img = gen_forward(fwd, latent).value();
  EXPECT_EQ(img.shape(), (Shape{50, 16}));
  for (double v : img.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Forward, SkippingQHeadLeavesItUnbound) {
  Pcg32 rng = make_stream(2, Stream::init);
  ModelPair m = ModelPair::init(small_config(), rng);
  Tape tape;
  Forward fwd(tape, m, Mode::train);
  const DiscQOutput out = disc_q_forward(fwd, tape.constant(Tensor({3, 16}, 0.5)), false);
  EXPECT_TRUE(out.q.blocks.empty());
  EXPECT_EQ(fwd.bound().count("q_head.fc.w"), 0u);
  EXPECT_EQ(fwd.bound().count("d_head.out.w"), 1u);
}

TEST(Forward, ShapeMismatchNamesExpectedWidth) {
  Pcg32 rng = make_stream(2, Stream::init);
  ModelPair m = ModelPair::init(small_config(), rng);
  Tape tape;
  Forward fwd(tape, m, Mode::train);
  try {
    disc_q_forward(fwd, tape.constant(Tensor({3, 15}, 0.5)));
    FAIL() << "expected StructuralError";
  } catch (const StructuralError& e) {
    EXPECT_NE(std::string(e.what()).find("16"), std::string::npos);
  }
}

TEST(Batchnorm, TrainModeUpdatesRunningStatistics) {
  Pcg32 rng = make_stream(3, Stream::init);
  ModelPair m = ModelPair::init(small_config(true), rng);
  Pcg32 data = make_stream(3, Stream::data);
  const LatentBatch latent = sample_latent(m.config().latent, 10, data);
  Tape tape;
  Forward fwd(tape, m, Mode::train);
  gen_forward(fwd, latent);
  // Recompute the first layer's batch statistics independently.
  const Tensor& w = m.at("gen.fc0.w");
  Tensor input({10, 9});
  for (std::size_t r = 0; r < 10; ++r) {
    for (std::size_t c = 0; c < 4; ++c) input.at(r, c) = latent.z.at(r, c);
    for (std::size_t c = 0; c < 5; ++c) input.at(r, 4 + c) = latent.c_encoded.at(r, c);
  }
  for (std::size_t f = 0; f < 8; ++f) {
    std::vector<double> h(10, 0.0);
    for (std::size_t r = 0; r < 10; ++r) {
      for (std::size_t k = 0; k < 9; ++k) h[r] += input.at(r, k) * w.at(k, f);
    }
    double mean = 0.0;
    for (double v : h) mean += v;
    mean /= 10.0;
    double var = 0.0;
    for (double v : h) var += (v - mean) * (v - mean);
    var /= 9.0;
    EXPECT_NEAR(m.at("gen.bn0.running_mean")[f], 0.1 * mean, 1e-12);
    EXPECT_NEAR(m.at("gen.bn0.running_var")[f], 0.9 + 0.1 * var, 1e-12);
  }
}

TEST(Batchnorm, EvalModeUsesRunningStatisticsWithoutUpdating) {
  Pcg32 rng = make_stream(3, Stream::init);
  ModelPair m = ModelPair::init(small_config(true), rng);
  const Tensor before = m.at("trunk.bn1.running_mean");
  Tape tape;
  Forward fwd(tape, m, Mode::eval);
  Tensor one({1, 16}, 0.25);
  const double a = disc_q_forward(fwd, tape.constant(one)).d_logit.value()[0];
  Tensor two({2, 16}, 0.25);
  for (std::size_t i = 16; i < 32; ++i) two[i] = 0.9;
  // Per-sample output does not depend on the rest of the batch.
  EXPECT_EQ(disc_q_forward(fwd, tape.constant(two)).d_logit.value()[0], a);
  EXPECT_TRUE(bitwise_equal(before, m.at("trunk.bn1.running_mean")));
}

TEST(Gradients, ContinuousCodeCoordinateMatchesFiniteDifference) {
  Pcg32 rng = make_stream(6, Stream::init);
  ModelPair m = ModelPair::init(small_config(), rng);
  std::normal_distribution<double> big(0.0, 0.5);
  for (const std::string& name : m.trainable_names()) {
    for (double& v : m.at(name).data()) v = big(rng);
  }
  Pcg32 data = make_stream(6, Stream::latent);
  const LatentBatch latent = sample_latent(m.config().latent, 4, data);
  const Tensor z = latent.z;
  const Tensor c = latent.c_encoded;
  LossBuilder build = [&m, z](Tape& t, std::span<const Var> p) {
    ModelPair local = m;
    Forward fwd(t, local, Mode::train, false);
    Var x = gen_forward(fwd, t.constant(z), p[0]);
    return ops::reduce_sum(disc_q_forward(fwd, x).d_logit);
  };
  EXPECT_LE(grad_check(build, {c}), 1e-5);
}

TEST(Forward, BoundParametersOverrideModel) {
  Pcg32 rng = make_stream(7, Stream::init);
  ModelPair m = ModelPair::init(small_config(), rng);
  Tape tape;
  Forward fwd(tape, m, Mode::train);
  fwd.bind("d_head.out.b", tape.constant(Tensor({1}, 3.0)));
  Tensor x({2, 16}, 0.0);
  Forward plain_fwd(tape, m, Mode::train);
  const Tensor with = disc_q_forward(fwd, tape.constant(x)).d_logit.value();
  const Tensor without = disc_q_forward(plain_fwd, tape.constant(x)).d_logit.value();
  EXPECT_NEAR(with[0] - without[0], 3.0, 1e-12);
}
