#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "infogan/autodiff.hpp"
#include "infogan/gradcheck.hpp"
#include "infogan/rng.hpp"

using namespace infogan;

namespace {

Tensor random_tensor(Shape shape, Pcg32& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

TEST(Tensor, RejectsInconsistentShape) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), StructuralError);
  EXPECT_THROW(Tensor(Shape{0, 3}), StructuralError);
}

TEST(Forward, LeakyReluRate) {
  Tape tape;
  Var x = tape.constant(Tensor({3}, std::vector<double>{-1.0, 0.0, 2.0}));
  Var y = ops::leaky_relu(x, 0.1);
  EXPECT_EQ(y.value().values(), (std::vector<double>{-0.1, 0.0, 2.0}));
}

TEST(Forward, SoftmaxOfZeroRowIsUniform) {
  Tape tape;
  Var x = tape.constant(Tensor({1, 10}, 0.0));
  Var y = ops::softmax(x);
  for (double v : y.value().data()) EXPECT_DOUBLE_EQ(v, 0.1);
}

TEST(Forward, MatmulIdentity) {
  Tape tape;
  Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var eye = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  EXPECT_EQ(ops::matmul(a, eye).value().values(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Forward, GaussianReparamIsAffine) {
  Tape tape;
  Var mu = tape.constant(Tensor::scalar(0.3));
  Var ls = tape.constant(Tensor::scalar(0.0));
  Var eps = tape.constant(Tensor::scalar(0.5));
  EXPECT_DOUBLE_EQ(ops::gaussian_reparam(mu, ls, eps).value().item(), 0.8);
}

TEST(Forward, GaussianReparamBitwiseMatchesExpression) {
  Pcg32 rng(11, 3);
  Tape tape;
  Tensor mu = random_tensor({16, 3}, rng, -3, 3);
  Tensor ls = random_tensor({16, 3}, rng, -4, 4);
  Tensor eps = random_tensor({16, 3}, rng, -3, 3);
  Var y = ops::gaussian_reparam(tape.constant(mu), tape.constant(ls), tape.constant(eps));
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double expect = mu[i] + std::exp(ls[i]) * eps[i];
    const double got = y.value()[i];
    EXPECT_EQ(std::memcmp(&expect, &got, sizeof(double)), 0);
  }
}

TEST(Forward, ShapeMismatchNamesOp) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({4, 5}));
  try {
    ops::matmul(a, b);
    FAIL() << "expected StructuralError";
  } catch (const StructuralError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[2,3]"), std::string::npos);
  }
  EXPECT_THROW(ops::add(a, b), StructuralError);
}

TEST(Forward, AddBroadcastsRowVectorOnly) {
  Tape tape;
  Var x = tape.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  Var bias = tape.constant(Tensor({3}, std::vector<double>{10, 20, 30}));
  EXPECT_EQ(ops::add(x, bias).value().values(), (std::vector<double>{11, 22, 33, 14, 25, 36}));
  Var wrong = tape.constant(Tensor({2}, std::vector<double>{1, 2}));
  EXPECT_THROW(ops::add(x, wrong), StructuralError);
}

TEST(Forward, DomainErrors) {
  Tape tape;
  EXPECT_THROW(ops::log(tape.constant(Tensor({2}, std::vector<double>{1.0, 0.0}))), DomainError);
  EXPECT_THROW(ops::log(tape.constant(Tensor({1}, std::vector<double>{-2.0}))), DomainError);
  EXPECT_THROW(ops::exp(tape.constant(Tensor({1}, std::vector<double>{1000.0}))), DomainError);
}

TEST(Forward, GenericApplyMatchesNamedOps) {
  Tape tape;
  Var x = tape.constant(Tensor({3}, std::vector<double>{-1.0, 0.5, 2.0}));
  Attrs attrs;
  attrs.rate = 0.1;
  Var a = tape.apply(*op_from_name("lrelu"), {x}, attrs);
  Var b = ops::leaky_relu(x, 0.1);
  EXPECT_TRUE(bitwise_equal(a.value(), b.value()));
  EXPECT_FALSE(op_from_name("conv2d").has_value());
}

TEST(Forward, SoftmaxRowsSumToOne) {
  Pcg32 rng(5, 1);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    Var y = ops::softmax(tape.constant(random_tensor({7, 9}, rng, -30, 30)));
    for (std::size_t r = 0; r < 7; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 9; ++c) {
        EXPECT_GT(y.value().at(r, c), 0.0);
        total += y.value().at(r, c);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Forward, LogSoftmaxMatchesLogOfSoftmax) {
  Pcg32 rng(6, 1);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    Var x = tape.constant(random_tensor({5, 10}, rng, -30, 30));
    Var ls = ops::log_softmax(x);
    Var sm = ops::softmax(x);
    for (std::size_t i = 0; i < 50; ++i) {
      EXPECT_TRUE(std::isfinite(ls.value()[i]));
      EXPECT_NEAR(ls.value()[i], std::log(sm.value()[i]), 1e-9);
    }
  }
}

TEST(Forward, BatchnormTrainNormalizes) {
  Pcg32 rng(7, 1);
  Tape tape;
  // Large input variance keeps the eps bias of the variance below 1e-6.
  Var x = tape.constant(random_tensor({64, 5}, rng, -20, 30));
  Var y = ops::batchnorm_train(x, tape.constant(Tensor({5}, 1.0)), tape.constant(Tensor({5}, 0.0)));
  for (std::size_t c = 0; c < 5; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t r = 0; r < 64; ++r) mean += y.value().at(r, c);
    mean /= 64;
    for (std::size_t r = 0; r < 64; ++r) var += std::pow(y.value().at(r, c) - mean, 2);
    var /= 64;
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
}

TEST(Backward, SumOfSquares) {
  Tape tape;
  Var w = tape.parameter(Tensor({3}, std::vector<double>{1, 2, 3}));
  Var root = ops::reduce_sum(ops::mul(w, w));
  EXPECT_EQ(tape.backward(root)[w].values(), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, MeanIsLinear) {
  Tape tape;
  Var x = tape.parameter(Tensor({4}, std::vector<double>{3, -1, 7, 2}));
  Var root = ops::reduce_mean(x);
  EXPECT_EQ(tape.backward(root)[x].values(), (std::vector<double>(4, 0.25)));
}

TEST(Backward, NonScalarRootRejected) {
  Tape tape;
  Var x = tape.parameter(Tensor({4}));
  EXPECT_THROW(tape.backward(ops::relu(x)), UsageError);
}

TEST(Backward, UnreachedParameterGetsZero) {
  Tape tape;
  Var used = tape.parameter(Tensor({2}, std::vector<double>{1, 2}));
  Var unused = tape.parameter(Tensor({2, 2}, 5.0));
  Gradients g = tape.backward(ops::reduce_sum(used));
  EXPECT_FALSE(g.reached(unused));
  EXPECT_EQ(g[unused], Tensor({2, 2}, 0.0));
}

TEST(Backward, FanOutAccumulates) {
  Tape tape;
  Var x = tape.parameter(Tensor::scalar(3.0));
  Var y = ops::add(ops::mul(x, x), ops::scale(x, 4.0));  // x^2 + 4x
  EXPECT_DOUBLE_EQ(tape.backward(y)[x].item(), 10.0);
}

TEST(Backward, WrtRestrictsTraversal) {
  Tape tape;
  Var a = tape.parameter(Tensor::scalar(2.0));
  Var b = tape.parameter(Tensor::scalar(5.0));
  Var y = ops::mul(a, b);
  std::vector<Var> only_b{b};
  Gradients g = tape.backward(y, only_b);
  EXPECT_DOUBLE_EQ(g[b].item(), 2.0);
  EXPECT_FALSE(g.reached(a));
}

TEST(GradCheck, QuadraticIsExact) {
  LossBuilder quad = [](Tape&, std::span<const Var> p) { return ops::reduce_sum(ops::mul(p[0], p[0])); };
  Pcg32 rng(1, 1);
  EXPECT_LE(grad_check(quad, {random_tensor({6}, rng)}, 1e-6), 1e-9);
}

TEST(GradCheck, RejectsBadStep) {
  LossBuilder quad = [](Tape&, std::span<const Var> p) { return ops::reduce_sum(p[0]); };
  EXPECT_THROW(grad_check(quad, {Tensor({2})}, 0.0), UsageError);
  EXPECT_THROW(grad_check(quad, {Tensor({2})}, 1e-2), UsageError);
}

TEST(GradCheck, DetectsNondeterministicBuilder) {
  int calls = 0;
  LossBuilder flaky = [&calls](Tape& tape, std::span<const Var> p) {
    ++calls;
    return ops::reduce_sum(ops::add(p[0], tape.constant(Tensor({2}, static_cast<double>(calls)))));
  };
  EXPECT_THROW(grad_check(flaky, {Tensor({2})}, 1e-6), UsageError);
}

TEST(GradCheck, CatchesWrongGradient) {
  // A builder whose value path differs from its gradient path: the checker must notice.
  LossBuilder wrong = [](Tape& tape, std::span<const Var> p) {
    Var detached = tape.constant(p[0].value());
    return ops::reduce_sum(ops::add(ops::mul(p[0], p[0]), ops::mul(detached, detached)));
  };
  EXPECT_GT(grad_check(wrong, {Tensor({3}, 1.0)}, 1e-6), 0.1);
}
