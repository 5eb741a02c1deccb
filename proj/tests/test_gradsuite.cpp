#include <gtest/gtest.h>

#include <set>

#include "infogan/gradsuite.hpp"

using namespace infogan;

TEST(GradSuite, EveryCaseWithinToleranceOverSeeds) {
  const GradSuiteReport r = run_grad_suite(1, 10);
  for (const auto& [name, err] : r.worst) EXPECT_LE(err, 1e-5) << name;
  EXPECT_LE(r.max_error, 1e-5) << r.worst_case;
}

TEST(GradSuite, CatalogueIsCovered) {
  std::set<std::string> names;
  for (const GradCase& c : gradient_cases(1)) {
    EXPECT_TRUE(names.insert(c.name).second) << "duplicate " << c.name;
    EXPECT_FALSE(c.params.empty()) << c.name;
  }
  for (const char* op : {"matmul", "add", "add_broadcast", "mul", "relu", "lrelu", "tanh", "sigmoid", "exp", "log",
                         "softmax", "log_softmax", "reduce_sum_rows", "reduce_mean_rows", "reduce_mean_all",
                         "reshape", "concat", "batchnorm_train", "batchnorm_eval", "gaussian_reparam",
                         "infogan_full"}) {
    EXPECT_TRUE(names.count(op)) << op;
  }
}

TEST(GradSuite, DetectsABrokenGradient) {
  // A loss whose analytic path is cut by a constant copy of the parameter.
  GradCase broken{"broken",
                  [](Tape& t, std::span<const Var> p) {
                    Var frozen = t.constant(p[0].value());
                    return ops::reduce_sum(ops::add(ops::mul(frozen, frozen), p[0]));
                  },
                  {Tensor::matrix(1, 2, {0.5, -1.0})}};
  EXPECT_GT(grad_check(broken.build, broken.params), 1e-2);
}
