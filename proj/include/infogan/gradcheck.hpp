#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <span>
#include <vector>

#include "infogan/autodiff.hpp"

namespace infogan {

// Builds a scalar loss from parameter leaves. Must be deterministic.
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

namespace detail {

inline double eval_loss(const LossBuilder& build, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.parameter(p));
  return build(tape, leaves).value().item();
}

}  // namespace detail

/// Compares reverse-mode gradients against central differences.
///
/// Error per coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
inline GradCheckResult grad_check_detailed(const LossBuilder& build, std::vector<Tensor> params, double step = 1e-6) {
  if (!(step > 0.0 && step <= 1e-3)) throw UsageError("grad_check: step must lie in (0, 1e-3]");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : params) leaves.push_back(tape.parameter(p));
    Var loss = build(tape, leaves);
    const double first = loss.value().item();
    const double second = detail::eval_loss(build, params);
    if (std::memcmp(&first, &second, sizeof(double)) != 0) {
      throw UsageError("grad_check: loss builder is not deterministic");
    }
    Gradients grads = tape.backward(loss, leaves);
    for (const Var& leaf : leaves) analytic.push_back(grads[leaf]);
  }

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + step;
      const double plus = detail::eval_loss(build, params);
      params[p][i] = saved - step;
      const double minus = detail::eval_loss(build, params);
      params[p][i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[p][i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > result.max_rel_error || (p == 0 && i == 0)) {
        result = {err, p, i, a, numeric};
      }
    }
  }
  return result;
}

inline double grad_check(const LossBuilder& build, std::vector<Tensor> params, double step = 1e-6) {
  return grad_check_detailed(build, std::move(params), step).max_rel_error;
}

}  // namespace infogan
