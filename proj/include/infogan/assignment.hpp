#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include "infogan/error.hpp"

namespace infogan {

struct Assignment {
  std::vector<int> row_to_col;  // -1 when a row is left unmatched
  double total = 0.0;
};

/// Maximum-weight assignment on a rows x cols weight matrix (Hungarian
/// algorithm, O(n^3)). Rectangular inputs are padded with zero weights, so
/// every row is matched when rows <= cols and every column when cols <= rows.
inline Assignment max_weight_assignment(const std::vector<std::vector<double>>& weights) {
  const std::size_t rows = weights.size();
  if (rows == 0) throw UsageError("assignment: empty weight matrix");
  const std::size_t cols = weights[0].size();
  for (const auto& row : weights) {
    if (row.size() != cols) throw UsageError("assignment: ragged weight matrix");
  }
  if (cols == 0) throw UsageError("assignment: empty weight matrix");
  const std::size_t n = std::max(rows, cols);
  double top = 0.0;
  for (const auto& row : weights) {
    for (double w : row) top = std::max(top, w);
  }
  // cost[i][j] = top - w (non-negative, 1-based), minimized.
  auto cost = [&](std::size_t i, std::size_t j) {
    const double w = (i <= rows && j <= cols) ? weights[i - 1][j - 1] : 0.0;
    return top - w;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment out;
  out.row_to_col.assign(rows, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = p[j];
    if (i >= 1 && i <= rows && j <= cols) {
      out.row_to_col[i - 1] = static_cast<int>(j - 1);
      out.total += weights[i - 1][j - 1];
    }
  }
  return out;
}

// Greedy baseline: repeatedly take the largest remaining entry.
inline Assignment greedy_assignment(const std::vector<std::vector<double>>& weights) {
  const std::size_t rows = weights.size(), cols = rows ? weights[0].size() : 0;
  Assignment out;
  out.row_to_col.assign(rows, -1);
  std::vector<char> col_used(cols, 0);
  for (std::size_t step = 0; step < std::min(rows, cols); ++step) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < rows; ++i) {
      if (out.row_to_col[i] >= 0) continue;
      for (std::size_t j = 0; j < cols; ++j) {
        if (!col_used[j] && weights[i][j] > best) {
          best = weights[i][j];
          bi = i;
          bj = j;
        }
      }
    }
    out.row_to_col[bi] = static_cast<int>(bj);
    col_used[bj] = 1;
    out.total += best;
  }
  return out;
}

}  // namespace infogan
