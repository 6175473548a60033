#pragma once

#include <cstdint>
#include <vector>

namespace mapfuse {

// Row-major finite cost matrix, n rows x m cols.
struct CostMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> c;

  CostMatrix() = default;
  CostMatrix(int64_t n, int64_t m) : rows(n), cols(m), c(static_cast<size_t>(n * m), 0.0) {}

  double& at(int64_t i, int64_t j) { return c[static_cast<size_t>(i * cols + j)]; }
  double at(int64_t i, int64_t j) const { return c[static_cast<size_t>(i * cols + j)]; }
};

struct Assignment {
  // row_to_col[i] = matched column, or -1 when a row fell on sentinel padding
  std::vector<int64_t> row_to_col;
  double total_cost = 0.0;
};

// Sentinel used to square up rectangular problems.
inline constexpr double kAssignmentSentinel = 1e9;

// Exact minimum-cost assignment (Kuhn-Munkres / shortest augmenting path,
// O(n^3)). Square inputs return a full permutation; rectangular inputs are
// padded with kAssignmentSentinel and rows matched to padding report -1.
// Among equal-cost optima the lexicographically smallest permutation is
// returned. Throws std::invalid_argument on empty or non-finite input.
Assignment solve_assignment(const CostMatrix& cost);

}  // namespace mapfuse
