#include "mapfuse/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mapfuse {
namespace {

// Shortest-augmenting-path primal-dual solve on a square matrix. Returns the
// matching and the dual potentials (u over rows, v over cols), 1-based
// internally per the classic formulation.
void jv_solve(const std::vector<double>& c, int64_t n, std::vector<int64_t>& row_to_col,
              std::vector<double>& u, std::vector<double>& v) {
  const double inf = std::numeric_limits<double>::infinity();
  u.assign(static_cast<size_t>(n + 1), 0.0);
  v.assign(static_cast<size_t>(n + 1), 0.0);
  std::vector<int64_t> p(static_cast<size_t>(n + 1), 0);  // col -> row
  std::vector<int64_t> way(static_cast<size_t>(n + 1), 0);
  std::vector<double> minv(static_cast<size_t>(n + 1));
  std::vector<char> used(static_cast<size_t>(n + 1));

  for (int64_t i = 1; i <= n; ++i) {
    p[0] = i;
    int64_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int64_t i0 = p[static_cast<size_t>(j0)];
      int64_t j1 = -1;
      double delta = inf;
      for (int64_t j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = c[static_cast<size_t>((i0 - 1) * n + (j - 1))] -
                           u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int64_t j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int64_t j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0);
  }

  row_to_col.assign(static_cast<size_t>(n), -1);
  for (int64_t j = 1; j <= n; ++j)
    if (p[static_cast<size_t>(j)] > 0)
      row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)] = j - 1;
}

// Kuhn augmenting step on the zero-reduced-cost graph. Mutates the matching
// only when it finds an augmenting path.
bool try_augment(int64_t row, const std::vector<std::vector<int64_t>>& adj,
                 std::vector<int64_t>& col_match, std::vector<int64_t>& row_match,
                 std::vector<char>& visited) {
  for (int64_t j : adj[static_cast<size_t>(row)]) {
    if (visited[static_cast<size_t>(j)]) continue;
    visited[static_cast<size_t>(j)] = 1;
    const int64_t owner = col_match[static_cast<size_t>(j)];
    if (owner < 0 || try_augment(owner, adj, col_match, row_match, visited)) {
      col_match[static_cast<size_t>(j)] = row;
      row_match[static_cast<size_t>(row)] = j;
      return true;
    }
  }
  return false;
}

// Every optimal assignment satisfies complementary slackness against any
// optimal dual, i.e. lives on edges with zero reduced cost. The
// lexicographically smallest optimum is therefore the lexicographically
// smallest perfect matching of that subgraph, found row by row while keeping
// a valid completion for the remaining rows.
std::vector<int64_t> lexicographic_matching(const std::vector<double>& c, int64_t n,
                                            const std::vector<double>& u,
                                            const std::vector<double>& v,
                                            const std::vector<int64_t>& base, double zero_tol) {
  std::vector<std::vector<int64_t>> zero_adj(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) {
      const double rc = c[static_cast<size_t>(i * n + j)] - u[static_cast<size_t>(i + 1)] -
                        v[static_cast<size_t>(j + 1)];
      if (std::abs(rc) <= zero_tol) zero_adj[static_cast<size_t>(i)].push_back(j);
    }

  std::vector<int64_t> row_match = base;
  std::vector<int64_t> col_match(static_cast<size_t>(n), -1);
  for (int64_t i = 0; i < n; ++i) col_match[static_cast<size_t>(base[static_cast<size_t>(i)])] = i;
  std::vector<char> fixed(static_cast<size_t>(n), 0);

  for (int64_t i = 0; i < n; ++i) {
    int64_t chosen = -1;
    for (int64_t j : zero_adj[static_cast<size_t>(i)]) {
      if (fixed[static_cast<size_t>(j)]) continue;
      if (row_match[static_cast<size_t>(i)] == j) {
        chosen = j;
        break;
      }
      if (j > row_match[static_cast<size_t>(i)]) break;  // ascending; current col is feasible
      const int64_t displaced = col_match[static_cast<size_t>(j)];
      const int64_t old_col = row_match[static_cast<size_t>(i)];
      // tentatively move row i onto column j
      col_match[static_cast<size_t>(old_col)] = -1;
      col_match[static_cast<size_t>(j)] = i;
      row_match[static_cast<size_t>(i)] = j;
      if (displaced < 0) {
        chosen = j;
        break;
      }
      row_match[static_cast<size_t>(displaced)] = -1;
      std::vector<char> visited(static_cast<size_t>(n), 0);
      for (int64_t jj = 0; jj < n; ++jj)
        if (fixed[static_cast<size_t>(jj)]) visited[static_cast<size_t>(jj)] = 1;
      visited[static_cast<size_t>(j)] = 1;  // row i keeps it
      if (try_augment(displaced, zero_adj, col_match, row_match, visited)) {
        chosen = j;
        break;
      }
      // revert
      col_match[static_cast<size_t>(j)] = displaced;
      row_match[static_cast<size_t>(displaced)] = j;
      col_match[static_cast<size_t>(old_col)] = i;
      row_match[static_cast<size_t>(i)] = old_col;
    }
    if (chosen < 0) chosen = row_match[static_cast<size_t>(i)];
    fixed[static_cast<size_t>(chosen)] = 1;
  }
  return row_match;
}

}  // namespace

Assignment solve_assignment(const CostMatrix& cost) {
  if (cost.rows < 1 || cost.cols < 1)
    throw std::invalid_argument("assignment: matrix must be at least 1x1");
  double cmax = 0.0;
  for (double x : cost.c) {
    if (!std::isfinite(x)) throw std::invalid_argument("assignment: non-finite cost entry");
    cmax = std::max(cmax, std::abs(x));
  }

  const bool padded = cost.rows != cost.cols;
  const int64_t n = std::max(cost.rows, cost.cols);
  std::vector<double> c(static_cast<size_t>(n * n), kAssignmentSentinel);
  for (int64_t i = 0; i < cost.rows; ++i)
    for (int64_t j = 0; j < cost.cols; ++j)
      c[static_cast<size_t>(i * n + j)] = cost.at(i, j);

  std::vector<int64_t> base;
  std::vector<double> u, v;
  jv_solve(c, n, base, u, v);

  // The sentinel inflates potential magnitudes, so reduced costs on padded
  // problems carry absolute error up to ~sentinel*eps.
  double zero_tol = 1e-9 * (1.0 + cmax);
  if (padded) zero_tol = std::max(zero_tol, 1e-5);
  std::vector<int64_t> lex = lexicographic_matching(c, n, u, v, base, zero_tol);

  Assignment out;
  out.row_to_col.assign(static_cast<size_t>(cost.rows), -1);
  for (int64_t i = 0; i < cost.rows; ++i) {
    const int64_t j = lex[static_cast<size_t>(i)];
    if (j < cost.cols) {
      out.row_to_col[static_cast<size_t>(i)] = j;
      out.total_cost += cost.at(i, j);
    }
  }
  return out;
}

}  // namespace mapfuse
