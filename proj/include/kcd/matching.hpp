#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "kcd/consistency.hpp"
#include "kcd/error.hpp"
#include "kcd/matrix.hpp"
#include "kcd/rng.hpp"
#include "kcd/transform.hpp"

namespace kcd {

enum class MatchStrategy { Greedy, Bipartite };

inline std::string to_string(MatchStrategy s) {
  return s == MatchStrategy::Greedy ? "greedy" : "bipartite";
}

namespace assignment {

// Dual-feasible solution of the min-cost assignment problem: row_for_col[j]
// is the row matched to column j, and u/v are optimal potentials with
// u[i] + v[j] <= cost(i, j), tight on matched edges.
struct Solution {
  std::vector<std::size_t> row_for_col;
  std::vector<double> u, v;
  double cost = 0.0;
};

// O(n^3) shortest-augmenting-path solver (Jonker-Volgenant style) for a
// square nonnegative cost matrix.
inline Solution solve_min_cost(const Matrix& cost) {
  const std::size_t n = cost.rows();
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; p[j] = row matched to column j, column 0 is a sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      std::size_t j1 = 0;
      double delta = inf;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
  Solution s;
  s.row_for_col.resize(n);
  s.u.resize(n);
  s.v.resize(n);
  for (std::size_t j = 1; j <= n; ++j) {
    s.row_for_col[j - 1] = p[j] - 1;
    s.cost += cost(p[j] - 1, j - 1);
  }
  for (std::size_t i = 0; i < n; ++i) s.u[i] = u[i + 1];
  for (std::size_t j = 0; j < n; ++j) s.v[j] = v[j + 1];
  return s;
}

// Among all optimal assignments, picks the one whose row_for_col vector is
// lexicographically smallest. By complementary slackness every optimal
// assignment lives on the tight edges of the optimal duals, so this is the
// lexicographically smallest perfect matching of the tight-edge graph:
// columns are fixed left to right to the smallest row that keeps the rest
// matchable.
inline std::vector<std::size_t> lex_smallest_optimal(const Matrix& cost, const Solution& sol,
                                                     double tol) {
  const std::size_t n = cost.rows();
  std::vector<std::vector<std::size_t>> tight_rows(n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i)
      if (cost(i, j) - sol.u[i] - sol.v[j] <= tol) tight_rows[j].push_back(i);

  std::vector<std::size_t> match = sol.row_for_col;      // column -> row
  std::vector<std::size_t> owner(n, SIZE_MAX);           // row -> column
  for (std::size_t j = 0; j < n; ++j) owner[match[j]] = j;
  std::vector<bool> fixed_row(n, false);

  // Augmenting search for column j over free tight rows (> fixed prefix).
  std::vector<bool> visited(n, false);
  auto augment = [&](auto&& self, std::size_t j) -> bool {
    for (std::size_t i : tight_rows[j]) {
      if (fixed_row[i] || visited[i]) continue;
      visited[i] = true;
      if (owner[i] == SIZE_MAX || self(self, owner[i])) {
        owner[i] = j;
        match[j] = i;
        return true;
      }
    }
    return false;
  };

  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i : tight_rows[j]) {
      if (fixed_row[i]) continue;
      if (match[j] == i) break;  // already the smallest reachable choice
      // Try to steal row i: its current column (if any) must re-match.
      const std::size_t displaced = owner[i];
      if (displaced == SIZE_MAX || displaced == j) {
        owner[match[j]] = SIZE_MAX;
        owner[i] = j;
        match[j] = i;
        break;
      }
      std::fill(visited.begin(), visited.end(), false);
      visited[i] = true;
      const std::size_t old_row = match[j];
      // Tentatively hand row i to column j and free its old row.
      owner[old_row] = SIZE_MAX;
      owner[i] = j;
      match[j] = i;
      if (augment(augment, displaced)) break;
      // Roll back.
      owner[i] = displaced;
      owner[old_row] = j;
      match[j] = old_row;
    }
    fixed_row[match[j]] = true;
  }
  return match;
}

}  // namespace assignment

namespace detail {

inline void require_square_finite(const Matrix& m) {
  if (m.rows() != m.cols()) fail(ErrorCategory::ShapeMismatch, "matrix is not square");
  if (m.rows() == 0) fail(ErrorCategory::ShapeMismatch, "matrix is empty");
  for (double v : m.data())
    if (std::isnan(v)) fail(ErrorCategory::InvalidValue, "NaN entry in matrix");
  if (!m.all_finite()) fail(ErrorCategory::InvalidValue, "non-finite entry in matrix");
}

}  // namespace detail

// Each student channel takes the most consistent teacher channel (column
// argmax, ties to the lowest teacher index). 1-to-N: repeats are legal and
// preserved downstream.
inline Transformation match_greedy(const Matrix& m) {
  detail::require_square_finite(m);
  const std::size_t c = m.rows();
  Transformation t;
  t.kind = TransformKind::IndexMap;
  t.channels = c;
  t.map.resize(c);
  t.provenance.strategy = "greedy";
  for (std::size_t j = 0; j < c; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < c; ++i)
      if (m(i, j) > m(best, j)) best = i;
    t.map[j] = best;
  }
  return t;
}

// Maximum-weight 1-to-1 matching via the assignment solver. Costs are the
// negated scores shifted by the matrix maximum so they are nonnegative.
// Returns the lexicographically smallest permutation among the optima.
inline Transformation match_bipartite(const Matrix& m) {
  detail::require_square_finite(m);
  const std::size_t c = m.rows();
  double hi = m(0, 0), lo = m(0, 0);
  for (double v : m.data()) {
    hi = std::max(hi, v);
    lo = std::min(lo, v);
  }
  Matrix cost(c, c);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) cost(i, j) = hi - m(i, j);

  const auto sol = assignment::solve_min_cost(cost);
  const double tol = 1e-9 * std::max(1.0, hi - lo);
  auto lex = assignment::lex_smallest_optimal(cost, sol, tol);

  // The refinement must not change the achieved score; if the tight-edge
  // classification was off, keep the solver's assignment.
  double base = 0.0, refined = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    base += m(sol.row_for_col[j], j);
    refined += m(lex[j], j);
  }
  Transformation t;
  t.kind = TransformKind::Permutation;
  t.channels = c;
  t.map = refined + tol >= base ? std::move(lex) : sol.row_for_col;
  t.provenance.strategy = "bipartite";
  t.validate();
  return t;
}

inline Transformation match_greedy(const ConsistencyMatrix& m) {
  Transformation t = match_greedy(m.m);
  t.provenance.metric = to_string(m.metric.kind);
  return t;
}

inline Transformation match_bipartite(const ConsistencyMatrix& m) {
  Transformation t = match_bipartite(m.m);
  t.provenance.metric = to_string(m.metric.kind);
  return t;
}

inline Transformation match_strategy(const ConsistencyMatrix& m, MatchStrategy s) {
  return s == MatchStrategy::Greedy ? match_greedy(m) : match_bipartite(m);
}

// Uniform random permutation baseline; same seed, same permutation.
inline Transformation match_random(std::size_t channels, std::uint64_t seed) {
  if (channels < 1) fail(ErrorCategory::ShapeMismatch, "channels must be >= 1");
  Transformation t;
  t.kind = TransformKind::Permutation;
  t.channels = channels;
  t.map.resize(channels);
  for (std::size_t j = 0; j < channels; ++j) t.map[j] = j;
  Rng rng(seed);
  rng.shuffle(t.map);
  t.provenance.strategy = "random";
  t.provenance.seed = seed;
  return t;
}

// One transformation per contiguous block of K equal-sized label partitions.
struct PerClassTransformSet {
  std::size_t k_partitions = 1;
  std::map<std::int64_t, std::size_t> class_to_partition;
  std::vector<Transformation> transforms;

  const Transformation& for_label(std::int64_t label) const {
    const auto it = class_to_partition.find(label);
    if (it == class_to_partition.end())
      fail(ErrorCategory::ConfigError, "label " + std::to_string(label) +
                                           " not covered by the partition map");
    return transforms[it->second];
  }
};

// Partitions the distinct labels (ascending) into K contiguous equal blocks
// and derives one transform per block from that block's samples only.
inline PerClassTransformSet per_class_transforms(const PooledActivations& teacher,
                                                 const PooledActivations& student,
                                                 const std::vector<std::int64_t>& labels,
                                                 std::size_t k, const ConsistencyMetric& metric,
                                                 MatchStrategy strategy) {
  if (teacher.samples() != labels.size() || student.samples() != labels.size())
    fail(ErrorCategory::ShapeMismatch, "labels not aligned with pooled rows");
  if (k < 1) fail(ErrorCategory::ConfigError, "k_partitions must be >= 1");
  std::vector<std::int64_t> distinct(labels.begin(), labels.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() % k != 0)
    fail(ErrorCategory::PartitionError,
         std::to_string(distinct.size()) + " classes not divisible into " +
             std::to_string(k) + " equal partitions");
  const std::size_t block = distinct.size() / k;

  PerClassTransformSet set;
  set.k_partitions = k;
  for (std::size_t idx = 0; idx < distinct.size(); ++idx)
    set.class_to_partition[distinct[idx]] = idx / block;

  for (std::size_t p = 0; p < k; ++p) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < labels.size(); ++r)
      if (set.class_to_partition.at(labels[r]) == p) rows.push_back(r);
    PooledActivations t_sub, s_sub;
    t_sub.data = Matrix(rows.size(), teacher.channels());
    s_sub.data = Matrix(rows.size(), student.channels());
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < teacher.channels(); ++c) {
        t_sub.data(r, c) = teacher.data(rows[r], c);
        s_sub.data(r, c) = student.data(rows[r], c);
      }
    Transformation t = match_strategy(consistency_matrix(t_sub, s_sub, metric), strategy);
    t.provenance.strategy = to_string(strategy) + "/partition-" + std::to_string(p);
    set.transforms.push_back(std::move(t));
  }
  return set;
}

}  // namespace kcd
