#pragma once

#include "hypercloud/autodiff.hpp"
#include "hypercloud/geometry.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace hypercloud {

// Transport plan between equally sized clouds: point i of the first cloud
// goes to point perm[i] of the second; cost is sum_i 1/2 |x1_i - x2_perm[i]|^2.
template <typename Scalar>
struct MatchingT {
  std::vector<Eigen::Index> perm;
  Scalar cost = Scalar(0);
};
using Matching = MatchingT<double>;

// Above this size the cubic assignment solver is slow enough to warrant a
// warning when used outside the training loss.
inline constexpr Eigen::Index kEmdComfortableSize = 512;

namespace detail {

template <typename A, typename B>
void require_clouds(const Eigen::MatrixBase<A>& x1, const Eigen::MatrixBase<B>& x2,
                    const char* what) {
  if (x1.rows() == 0 || x2.rows() == 0) {
    throw std::invalid_argument(std::string(what) + ": empty point cloud");
  }
  if (x1.cols() != 3 || x2.cols() != 3) {
    throw std::invalid_argument(std::string(what) + ": clouds must be N x 3");
  }
}

template <typename A, typename B>
void require_equal_size(const Eigen::MatrixBase<A>& x1, const Eigen::MatrixBase<B>& x2,
                        const char* what) {
  require_clouds(x1, x2, what);
  if (x1.rows() != x2.rows()) {
    throw std::invalid_argument(std::string(what) + ": clouds must have equal size (" +
                                std::to_string(x1.rows()) + " vs " + std::to_string(x2.rows()) +
                                ")");
  }
}

template <typename A, typename B>
typename A::Scalar squared_distance(const Eigen::MatrixBase<A>& x1, Eigen::Index i,
                                    const Eigen::MatrixBase<B>& x2, Eigen::Index j) {
  const auto dx = x1(i, 0) - x2(j, 0);
  const auto dy = x1(i, 1) - x2(j, 1);
  const auto dz = x1(i, 2) - x2(j, 2);
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace detail

/// For every point of `from`, the index of its nearest point in `to`
/// (squared Euclidean; ties go to the lowest index).
template <typename A, typename B>
std::vector<Eigen::Index> nearest_indices(const Eigen::MatrixBase<A>& from,
                                          const Eigen::MatrixBase<B>& to) {
  detail::require_clouds(from, to, "nearest_indices");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(from.rows()));
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    Eigen::Index best = 0;
    auto best_d = detail::squared_distance(from, i, to, 0);
    for (Eigen::Index j = 1; j < to.rows(); ++j) {
      const auto d = detail::squared_distance(from, i, to, j);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    idx[static_cast<std::size_t>(i)] = best;
  }
  return idx;
}

/// Sum over both directions of squared nearest-neighbor distances.
template <typename A, typename B>
typename A::Scalar chamfer(const Eigen::MatrixBase<A>& x1, const Eigen::MatrixBase<B>& x2) {
  detail::require_clouds(x1, x2, "chamfer");
  using Scalar = typename A::Scalar;
  auto one_way = [](const auto& from, const auto& to) {
    Scalar total(0);
    for (Eigen::Index i = 0; i < from.rows(); ++i) {
      Scalar best = std::numeric_limits<Scalar>::infinity();
      for (Eigen::Index j = 0; j < to.rows(); ++j) {
        best = std::min(best, detail::squared_distance(from, i, to, j));
      }
      total += best;
    }
    return total;
  };
  return one_way(x1, x2) + one_way(x2, x1);
}

/// Chamfer with each direction averaged over its source cloud, so clouds of
/// different sizes are comparable.
template <typename A, typename B>
typename A::Scalar chamfer_mean(const Eigen::MatrixBase<A>& x1, const Eigen::MatrixBase<B>& x2) {
  detail::require_clouds(x1, x2, "chamfer_mean");
  using Scalar = typename A::Scalar;
  auto one_way = [](const auto& from, const auto& to) {
    Scalar total(0);
    const auto nn = nearest_indices(from, to);
    for (Eigen::Index i = 0; i < from.rows(); ++i) {
      total += detail::squared_distance(from, i, to, nn[static_cast<std::size_t>(i)]);
    }
    return total / static_cast<Scalar>(from.rows());
  };
  return one_way(x1, x2) + one_way(x2, x1);
}

/// Pairwise cost matrix c_ij = 1/2 |x1_i - x2_j|^2.
template <typename A, typename B>
MatrixT<typename A::Scalar> emd_cost_matrix(const Eigen::MatrixBase<A>& x1,
                                            const Eigen::MatrixBase<B>& x2) {
  MatrixT<typename A::Scalar> c(x1.rows(), x2.rows());
  for (Eigen::Index i = 0; i < x1.rows(); ++i) {
    for (Eigen::Index j = 0; j < x2.rows(); ++j) {
      c(i, j) = typename A::Scalar(0.5) * detail::squared_distance(x1, i, x2, j);
    }
  }
  return c;
}

/// Minimum-cost perfect assignment on a square cost matrix (Kuhn-Munkres with
/// row/column potentials, O(n^3)). Returns row -> column.
template <typename Derived>
std::vector<Eigen::Index> solve_assignment(const Eigen::MatrixBase<Derived>& cost) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = cost.rows();
  if (cost.cols() != n) throw std::invalid_argument("solve_assignment: cost matrix not square");
  const Scalar inf = std::numeric_limits<Scalar>::infinity();

  // 1-based potentials; column 0 is a virtual start column.
  std::vector<Scalar> u(n + 1, Scalar(0)), v(n + 1, Scalar(0)), minv(n + 1);
  std::vector<Eigen::Index> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);

  for (Eigen::Index i = 1; i <= n; ++i) {
    match[0] = i;
    Eigen::Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Eigen::Index i0 = match[j0];
      Scalar delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const Scalar cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const Eigen::Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<Eigen::Index> row_to_col(static_cast<std::size_t>(n));
  for (Eigen::Index j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

/// Exact earth mover's distance with cost 1/2 |x - y|^2 between equally sized
/// clouds, with one optimal matching.
template <typename A, typename B>
MatchingT<typename A::Scalar> emd_exact(const Eigen::MatrixBase<A>& x1,
                                        const Eigen::MatrixBase<B>& x2) {
  detail::require_equal_size(x1, x2, "emd_exact");
  const auto cost = emd_cost_matrix(x1, x2);
  MatchingT<typename A::Scalar> m;
  m.perm = solve_assignment(cost);
  for (Eigen::Index i = 0; i < x1.rows(); ++i) m.cost += cost(i, m.perm[i]);
  return m;
}

inline constexpr Eigen::Index kEmdBruteforceMax = 8;

/// Minimum over all n! bijections; test oracle for emd_exact (n <= 8).
template <typename A, typename B>
typename A::Scalar emd_bruteforce(const Eigen::MatrixBase<A>& x1, const Eigen::MatrixBase<B>& x2) {
  detail::require_equal_size(x1, x2, "emd_bruteforce");
  if (x1.rows() > kEmdBruteforceMax) {
    throw std::invalid_argument("emd_bruteforce: n must be <= 8, got " +
                                std::to_string(x1.rows()));
  }
  using Scalar = typename A::Scalar;
  const auto cost = emd_cost_matrix(x1, x2);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(x1.rows()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Scalar best = std::numeric_limits<Scalar>::infinity();
  do {
    Scalar total(0);
    for (Eigen::Index i = 0; i < x1.rows(); ++i) total += cost(i, perm[i]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

template <typename Scalar>
void validate_matching(const MatchingT<Scalar>& m, Eigen::Index n) {
  if (static_cast<Eigen::Index>(m.perm.size()) != n) {
    throw std::invalid_argument("matching: size " + std::to_string(m.perm.size()) +
                                " does not match cloud size " + std::to_string(n));
  }
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (Eigen::Index j : m.perm) {
    if (j < 0 || j >= n || seen[static_cast<std::size_t>(j)]) {
      throw std::invalid_argument("matching: not a bijection");
    }
    seen[static_cast<std::size_t>(j)] = 1;
  }
}

/// Gradient of the EMD with respect to x1 under a fixed optimal matching:
/// row i is x1_i - x2_perm[i].
template <typename A, typename B>
PointCloudT<typename A::Scalar> emd_grad(const Eigen::MatrixBase<A>& x1,
                                         const Eigen::MatrixBase<B>& x2,
                                         const MatchingT<typename A::Scalar>& matching) {
  detail::require_equal_size(x1, x2, "emd_grad");
  validate_matching(matching, x1.rows());
  PointCloudT<typename A::Scalar> g(x1.rows(), 3);
  for (Eigen::Index i = 0; i < x1.rows(); ++i) g.row(i) = x1.row(i) - x2.row(matching.perm[i]);
  return g;
}

// Differentiable versions for the training graph. Nearest neighbors and the
// optimal matching are computed from the forward values and held fixed during
// backward.
Var chamfer(Var x1, Var x2);
Var emd(Var x1, Var x2);

}  // namespace hypercloud
