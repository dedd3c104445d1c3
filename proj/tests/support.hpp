#pragma once

// Helpers shared by the test binaries: random inputs and small independent
// reference implementations used as oracles.

#include "hypercloud/autodiff.hpp"
#include "hypercloud/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace hctest {

using hypercloud::Index;
using hypercloud::Matrix;
using hypercloud::PointCloud;
using hypercloud::Rng;

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

inline PointCloud random_cloud(Index n, Rng& rng) {
  PointCloud pc(n, 3);
  for (Index i = 0; i < pc.size(); ++i) pc.data()[i] = rng.uniform(-1.0, 1.0);
  return pc;
}

inline std::vector<Index> random_permutation(Index n, Rng& rng) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  for (std::size_t i = p.size(); i > 1; --i) std::swap(p[i - 1], p[rng.index(i)]);
  return p;
}

inline PointCloud permute_rows(const PointCloud& pc, const std::vector<Index>& perm) {
  PointCloud out(pc.rows(), 3);
  for (Index i = 0; i < pc.rows(); ++i) out.row(i) = pc.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

// Central differences of a scalar function of a matrix, coordinate by
// coordinate.
inline Matrix central_difference(const std::function<double(const Matrix&)>& f, const Matrix& x,
                                 double h) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Index k = 0; k < x.size(); ++k) {
    const double x0 = x.data()[k];
    probe.data()[k] = x0 + h;
    const double fp = f(probe);
    probe.data()[k] = x0 - h;
    const double fm = f(probe);
    probe.data()[k] = x0;
    g.data()[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline double max_rel_error(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (Index k = 0; k < a.size(); ++k) worst = std::max(worst, rel_error(a.data()[k], b.data()[k]));
  return worst;
}

// Plain double loops, no Eigen reductions.
inline double chamfer_reference(const PointCloud& a, const PointCloud& b) {
  auto one_way = [](const PointCloud& from, const PointCloud& to) {
    double total = 0.0;
    for (Index i = 0; i < from.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < to.rows(); ++j) {
        double d = 0.0;
        for (int k = 0; k < 3; ++k) d += (from(i, k) - to(j, k)) * (from(i, k) - to(j, k));
        best = std::min(best, d);
      }
      total += best;
    }
    return total;
  };
  return one_way(a, b) + one_way(b, a);
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hypercloud_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace hctest
