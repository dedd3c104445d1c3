#include "hypercloud/metrics.hpp"

#include "hypercloud/setdist.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <set>
#include <thread>

namespace hypercloud {

std::string distance_name(DistanceKind kind) { return kind == DistanceKind::Chamfer ? "cd" : "emd"; }

DistanceKind parse_distance(const std::string& name) {
  if (name == "cd" || name == "chamfer") return DistanceKind::Chamfer;
  if (name == "emd") return DistanceKind::Emd;
  throw std::invalid_argument("unknown distance '" + name + "' (expected cd or emd)");
}

unsigned thread_count() {
  if (const char* env = std::getenv("HYPERCLOUD_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

OccupancyGrid::OccupancyGrid(int res) : resolution(res) {
  if (res < 1) throw std::invalid_argument("occupancy: resolution must be >= 1");
  counts.assign(static_cast<std::size_t>(res) * res * res, 0.0);
}

void OccupancyGrid::add(const PointCloud& pc) {
  const int r = resolution;
  for (Index i = 0; i < pc.rows(); ++i) {
    bool outside = false;
    int cell[3];
    for (int k = 0; k < 3; ++k) {
      const double x = pc(i, k);
      if (!std::isfinite(x)) throw std::invalid_argument("occupancy: non-finite coordinate");
      if (x < -1.0 || x > 1.0) outside = true;
      const int c = static_cast<int>(std::floor((x + 1.0) * 0.5 * r));
      cell[k] = std::clamp(c, 0, r - 1);
    }
    if (outside) ++clamped;
    counts[(static_cast<std::size_t>(cell[0]) * r + cell[1]) * r + cell[2]] += 1.0;
    total += 1.0;
  }
}

OccupancyGrid occupancy(std::span<const PointCloud> clouds, int resolution) {
  OccupancyGrid g(resolution);
  for (const PointCloud& pc : clouds) g.add(pc);
  return g;
}

double jsd_distributions(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("jsd: distributions differ in size");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw std::invalid_argument("jsd: negative weight");
    sp += p[i];
    sq += q[i];
  }
  if (sp <= 0.0 || sq <= 0.0) throw std::invalid_argument("jsd: empty distribution");

  double kl_pm = 0.0, kl_qm = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p[i] / sp;
    const double qi = q[i] / sq;
    if (pi == 0.0 && qi == 0.0) continue;
    const double mi = 0.5 * (pi + qi);
    if (pi > 0.0) kl_pm += pi * std::log(pi / mi);
    if (qi > 0.0) kl_qm += qi * std::log(qi / mi);
  }
  return 0.5 * (kl_pm + kl_qm);
}

double jsd(std::span<const PointCloud> set_a, std::span<const PointCloud> set_b, int resolution) {
  if (set_a.empty() || set_b.empty()) throw std::invalid_argument("jsd: empty cloud set");
  const OccupancyGrid a = occupancy(set_a, resolution);
  const OccupancyGrid b = occupancy(set_b, resolution);
  if (a.clamped + b.clamped > 0) {
    std::cerr << "warning: jsd: " << a.clamped + b.clamped
              << " points outside [-1,1]^3 were clamped to boundary cells\n";
  }
  return jsd_distributions(a.counts, b.counts);
}

double cloud_distance(const PointCloud& a, const PointCloud& b, DistanceKind kind) {
  if (kind == DistanceKind::Chamfer) return chamfer(a, b);
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("EMD needs clouds of equal size (" + std::to_string(a.rows()) +
                                " vs " + std::to_string(b.rows()) +
                                "); resample the clouds to a common point count");
  }
  return emd_exact(a, b).cost;
}

Matrix pairwise_distances(std::span<const PointCloud> rows, std::span<const PointCloud> cols,
                          DistanceKind kind) {
  const auto nr = static_cast<Index>(rows.size());
  const auto nc = static_cast<Index>(cols.size());
  // Validate up front: worker threads must not throw.
  bool warned = false;
  const Index n0 = rows.empty() ? 0 : rows.front().rows();
  for (const auto& set : {rows, cols}) {
    for (const PointCloud& pc : set) {
      validate_cloud(pc, "pairwise_distances");
      if (kind != DistanceKind::Emd) continue;
      if (pc.rows() != n0) (void)cloud_distance(rows.front(), pc, kind);
      if (!warned && pc.rows() > kEmdComfortableSize) {
        std::cerr << "warning: EMD on " << pc.rows()
                  << "-point clouds uses an O(n^3) exact solver and may be slow\n";
        warned = true;
      }
    }
  }

  Matrix d(nr, nc);
  const Index cells = nr * nc;
  std::atomic<Index> next{0};
  auto worker = [&] {
    for (Index k = next++; k < cells; k = next++) {
      d(k / nc, k % nc) = cloud_distance(rows[static_cast<std::size_t>(k / nc)],
                                         cols[static_cast<std::size_t>(k % nc)], kind);
    }
  };
  const unsigned n_threads =
      static_cast<unsigned>(std::min<Index>(thread_count(), std::max<Index>(cells, 1)));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  return d;
}

double mmd_from(const Matrix& d_gr) {
  if (d_gr.rows() == 0 || d_gr.cols() == 0) throw std::invalid_argument("mmd: empty cloud set");
  double total = 0.0;
  for (Index r = 0; r < d_gr.cols(); ++r) total += d_gr.col(r).minCoeff();
  return total / static_cast<double>(d_gr.cols());
}

double cov_from(const Matrix& d_gr) {
  if (d_gr.rows() == 0 || d_gr.cols() == 0) throw std::invalid_argument("cov: empty cloud set");
  std::set<Index> matched;
  for (Index g = 0; g < d_gr.rows(); ++g) {
    Index best = 0;
    for (Index r = 1; r < d_gr.cols(); ++r) {
      if (d_gr(g, r) < d_gr(g, best)) best = r;
    }
    matched.insert(best);
  }
  return static_cast<double>(matched.size()) / static_cast<double>(d_gr.cols());
}

double nna_from(const Matrix& d_gg, const Matrix& d_rr, const Matrix& d_gr) {
  const Index ng = d_gg.rows();
  const Index nr = d_rr.rows();
  if (ng < 2 || nr < 2) throw std::invalid_argument("1-NNA: both sets need at least 2 clouds");
  if (d_gg.cols() != ng || d_rr.cols() != nr || d_gr.rows() != ng || d_gr.cols() != nr) {
    throw std::invalid_argument("1-NNA: inconsistent distance matrices");
  }
  // Combined index: generated clouds first, then reference clouds.
  const Index n = ng + nr;
  auto dist = [&](Index a, Index b) {
    if (a < ng && b < ng) return d_gg(a, b);
    if (a >= ng && b >= ng) return d_rr(a - ng, b - ng);
    if (a < ng) return d_gr(a, b - ng);
    return d_gr(b, a - ng);
  };
  Index correct = 0;
  for (Index a = 0; a < n; ++a) {
    Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index b = 0; b < n; ++b) {
      if (b == a) continue;
      const double d = dist(a, b);
      if (best < 0 || d < best_d) {
        best_d = d;
        best = b;
      }
    }
    if ((a < ng) == (best < ng)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double mmd(std::span<const PointCloud> sg, std::span<const PointCloud> sr, DistanceKind kind) {
  return mmd_from(pairwise_distances(sg, sr, kind));
}

double cov(std::span<const PointCloud> sg, std::span<const PointCloud> sr, DistanceKind kind) {
  return cov_from(pairwise_distances(sg, sr, kind));
}

double nna_1(std::span<const PointCloud> sg, std::span<const PointCloud> sr, DistanceKind kind) {
  if (sg.size() < 2 || sr.size() < 2) {
    throw std::invalid_argument("1-NNA: both sets need at least 2 clouds");
  }
  return nna_from(pairwise_distances(sg, sg, kind), pairwise_distances(sr, sr, kind),
                  pairwise_distances(sg, sr, kind));
}

MetricReport evaluate_sets(std::span<const PointCloud> sg, std::span<const PointCloud> sr,
                           DistanceKind kind, int resolution, std::uint64_t seed) {
  if (sg.empty() || sr.empty()) throw std::invalid_argument("evaluate: empty cloud set");
  MetricReport rep;
  rep.distance = kind;
  rep.generated_size = sg.size();
  rep.reference_size = sr.size();
  rep.resolution = resolution;
  rep.seed = seed;
  rep.jsd = jsd(sg, sr, resolution);
  const Matrix d_gr = pairwise_distances(sg, sr, kind);
  rep.mmd = mmd_from(d_gr);
  rep.cov = cov_from(d_gr);
  rep.nna = nna_from(pairwise_distances(sg, sg, kind), pairwise_distances(sr, sr, kind), d_gr);
  return rep;
}

std::string report_to_json(const MetricReport& r) {
  using nlohmann::json;
  const std::string dist = distance_name(r.distance);
  json j;
  j["metrics"] = json::array({
      {{"name", "JSD"}, {"distance", "occupancy"}, {"value", r.jsd}},
      {{"name", "MMD"}, {"distance", dist}, {"value", r.mmd}},
      {{"name", "COV"}, {"distance", dist}, {"value", r.cov}},
      {{"name", "1-NNA"}, {"distance", dist}, {"value", r.nna}},
  });
  j["distance"] = dist;
  j["generated_size"] = r.generated_size;
  j["reference_size"] = r.reference_size;
  j["resolution"] = r.resolution;
  j["seed"] = r.seed;
  return j.dump(2);
}

}  // namespace hypercloud
