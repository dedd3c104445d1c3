#pragma once

#include "hypercloud/autodiff.hpp"
#include "hypercloud/geometry.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hypercloud {

enum class DistanceKind { Chamfer, Emd };

std::string distance_name(DistanceKind kind);
DistanceKind parse_distance(const std::string& name);

/// Worker threads for embarrassingly parallel loops: HYPERCLOUD_THREADS if set
/// to a positive integer, otherwise the hardware concurrency.
unsigned thread_count();

/// Occupancy histogram over the [-1, 1]^3 cube with `resolution` cells per
/// axis. Points outside the cube land in the nearest boundary cell and are
/// counted in `clamped`.
struct OccupancyGrid {
  int resolution = 32;
  std::vector<double> counts;
  double total = 0.0;
  std::size_t clamped = 0;

  explicit OccupancyGrid(int res);
  void add(const PointCloud& pc);
};

OccupancyGrid occupancy(std::span<const PointCloud> clouds, int resolution);

/// Jensen-Shannon divergence (natural log) between two discrete distributions
/// given as nonnegative weights; each is normalized first.
double jsd_distributions(std::span<const double> p, std::span<const double> q);

/// JSD between the pooled occupancy distributions of two sets of clouds.
/// Warns on stderr when points had to be clamped into the grid.
double jsd(std::span<const PointCloud> set_a, std::span<const PointCloud> set_b,
           int resolution = 32);

double cloud_distance(const PointCloud& a, const PointCloud& b, DistanceKind kind);

/// Distances between every cloud of `rows` and every cloud of `cols`, filled
/// in parallel.
Matrix pairwise_distances(std::span<const PointCloud> rows, std::span<const PointCloud> cols,
                          DistanceKind kind);

// The *_from variants take precomputed distance matrices with generated
// clouds indexing rows: d_gr is |Sg| x |Sr|, d_gg and d_rr are square.

/// Mean over reference clouds of the distance to the closest generated cloud.
double mmd_from(const Matrix& d_gr);
/// Fraction of reference clouds that are the nearest reference of at least
/// one generated cloud.
double cov_from(const Matrix& d_gr);
/// Leave-one-out 1-NN two-sample accuracy over Sg and Sr.
double nna_from(const Matrix& d_gg, const Matrix& d_rr, const Matrix& d_gr);

double mmd(std::span<const PointCloud> sg, std::span<const PointCloud> sr, DistanceKind kind);
double cov(std::span<const PointCloud> sg, std::span<const PointCloud> sr, DistanceKind kind);
double nna_1(std::span<const PointCloud> sg, std::span<const PointCloud> sr, DistanceKind kind);

struct MetricReport {
  DistanceKind distance = DistanceKind::Chamfer;
  double jsd = 0.0;
  double mmd = 0.0;
  double cov = 0.0;
  double nna = 0.0;
  std::size_t generated_size = 0;
  std::size_t reference_size = 0;
  int resolution = 32;
  std::uint64_t seed = 0;
};

/// All four metrics, sharing one set of distance matrices.
MetricReport evaluate_sets(std::span<const PointCloud> sg, std::span<const PointCloud> sr,
                           DistanceKind kind, int resolution = 32, std::uint64_t seed = 0);

std::string report_to_json(const MetricReport& report);

}  // namespace hypercloud
