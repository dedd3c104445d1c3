#pragma once

#include "hypercloud/geometry.hpp"
#include "hypercloud/model.hpp"

#include <optional>
#include <vector>

namespace hypercloud {

// Where target-network inputs come from: the unit ball (the training prior)
// or the surface of a sphere of some radius.
struct Prior {
  std::optional<double> sphere_radius;

  PointCloud sample(Eigen::Index n, Rng& rng) const;
};

/// Draws a latent code from N(0, I).
Eigen::RowVectorXd sample_latent(const HyperModel& model, Rng& rng);

/// n prior samples pushed through the target network decoded from z.
PointCloud generate_cloud(const HyperModel& model, const Eigen::RowVectorXd& z, Eigen::Index n,
                          Rng& rng, const Prior& prior = {});

/// Icosphere vertices (scaled by `radius`) pushed through the target network;
/// connectivity is the icosphere's, unchanged.
TriMesh generate_mesh(const HyperModel& model, const Eigen::RowVectorXd& z, int level,
                      double radius = 1.0);

struct InterpolationFrame {
  double t = 0.0;
  Eigen::RowVectorXd z;
  PointCloud cloud;
  TriMesh mesh;
};

/// Linear path between the deterministic encodings (mu) of two clouds. Every
/// frame samples its cloud with a generator seeded by `seed`, so frames differ
/// only through z.
std::vector<InterpolationFrame> interpolate_latent(const HyperModel& model,
                                                   const PointCloud& cloud_a,
                                                   const PointCloud& cloud_b, int steps,
                                                   Eigen::Index points, int level,
                                                   std::uint64_t seed);

/// Target-network image of the segment between two prior points for one
/// encoded cloud. Both endpoints must lie in the closed unit ball.
std::vector<Point3> interpolate_surface(const HyperModel& model, const PointCloud& cloud,
                                        const Point3& pa, const Point3& pb, int steps);

/// Mean distance from each point of `from` to its nearest point of `to`.
double mean_nearest_distance(const PointCloud& from, const PointCloud& to);
/// Mean distance from each point of a cloud to its nearest other point.
double mean_spacing(const PointCloud& pc);

}  // namespace hypercloud
