#include "hypercloud/generation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace hypercloud {

PointCloud Prior::sample(Eigen::Index n, Rng& rng) const {
  return sphere_radius ? sample_sphere(n, *sphere_radius, rng) : sample_ball(n, rng);
}

Eigen::RowVectorXd sample_latent(const HyperModel& model, Rng& rng) {
  Eigen::RowVectorXd z(model.config.latent_dim);
  for (Eigen::Index d = 0; d < z.size(); ++d) z[d] = rng.normal();
  return z;
}

PointCloud generate_cloud(const HyperModel& model, const Eigen::RowVectorXd& z, Eigen::Index n,
                          Rng& rng, const Prior& prior) {
  if (n < 1) throw std::invalid_argument("generate_cloud: n must be >= 1");
  const TargetWeights w = hyper_decode(model, z);
  return target_forward(model.config.target, w, prior.sample(n, rng));
}

TriMesh generate_mesh(const HyperModel& model, const Eigen::RowVectorXd& z, int level,
                      double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("generate_mesh: radius must be positive");
  TriMesh sphere = icosphere(level);
  PointCloud verts(static_cast<Eigen::Index>(sphere.vertices.size()), 3);
  for (std::size_t i = 0; i < sphere.vertices.size(); ++i) {
    verts.row(static_cast<Eigen::Index>(i)) = sphere.vertices[i] * radius;
  }
  const PointCloud mapped = target_forward(model.config.target, hyper_decode(model, z), verts);
  for (std::size_t i = 0; i < sphere.vertices.size(); ++i) {
    sphere.vertices[i] = mapped.row(static_cast<Eigen::Index>(i));
  }
  return sphere;
}

std::vector<InterpolationFrame> interpolate_latent(const HyperModel& model,
                                                   const PointCloud& cloud_a,
                                                   const PointCloud& cloud_b, int steps,
                                                   Eigen::Index points, int level,
                                                   std::uint64_t seed) {
  if (steps < 2) throw std::invalid_argument("interpolate: steps must be >= 2");
  const Eigen::RowVectorXd mu_a = encode(model, cloud_a).mu;
  const Eigen::RowVectorXd mu_b = encode(model, cloud_b).mu;
  std::vector<InterpolationFrame> frames;
  for (int s = 0; s < steps; ++s) {
    InterpolationFrame f;
    f.t = static_cast<double>(s) / (steps - 1);
    // exact endpoints
    f.z = s == 0 ? mu_a : s == steps - 1 ? mu_b : Eigen::RowVectorXd((1.0 - f.t) * mu_a + f.t * mu_b);
    Rng rng(seed);
    f.cloud = generate_cloud(model, f.z, points, rng);
    f.mesh = generate_mesh(model, f.z, level);
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<Point3> interpolate_surface(const HyperModel& model, const PointCloud& cloud,
                                        const Point3& pa, const Point3& pb, int steps) {
  if (steps < 2) throw std::invalid_argument("interpolate: steps must be >= 2");
  if (pa.norm() > 1.0 || pb.norm() > 1.0) {
    throw std::invalid_argument("interpolate: prior points must lie in the closed unit ball");
  }
  const TargetWeights w = hyper_decode(model, encode(model, cloud).mu);
  PointCloud path(steps, 3);
  for (int s = 0; s < steps; ++s) {
    const double t = static_cast<double>(s) / (steps - 1);
    path.row(s) = s == 0 ? pa : s == steps - 1 ? pb : Point3((1.0 - t) * pa + t * pb);
    if (path.row(s).norm() > 1.0 + 1e-12) throw std::logic_error("interpolate: left the unit ball");
  }
  const PointCloud mapped = target_forward(model.config.target, w, path);
  std::vector<Point3> out;
  for (int s = 0; s < steps; ++s) out.emplace_back(mapped.row(s));
  return out;
}

double mean_nearest_distance(const PointCloud& from, const PointCloud& to) {
  validate_cloud(from, "mean_nearest_distance");
  validate_cloud(to, "mean_nearest_distance");
  double total = 0.0;
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    total += std::sqrt((to.rowwise() - from.row(i)).rowwise().squaredNorm().minCoeff());
  }
  return total / static_cast<double>(from.rows());
}

double mean_spacing(const PointCloud& pc) {
  if (pc.rows() < 2) throw std::invalid_argument("mean_spacing: need at least 2 points");
  double total = 0.0;
  for (Eigen::Index i = 0; i < pc.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < pc.rows(); ++j) {
      if (j != i) best = std::min(best, (pc.row(j) - pc.row(i)).squaredNorm());
    }
    total += std::sqrt(best);
  }
  return total / static_cast<double>(pc.rows());
}

}  // namespace hypercloud
