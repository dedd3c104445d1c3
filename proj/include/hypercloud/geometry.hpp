#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hypercloud {

template <typename Scalar>
using PointCloudT = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;
using PointCloud = PointCloudT<double>;
using Point3 = Eigen::RowVector3d;

/// Seeded generator. The stream is std::mt19937_64 (fully specified by the
/// standard); uniforms take the top 53 bits and normals use Box-Muller, so a
/// seed reproduces the same values under any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

struct TriMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<int, 3>> triangles;
};

/// n points uniform in the closed unit ball (inverse-CDF radius u^(1/3)).
PointCloud sample_ball(Eigen::Index n, Rng& rng);

/// n points uniform on the sphere of the given radius.
PointCloud sample_sphere(Eigen::Index n, double radius, Rng& rng);

/// Subdivided icosahedron on the unit sphere; V = 10*4^level + 2,
/// F = 20*4^level. Faces are counter-clockwise seen from outside.
TriMesh icosphere(int level);

template <typename Scalar>
struct Normalized {
  PointCloudT<Scalar> cloud;
  Eigen::Matrix<Scalar, 1, 3> centroid;
  Scalar scale;
};

/// Centers on the centroid and divides by the largest remaining norm, so the
/// result lies in the closed unit ball. A cloud of identical points keeps
/// scale 1.
template <typename Derived>
Normalized<typename Derived::Scalar> normalize_cloud(const Eigen::MatrixBase<Derived>& pc);

void validate_cloud(const PointCloud& pc, const std::string& what);

/// `.xyz` text: three whitespace-separated numbers per line, `#` comments.
PointCloud load_cloud(const std::filesystem::path& path);
PointCloud parse_cloud(const std::string& text, const std::string& source = "<string>");
void save_cloud(const PointCloud& pc, const std::filesystem::path& path);

/// Wavefront OBJ with `v` and `f` records only (1-based indices).
void save_mesh_obj(const TriMesh& mesh, const std::filesystem::path& path);
TriMesh load_mesh_obj(const std::filesystem::path& path);

enum class ShapeFamily { Ellipsoid, Box, TwoLobe };

ShapeFamily parse_family(const std::string& name);
std::string family_name(ShapeFamily family);

struct Range {
  double lo = 1.0;
  double hi = 1.0;
};

/// Dataset recipe. Per cloud, each shape parameter is drawn uniformly from its
/// range.
struct SynthSpec {
  ShapeFamily family = ShapeFamily::Ellipsoid;
  int count = 1;
  int points = 256;
  // ellipsoid semi-axes (x, y, z)
  std::array<Range, 3> semi_axes{Range{0.6, 1.0}, Range{0.3, 0.6}, Range{0.2, 0.5}};
  // box half-extents (x, y, z)
  std::array<Range, 3> half_extents{Range{0.5, 1.0}, Range{0.3, 0.7}, Range{0.2, 0.5}};
  // two-lobe: sphere radii and center separation along x
  Range lobe_radius{0.3, 0.5};
  Range lobe_separation{0.5, 0.9};

  static SynthSpec defaults(ShapeFamily family);
};

struct SynthShape {
  // ellipsoid semi-axes, box half-extents, or (r1, r2, separation)
  std::array<double, 3> params{};
  PointCloud cloud;
};

/// m clouds of n points sampled uniformly (by area) on the family surface.
std::vector<SynthShape> synth_shapes(const SynthSpec& spec, Rng& rng);
std::vector<PointCloud> synth_dataset(const SynthSpec& spec, Rng& rng);

// ---------------------------------------------------------------------------

template <typename Derived>
Normalized<typename Derived::Scalar> normalize_cloud(const Eigen::MatrixBase<Derived>& pc) {
  using Scalar = typename Derived::Scalar;
  static_assert(Derived::ColsAtCompileTime == 3 || Derived::ColsAtCompileTime == Eigen::Dynamic);
  if (pc.rows() == 0 || pc.cols() != 3) {
    throw std::invalid_argument("normalize_cloud: expected a nonempty N x 3 cloud");
  }
  if (!pc.allFinite()) throw std::invalid_argument("normalize_cloud: non-finite coordinate");

  Normalized<Scalar> out;
  out.centroid = pc.colwise().mean();
  out.cloud = pc.rowwise() - out.centroid;
  Scalar scale = out.cloud.rowwise().norm().maxCoeff();
  if (scale == Scalar(0)) scale = Scalar(1);
  out.cloud /= scale;
  out.scale = scale;
  return out;
}

}  // namespace hypercloud
