#include "hypercloud/generation.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace hypercloud;

namespace {

ModelConfig small() {
  ModelConfig c;
  c.latent_dim = 4;
  c.encoder_widths = {3, 8, 16};
  c.head_widths = {16, 8};
  c.decoder_hidden = {12};
  c.target.widths = {3, 6, 3};
  return c;
}

}  // namespace

TEST_CASE("zero model maps everything to the origin") {
  const HyperModel zero(small());
  Rng rng(1);
  const auto z = sample_latent(zero, rng);
  CHECK(z.size() == 4);
  const PointCloud pc = generate_cloud(zero, z, 50, rng);
  CHECK(pc.rows() == 50);
  CHECK(pc.isZero(0.0));

  const TriMesh mesh = generate_mesh(zero, z, 3);
  CHECK(mesh.vertices.size() == 642);
  CHECK(mesh.triangles.size() == 1280);
  for (const Point3& v : mesh.vertices) CHECK(v.isZero(0.0));
}

TEST_CASE("generation is deterministic and sized on demand") {
  Rng init(2);
  const HyperModel m = HyperModel::initialized(small(), init);
  Rng zr(3);
  const auto z = sample_latent(m, zr);
  for (Index n : {1, 100, 1000, 5000}) {
    Rng a(4), b(4);
    const PointCloud pa = generate_cloud(m, z, n, a);
    CHECK(pa.rows() == n);
    CHECK(pa.allFinite());
    CHECK(pa == generate_cloud(m, z, n, b));
  }
  Rng r(5);
  CHECK_THROWS(generate_cloud(m, z, 0, r));
}

TEST_CASE("sphere prior feeds points at the requested radius") {
  // identity-like target: weights chosen so the output equals the input
  ModelConfig c = small();
  c.target.widths = {3, 3};
  HyperModel m(c);
  // decoder output bias holds theta directly: 3x3 identity then zero bias
  Matrix& bias = m.decoder.back().bias;
  bias.setZero();
  bias(0, 0) = bias(0, 4) = bias(0, 8) = 1.0;
  Rng rng(6);
  const PointCloud pc = generate_cloud(m, Eigen::RowVectorXd::Zero(4), 200, rng, Prior{2.795});
  CHECK(((pc.rowwise().norm().array() - 2.795).abs() < 1e-12).all());
  Rng rng2(6);
  const PointCloud ball = generate_cloud(m, Eigen::RowVectorXd::Zero(4), 200, rng2);
  CHECK(ball.rowwise().norm().maxCoeff() <= 1.0);

  const TriMesh mesh = generate_mesh(m, Eigen::RowVectorXd::Zero(4), 2, 2.0);
  const TriMesh sphere = icosphere(2);
  CHECK(mesh.triangles == sphere.triangles);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    CHECK((mesh.vertices[i] - 2.0 * sphere.vertices[i]).norm() < 1e-12);
  }
}

TEST_CASE("latent interpolation") {
  Rng init(7);
  const HyperModel m = HyperModel::initialized(small(), init);
  Rng rng(8);
  const PointCloud a = hctest::random_cloud(30, rng), b = hctest::random_cloud(30, rng);
  const auto two = interpolate_latent(m, a, b, 2, 64, 1, 9);
  REQUIRE(two.size() == 2);
  CHECK(two[0].z == encode(m, a).mu);
  CHECK(two[1].z == encode(m, b).mu);
  CHECK(two[0].mesh.vertices.size() == 42);

  const auto five = interpolate_latent(m, a, b, 5, 64, 1, 9);
  REQUIRE(five.size() == 5);
  CHECK(five[2].z.isApprox(0.5 * (five[0].z + five[4].z), 1e-14));
  Rng same(9);
  CHECK(five[2].cloud == generate_cloud(m, five[2].z, 64, same));
  CHECK_THROWS(interpolate_latent(m, a, b, 1, 64, 1, 9));
}

TEST_CASE("prior-space interpolation") {
  Rng init(10);
  const HyperModel m = HyperModel::initialized(small(), init);
  Rng rng(11);
  const PointCloud pc = hctest::random_cloud(30, rng);
  const Point3 p(0.1, 0.2, -0.3), q(-0.5, 0.0, 0.5);

  const auto constant = interpolate_surface(m, pc, p, p, 4);
  for (const Point3& v : constant) CHECK(v == constant[0]);

  const auto ends = interpolate_surface(m, pc, p, q, 2);
  PointCloud pq(2, 3);
  pq.row(0) = p;
  pq.row(1) = q;
  const PointCloud direct = target_forward(m.config.target, hyper_decode(m, encode(m, pc).mu), pq);
  CHECK(ends[0] == Point3(direct.row(0)));
  CHECK(ends[1] == Point3(direct.row(1)));

  CHECK_THROWS(interpolate_surface(m, pc, Point3(1.5, 0, 0), q, 3));
}

TEST_CASE("nearest-distance helpers") {
  PointCloud a(2, 3), b(3, 3);
  a << 0, 0, 0, 1, 0, 0;
  b << 0, 0, 3, 1, 0, 0, 5, 5, 5;
  CHECK(mean_nearest_distance(a, b) == doctest::Approx(0.5));
  CHECK(mean_spacing(a) == 1.0);
  CHECK_THROWS(mean_spacing(PointCloud(1, 3)));
}
