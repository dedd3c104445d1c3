#include "hypercloud/geometry.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace hypercloud {

double Rng::normal() {
  // Box-Muller; u1 in (0, 1] keeps the log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index: empty range");
  return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
}

namespace {

Point3 random_direction(Rng& rng) {
  for (;;) {
    Point3 d(rng.normal(), rng.normal(), rng.normal());
    const double norm = d.norm();
    if (norm > 1e-300) return d / norm;
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace

PointCloud sample_ball(Eigen::Index n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_ball: n must be >= 1");
  PointCloud pc(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point3 dir = random_direction(rng);
    pc.row(i) = dir * std::cbrt(rng.uniform());
  }
  return pc;
}

PointCloud sample_sphere(Eigen::Index n, double radius, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_sphere: n must be >= 1");
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw std::invalid_argument("sample_sphere: radius must be positive and finite");
  }
  PointCloud pc(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) pc.row(i) = random_direction(rng) * radius;
  return pc;
}

TriMesh icosphere(int level) {
  if (level < 0 || level > 7) {
    throw std::invalid_argument("icosphere: level must be in [0, 7], got " +
                                std::to_string(level));
  }
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriMesh mesh;
  mesh.vertices = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
  };
  for (auto& v : mesh.vertices) v.normalize();
  mesh.triangles = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1},
  };

  for (int l = 0; l < level; ++l) {
    std::unordered_map<std::uint64_t, int> midpoints;
    auto midpoint = [&](int a, int b) {
      const auto lo = static_cast<std::uint64_t>(std::min(a, b));
      const auto hi = static_cast<std::uint64_t>(std::max(a, b));
      const std::uint64_t key = (lo << 32) | hi;
      auto it = midpoints.find(key);
      if (it != midpoints.end()) return it->second;
      const int idx = static_cast<int>(mesh.vertices.size());
      mesh.vertices.push_back(((mesh.vertices[a] + mesh.vertices[b]) * 0.5).normalized());
      midpoints.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(mesh.triangles.size() * 4);
    for (const auto& [a, b, c] : mesh.triangles) {
      const int ab = midpoint(a, b);
      const int bc = midpoint(b, c);
      const int ca = midpoint(c, a);
      next.push_back({a, ab, ca});
      next.push_back({b, bc, ab});
      next.push_back({c, ca, bc});
      next.push_back({ab, bc, ca});
    }
    mesh.triangles = std::move(next);
  }
  return mesh;
}

void validate_cloud(const PointCloud& pc, const std::string& what) {
  if (pc.rows() == 0) throw std::invalid_argument(what + ": empty point cloud");
  if (!pc.allFinite()) throw std::invalid_argument(what + ": non-finite coordinate");
}

PointCloud parse_cloud(const std::string& text, const std::string& source) {
  std::vector<double> values;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;

    std::istringstream fields(line);
    std::string tok;
    int count = 0;
    double xyz[3];
    while (fields >> tok) {
      if (count == 3) {
        count = 4;
        break;
      }
      double v = 0.0;
      const char* end = tok.data() + tok.size();
      auto res = std::from_chars(tok.data(), end, v);
      if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) {
        throw std::runtime_error(source + ":" + std::to_string(line_no) +
                                 ": malformed number '" + tok + "'");
      }
      xyz[count++] = v;
    }
    if (count != 3) {
      throw std::runtime_error(source + ":" + std::to_string(line_no) +
                               ": expected exactly 3 numeric fields");
    }
    values.insert(values.end(), xyz, xyz + 3);
  }
  if (values.empty()) throw std::runtime_error(source + ": point cloud contains no points");
  return Eigen::Map<const PointCloud>(values.data(), static_cast<Eigen::Index>(values.size() / 3), 3);
}

PointCloud load_cloud(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read point cloud '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_cloud(buf.str(), path.string());
}

void save_cloud(const PointCloud& pc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write point cloud '" + path.string() + "'");
  for (Eigen::Index i = 0; i < pc.rows(); ++i) {
    out << format_double(pc(i, 0)) << ' ' << format_double(pc(i, 1)) << ' '
        << format_double(pc(i, 2)) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void save_mesh_obj(const TriMesh& mesh, const std::filesystem::path& path) {
  const auto nv = static_cast<int>(mesh.vertices.size());
  for (const auto& tri : mesh.triangles) {
    for (int idx : tri) {
      if (idx < 0 || idx >= nv) throw std::invalid_argument("save_mesh_obj: index out of range");
    }
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write mesh '" + path.string() + "'");
  for (const auto& v : mesh.vertices) {
    out << "v " << format_double(v.x()) << ' ' << format_double(v.y()) << ' '
        << format_double(v.z()) << '\n';
  }
  for (const auto& [a, b, c] : mesh.triangles) {
    out << "f " << a + 1 << ' ' << b + 1 << ' ' << c + 1 << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

TriMesh load_mesh_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read mesh '" + path.string() + "'");
  TriMesh mesh;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string tag;
    if (!(fields >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Point3 p;
      if (!(fields >> p.x() >> p.y() >> p.z())) fail("malformed vertex");
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::array<int, 3> tri{};
      std::string tok;
      for (int k = 0; k < 3; ++k) {
        if (!(fields >> tok)) fail("face needs 3 indices");
        tri[k] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      if (fields >> tok) fail("only triangular faces are supported");
      mesh.triangles.push_back(tri);
    }
  }
  const auto nv = static_cast<int>(mesh.vertices.size());
  for (const auto& tri : mesh.triangles) {
    for (int idx : tri) {
      if (idx < 0 || idx >= nv) {
        throw std::runtime_error(path.string() + ": face index out of range");
      }
    }
  }
  return mesh;
}

// ---------------------------------------------------------------------------

ShapeFamily parse_family(const std::string& name) {
  if (name == "ellipsoid") return ShapeFamily::Ellipsoid;
  if (name == "box") return ShapeFamily::Box;
  if (name == "two-lobe") return ShapeFamily::TwoLobe;
  throw std::invalid_argument("unknown shape family '" + name +
                              "' (expected ellipsoid, box or two-lobe)");
}

std::string family_name(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::Ellipsoid: return "ellipsoid";
    case ShapeFamily::Box: return "box";
    case ShapeFamily::TwoLobe: return "two-lobe";
  }
  return "unknown";
}

SynthSpec SynthSpec::defaults(ShapeFamily family) {
  SynthSpec s;
  s.family = family;
  return s;
}

namespace {

double draw(const Range& r, Rng& rng) { return rng.uniform(r.lo, r.hi); }

PointCloud ellipsoid_surface(const std::array<double, 3>& axes, int n, Rng& rng) {
  const double a = axes[0], b = axes[1], c = axes[2];
  // Area element of (a x, b y, c z) relative to the unit sphere; rejection
  // against its maximum gives uniform density by area.
  const double bound = std::max({b * c, a * c, a * b});
  PointCloud pc(n, 3);
  for (int i = 0; i < n;) {
    const Point3 u = random_direction(rng);
    const double w = std::sqrt(std::pow(b * c * u.x(), 2) + std::pow(a * c * u.y(), 2) +
                               std::pow(a * b * u.z(), 2));
    if (rng.uniform() * bound <= w) {
      pc.row(i++) = Point3(a * u.x(), b * u.y(), c * u.z());
    }
  }
  return pc;
}

PointCloud box_surface(const std::array<double, 3>& half, int n, Rng& rng) {
  // Face pair k is perpendicular to axis k.
  const std::array<double, 3> area{half[1] * half[2], half[0] * half[2], half[0] * half[1]};
  const double total = area[0] + area[1] + area[2];
  PointCloud pc(n, 3);
  for (int i = 0; i < n; ++i) {
    double pick = rng.uniform() * total;
    int axis = 0;
    while (axis < 2 && pick >= area[axis]) pick -= area[axis++];
    Point3 p;
    for (int k = 0; k < 3; ++k) p[k] = rng.uniform(-half[k], half[k]);
    p[axis] = rng.uniform() < 0.5 ? -half[axis] : half[axis];
    pc.row(i) = p;
  }
  return pc;
}

PointCloud two_lobe_surface(double r1, double r2, double separation, int n, Rng& rng) {
  const Point3 c1(-separation / 2.0, 0.0, 0.0);
  const Point3 c2(separation / 2.0, 0.0, 0.0);
  const double w1 = r1 * r1 / (r1 * r1 + r2 * r2);
  PointCloud pc(n, 3);
  for (int i = 0; i < n;) {
    const bool first = rng.uniform() < w1;
    const Point3 p = (first ? c1 : c2) + random_direction(rng) * (first ? r1 : r2);
    // keep only the outer surface of the union
    const bool hidden = first ? (p - c2).norm() < r2 : (p - c1).norm() < r1;
    if (!hidden) pc.row(i++) = p;
  }
  return pc;
}

}  // namespace

std::vector<SynthShape> synth_shapes(const SynthSpec& spec, Rng& rng) {
  if (spec.count < 1) throw std::invalid_argument("synth: count must be >= 1");
  if (spec.points < 8) {
    throw std::invalid_argument("synth: points per cloud must be >= 8, got " +
                                std::to_string(spec.points));
  }
  std::vector<SynthShape> shapes;
  shapes.reserve(static_cast<std::size_t>(spec.count));
  for (int m = 0; m < spec.count; ++m) {
    SynthShape s;
    switch (spec.family) {
      case ShapeFamily::Ellipsoid:
        for (int k = 0; k < 3; ++k) s.params[k] = draw(spec.semi_axes[k], rng);
        s.cloud = ellipsoid_surface(s.params, spec.points, rng);
        break;
      case ShapeFamily::Box:
        for (int k = 0; k < 3; ++k) s.params[k] = draw(spec.half_extents[k], rng);
        s.cloud = box_surface(s.params, spec.points, rng);
        break;
      case ShapeFamily::TwoLobe:
        s.params = {draw(spec.lobe_radius, rng), draw(spec.lobe_radius, rng),
                    draw(spec.lobe_separation, rng)};
        s.cloud = two_lobe_surface(s.params[0], s.params[1], s.params[2], spec.points, rng);
        break;
    }
    shapes.push_back(std::move(s));
  }
  return shapes;
}

std::vector<PointCloud> synth_dataset(const SynthSpec& spec, Rng& rng) {
  std::vector<PointCloud> out;
  for (auto& s : synth_shapes(spec, rng)) out.push_back(std::move(s.cloud));
  return out;
}

}  // namespace hypercloud
