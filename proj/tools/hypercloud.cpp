// hypercloud: synthesize data, train, generate, mesh, interpolate, evaluate.

#include "hypercloud/checkpoint.hpp"
#include "hypercloud/generation.hpp"
#include "hypercloud/geometry.hpp"
#include "hypercloud/metrics.hpp"
#include "hypercloud/model.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hypercloud;

namespace {

std::string numbered(const char* pattern, int i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, i);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory '" + dir.string() + "'");
  }
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

// All .xyz files of a directory, in name order.
std::vector<PointCloud> load_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: '" + dir.string() + "'");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".xyz") files.push_back(e.path());
  }
  if (files.empty()) throw std::runtime_error("no .xyz clouds in '" + dir.string() + "'");
  std::sort(files.begin(), files.end());
  std::vector<PointCloud> clouds;
  for (const auto& f : files) clouds.push_back(load_cloud(f));
  return clouds;
}

std::vector<PointCloud> normalized(std::vector<PointCloud> clouds) {
  for (auto& pc : clouds) pc = normalize_cloud(pc).cloud;
  return clouds;
}

Point3 parse_point(const std::string& text) {
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream in(s);
  Point3 p;
  if (!(in >> p[0] >> p[1] >> p[2]) || !(in >> std::ws).eof()) {
    throw std::runtime_error("expected a point as x,y,z but got '" + text + "'");
  }
  return p;
}

// Latent code for generation: mu of an encoded cloud, or a draw from N(0, I).
// Also returns the frame that maps model space back to the input cloud.
struct LatentChoice {
  Eigen::RowVectorXd z;
  Point3 centroid = Point3::Zero();
  double scale = 1.0;
};

LatentChoice choose_latent(const HyperModel& model, const std::string& encode_file, Rng& rng) {
  LatentChoice c;
  if (encode_file.empty()) {
    c.z = sample_latent(model, rng);
    return c;
  }
  const auto norm = normalize_cloud(load_cloud(encode_file));
  c.z = encode(model, norm.cloud).mu;
  c.centroid = norm.centroid;
  c.scale = norm.scale;
  return c;
}

PointCloud to_input_frame(const PointCloud& pc, const LatentChoice& c) {
  return (pc * c.scale).rowwise() + c.centroid;
}

int run_synth(const std::string& family, int count, int points, std::uint64_t seed,
              const fs::path& out) {
  SynthSpec spec = SynthSpec::defaults(parse_family(family));
  spec.count = count;
  spec.points = points;
  Rng rng(seed);
  const auto shapes = synth_shapes(spec, rng);
  ensure_dir(out);

  nlohmann::json manifest;
  manifest["family"] = family_name(spec.family);
  manifest["count"] = count;
  manifest["points"] = points;
  manifest["seed"] = seed;
  manifest["clouds"] = nlohmann::json::array();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const std::string name = numbered("cloud_%04d.xyz", static_cast<int>(i));
    save_cloud(shapes[i].cloud, out / name);
    manifest["clouds"].push_back({{"file", name}, {"params", shapes[i].params}});
  }
  std::ofstream mf(out / "manifest.json");
  if (!(mf << manifest.dump(2) << '\n')) throw std::runtime_error("cannot write manifest.json");
  std::cout << "wrote " << shapes.size() << " clouds to " << out.string() << '\n';
  return 0;
}

int run_train(const fs::path& data, const fs::path& config_path, const fs::path& out,
              std::string history_path, int log_every) {
  const TrainConfig config = load_train_config(config_path);
  const auto clouds = normalized(load_dir(data));
  if (history_path.empty()) history_path = (out.parent_path() / "history.csv").string();

  auto on_step = [&](const HistoryRow& row) {
    if (log_every > 0 && row.step % log_every == 0) {
      std::cerr << "step " << row.step << " total " << row.terms.total << " err "
                << row.terms.err << " kl " << row.terms.kl << '\n';
    }
  };
  TrainResult result;
  try {
    result = train(clouds, config, on_step);
  } catch (const TrainingDiverged& e) {
    throw std::runtime_error("training aborted at step " + std::to_string(e.step()) + ": " +
                             e.what());
  }
  ensure_parent(out);
  save_checkpoint(result.model, out);
  ensure_parent(history_path);
  save_history_csv(result.history, history_path);
  const double err = reconstruction_error(result.model, clouds, config.loss, config.seed);
  std::cout << "trained " << config.steps << " steps on " << clouds.size()
            << " clouds; reconstruction " << loss_name(config.loss) << " " << err << '\n';
  return 0;
}

int run_generate(const fs::path& ckpt, int n, std::uint64_t seed, const fs::path& out,
                 const std::string& encode_file, std::optional<double> radius,
                 std::optional<int> count) {
  const HyperModel model = load_checkpoint(ckpt);
  Rng rng(seed);
  const Prior prior{radius};
  if (!count) {
    const LatentChoice c = choose_latent(model, encode_file, rng);
    ensure_parent(out);
    save_cloud(to_input_frame(generate_cloud(model, c.z, n, rng, prior), c), out);
    return 0;
  }
  if (*count < 1) throw std::runtime_error("--count must be >= 1");
  ensure_dir(out);
  for (int i = 0; i < *count; ++i) {
    const LatentChoice c = choose_latent(model, encode_file, rng);
    save_cloud(to_input_frame(generate_cloud(model, c.z, n, rng, prior), c),
               out / numbered("cloud_%04d.xyz", i));
  }
  return 0;
}

int run_mesh(const fs::path& ckpt, int level, std::uint64_t seed, const fs::path& out,
             const std::string& encode_file, double radius) {
  const HyperModel model = load_checkpoint(ckpt);
  Rng rng(seed);
  const LatentChoice c = choose_latent(model, encode_file, rng);
  TriMesh mesh = generate_mesh(model, c.z, level, radius);
  for (auto& v : mesh.vertices) v = v * c.scale + c.centroid;
  ensure_parent(out);
  save_mesh_obj(mesh, out);
  return 0;
}

int run_interpolate_latent(const fs::path& ckpt, const fs::path& a, const fs::path& b, int steps,
                           int n, int level, std::uint64_t seed, const fs::path& out) {
  const HyperModel model = load_checkpoint(ckpt);
  const auto frames = interpolate_latent(model, normalize_cloud(load_cloud(a)).cloud,
                                         normalize_cloud(load_cloud(b)).cloud, steps, n, level,
                                         seed);
  ensure_dir(out);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    save_cloud(frames[i].cloud, out / numbered("step_%03d.xyz", static_cast<int>(i)));
    save_mesh_obj(frames[i].mesh, out / numbered("step_%03d.obj", static_cast<int>(i)));
  }
  return 0;
}

int run_interpolate_surface(const fs::path& ckpt, const fs::path& cloud, const std::string& pa,
                            const std::string& pb, int steps, const fs::path& out) {
  const HyperModel model = load_checkpoint(ckpt);
  const auto path = interpolate_surface(model, normalize_cloud(load_cloud(cloud)).cloud,
                                        parse_point(pa), parse_point(pb), steps);
  PointCloud pc(static_cast<Eigen::Index>(path.size()), 3);
  for (std::size_t i = 0; i < path.size(); ++i) pc.row(static_cast<Eigen::Index>(i)) = path[i];
  ensure_dir(out);
  save_cloud(pc, out / "path.xyz");
  return 0;
}

int run_evaluate(const fs::path& gen, const fs::path& ref, const std::string& dist, int res,
                 std::uint64_t seed, const fs::path& out) {
  const DistanceKind kind = parse_distance(dist);
  const auto sg = normalized(load_dir(gen));
  const auto sr = normalized(load_dir(ref));
  const MetricReport report = evaluate_sets(sg, sr, kind, res, seed);
  const std::string text = report_to_json(report);
  ensure_parent(out);
  std::ofstream f(out);
  if (!(f << text << '\n')) throw std::runtime_error("cannot write report '" + out.string() + "'");
  std::cout << text << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HyperCloud: point clouds and meshes from a hypernetwork autoencoder"};
  app.require_subcommand(1);

  // synth
  std::string family;
  int count = 0, points = 0;
  std::uint64_t seed = 0;
  std::string out;
  auto* synth = app.add_subcommand("synth", "sample a synthetic dataset of shape clouds");
  synth->add_option("--family", family, "ellipsoid, box or two-lobe")->required();
  synth->add_option("--count", count, "number of clouds")->required();
  synth->add_option("--points", points, "points per cloud")->required();
  synth->add_option("--seed", seed);
  synth->add_option("--out", out, "output directory")->required();

  // train
  std::string data, config, history;
  int log_every = 0;
  auto* trn = app.add_subcommand("train", "train a model on a directory of .xyz clouds");
  trn->add_option("--data", data, "directory of .xyz clouds")->required();
  trn->add_option("--config", config, "training config JSON")->required();
  trn->add_option("--out", out, "checkpoint path")->required();
  trn->add_option("--history", history, "loss history CSV (default: history.csv next to --out)");
  trn->add_option("--log-every", log_every, "print the batch loss every N steps");

  // generate
  std::string ckpt, encode_file;
  int n = 2048;
  std::optional<double> radius;
  std::optional<int> gen_count;
  auto* gen = app.add_subcommand("generate", "sample point clouds from a checkpoint");
  gen->add_option("--ckpt", ckpt)->required();
  gen->add_option("--n", n, "points per cloud")->capture_default_str();
  gen->add_option("--seed", seed);
  gen->add_option("--out", out, ".xyz file, or a directory when --count is given")->required();
  gen->add_option("--encode", encode_file, "reconstruct this cloud instead of sampling z");
  gen->add_option("--sphere-radius", radius, "sample target inputs on a sphere of radius R");
  gen->add_option("--count", gen_count, "write this many clouds into the --out directory");

  // mesh
  int level = 3;
  double mesh_radius = 1.0;
  auto* msh = app.add_subcommand("mesh", "write an OBJ mesh from a checkpoint");
  msh->add_option("--ckpt", ckpt)->required();
  msh->add_option("--level", level, "icosphere subdivision level")->capture_default_str();
  msh->add_option("--seed", seed);
  msh->add_option("--out", out, "OBJ path")->required();
  msh->add_option("--encode", encode_file, "mesh this cloud instead of a sampled z");
  msh->add_option("--sphere-radius", mesh_radius, "radius of the input sphere");

  // interpolate
  std::string cloud_a, cloud_b, cloud, pa, pb;
  int steps = 5;
  auto* itp = app.add_subcommand("interpolate", "latent or prior-space interpolation");
  itp->add_option("--ckpt", ckpt)->required();
  itp->add_option("--steps", steps)->capture_default_str();
  itp->add_option("--out", out, "output directory")->required();
  itp->add_option("--seed", seed);
  itp->add_option("--n", n, "points per frame cloud")->capture_default_str();
  itp->add_option("--level", level, "icosphere level of frame meshes")->capture_default_str();
  auto* oa = itp->add_option("--cloud-a", cloud_a, "start cloud (latent mode)");
  auto* ob = itp->add_option("--cloud-b", cloud_b, "end cloud (latent mode)");
  auto* oc = itp->add_option("--cloud", cloud, "cloud to encode (prior-space mode)");
  auto* opa = itp->add_option("--pa", pa, "start prior point x,y,z");
  auto* opb = itp->add_option("--pb", pb, "end prior point x,y,z");
  oa->needs(ob);
  ob->needs(oa);
  oc->needs(opa, opb)->excludes(oa, ob);

  // evaluate
  std::string gen_dir, ref_dir, dist = "cd";
  int res = 32;
  auto* ev = app.add_subcommand("evaluate", "JSD, MMD, COV and 1-NNA between two cloud sets");
  ev->add_option("--gen", gen_dir)->required();
  ev->add_option("--ref", ref_dir)->required();
  ev->add_option("--dist", dist, "cd or emd")->capture_default_str();
  ev->add_option("--jsd-res", res, "occupancy grid resolution")->capture_default_str();
  ev->add_option("--seed", seed);
  ev->add_option("--out", out, "report JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth) return run_synth(family, count, points, seed, out);
    if (*trn) return run_train(data, config, out, history, log_every);
    if (*gen) return run_generate(ckpt, n, seed, out, encode_file, radius, gen_count);
    if (*msh) return run_mesh(ckpt, level, seed, out, encode_file, mesh_radius);
    if (*itp) {
      if (!cloud.empty()) return run_interpolate_surface(ckpt, cloud, pa, pb, steps, out);
      if (cloud_a.empty()) throw std::runtime_error("interpolate needs --cloud-a/--cloud-b or --cloud/--pa/--pb");
      return run_interpolate_latent(ckpt, cloud_a, cloud_b, steps, n, level, seed, out);
    }
    if (*ev) return run_evaluate(gen_dir, ref_dir, dist, res, seed, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
