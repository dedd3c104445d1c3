#include "hypercloud/checkpoint.hpp"
#include "hypercloud/geometry.hpp"

#include "support.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace hypercloud;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + HYPERCLOUD_CLI + "\" " + args + " > \"" +
                          out.string() + "\" 2> \"" + err.string() + "\"";
  const int raw = std::system(cmd.c_str());
  const int status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return {status, hctest::read_text(out), hctest::read_text(err)};
}

int count_prefix(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  int n = 0;
  for (std::string line; std::getline(in, line);) n += line.rfind(prefix, 0) == 0;
  return n;
}

int count_lines(const std::string& text) {
  return static_cast<int>(std::count(text.begin(), text.end(), '\n'));
}

const char* kSmallConfig = R"({
  "loss": "cd", "lambda": 0.001, "learning_rate": 0.005, "steps": 20, "batch_size": 4,
  "seed": 5, "latent_dim": 8, "encoder_widths": [3, 16, 32], "head_widths": [32, 16],
  "decoder_hidden": [32], "target_widths": [3, 16, 3]
})";

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("synth writes numbered clouds and a manifest, deterministically") {
  const auto dir = hctest::scratch_dir("cli_synth");
  const auto d = dir.string();
  REQUIRE(cli("synth --family ellipsoid --count 32 --points 256 --seed 7 --out " + d + "/a", dir).status == 0);
  REQUIRE(cli("synth --family ellipsoid --count 32 --points 256 --seed 7 --out " + d + "/b", dir).status == 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) files += e.path().extension() == ".xyz";
  CHECK(files == 32);
  CHECK(load_cloud(dir / "a" / "cloud_0031.xyz").rows() == 256);
  for (int i = 0; i < 32; i += 7) {
    char name[32];
    std::snprintf(name, sizeof name, "cloud_%04d.xyz", i);
    CHECK(hctest::read_text(dir / "a" / name) == hctest::read_text(dir / "b" / name));
  }
  const auto manifest = nlohmann::json::parse(hctest::read_text(dir / "a" / "manifest.json"));
  CHECK(manifest["family"] == "ellipsoid");
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["clouds"].size() == 32);
  CHECK(manifest["clouds"][0]["params"].size() == 3);

  const Run small = cli("synth --family box --count 2 --points 4 --seed 1 --out " + d + "/c", dir);
  CHECK(small.status != 0);
  CHECK(small.err.find("8") != std::string::npos);
  CHECK(cli("synth --family torus --count 2 --points 16 --out " + d + "/c", dir).status != 0);
}

TEST_CASE("train, generate, mesh, interpolate, evaluate") {
  const auto dir = hctest::scratch_dir("cli_pipeline");
  const auto d = dir.string();
  REQUIRE(cli("synth --family two-lobe --count 6 --points 64 --seed 3 --out " + d + "/data", dir).status == 0);
  write(dir / "config.json", kSmallConfig);

  const Run t1 = cli("train --data " + d + "/data --config " + d + "/config.json --out " + d + "/run1/m.json", dir);
  REQUIRE_MESSAGE(t1.status == 0, t1.err);
  CHECK(fs::exists(dir / "run1" / "m.json"));
  const std::string hist = hctest::read_text(dir / "run1" / "history.csv");
  CHECK(hist.rfind("step,total,err,kl\n", 0) == 0);
  CHECK(count_lines(hist) == 21);
  REQUIRE(cli("train --data " + d + "/data --config " + d + "/config.json --out " + d + "/run2/m.json", dir).status == 0);
  CHECK(hctest::read_text(dir / "run2" / "history.csv") == hist);
  CHECK(hctest::read_text(dir / "run2" / "m.json") == hctest::read_text(dir / "run1" / "m.json"));

  const std::string ckpt = d + "/run1/m.json";
  const Run g = cli("generate --ckpt " + ckpt + " --n 5000 --seed 1 --out " + d + "/g.xyz", dir);
  REQUIRE_MESSAGE(g.status == 0, g.err);
  CHECK(count_lines(hctest::read_text(dir / "g.xyz")) == 5000);
  REQUIRE(cli("generate --ckpt " + ckpt + " --n 5000 --seed 1 --out " + d + "/g2.xyz", dir).status == 0);
  CHECK(hctest::read_text(dir / "g.xyz") == hctest::read_text(dir / "g2.xyz"));
  REQUIRE(cli("generate --ckpt " + ckpt + " --n 100 --seed 1 --sphere-radius 2.795 --out " + d + "/s.xyz", dir).status == 0);
  REQUIRE(cli("generate --ckpt " + ckpt + " --n 64 --encode " + d + "/data/cloud_0000.xyz --out " + d + "/r.xyz", dir).status == 0);
  CHECK(load_cloud(dir / "r.xyz").rows() == 64);

  const Run m = cli("mesh --ckpt " + ckpt + " --level 3 --out " + d + "/a.obj", dir);
  REQUIRE_MESSAGE(m.status == 0, m.err);
  const std::string obj = hctest::read_text(dir / "a.obj");
  CHECK(count_prefix(obj, "v ") == 642);
  CHECK(count_prefix(obj, "f ") == 1280);

  const Run i = cli("interpolate --ckpt " + ckpt + " --steps 5 --n 128 --level 2 --cloud-a " + d +
                        "/data/cloud_0000.xyz --cloud-b " + d + "/data/cloud_0001.xyz --out " + d + "/interp",
                    dir);
  REQUIRE_MESSAGE(i.status == 0, i.err);
  int objs = 0, xyzs = 0;
  for (const auto& e : fs::directory_iterator(dir / "interp")) {
    objs += e.path().extension() == ".obj";
    xyzs += e.path().extension() == ".xyz";
  }
  CHECK(objs == 5);
  CHECK(xyzs == 5);
  const Run surf = cli("interpolate --ckpt " + ckpt + " --steps 4 --cloud " + d +
                           "/data/cloud_0000.xyz --pa 0,0,0 --pb 0.5,0.5,0 --out " + d + "/surf",
                       dir);
  REQUIRE_MESSAGE(surf.status == 0, surf.err);
  CHECK(load_cloud(dir / "surf" / "path.xyz").rows() == 4);
  CHECK(cli("interpolate --ckpt " + ckpt + " --steps 4 --cloud " + d +
                "/data/cloud_0000.xyz --pa 2,0,0 --pb 0,0,0 --out " + d + "/surf2",
            dir).status != 0);

  const Run e = cli("evaluate --gen " + d + "/data --ref " + d + "/data --out " + d + "/rep.json", dir);
  REQUIRE_MESSAGE(e.status == 0, e.err);
  const auto rep = nlohmann::json::parse(hctest::read_text(dir / "rep.json"));
  std::map<std::string, double> values;
  for (const auto& item : rep["metrics"]) values[item["name"]] = item["value"];
  CHECK(values.at("JSD") == 0.0);
  CHECK(values.at("MMD") == 0.0);
  CHECK(values.at("COV") == 1.0);
  CHECK(values.at("1-NNA") == 0.0);
  CHECK(rep["generated_size"] == 6);
  CHECK(rep["reference_size"] == 6);
}

TEST_CASE("cli errors go to stderr with a nonzero status") {
  const auto dir = hctest::scratch_dir("cli_errors");
  const auto d = dir.string();
  fs::create_directories(dir / "empty");
  write(dir / "config.json", kSmallConfig);
  const Run empty = cli("train --data " + d + "/empty --config " + d + "/config.json --out " + d + "/m.json", dir);
  CHECK(empty.status != 0);
  CHECK(empty.err.find("no .xyz") != std::string::npos);

  REQUIRE(cli("synth --family box --count 2 --points 16 --seed 1 --out " + d + "/data", dir).status == 0);
  write(dir / "bad.json", R"({"loss": "cd", "lambda": 0.001, "steps": 5, "batch_size": 2, "seed": 1})");
  const Run missing = cli("train --data " + d + "/data --config " + d + "/bad.json --out " + d + "/m.json", dir);
  CHECK(missing.status != 0);
  CHECK(missing.err.find("learning_rate") != std::string::npos);

  write(dir / "m.json", "{\"format_version\": 1, \"latent_dim\": 4");
  const Run trunc = cli("mesh --ckpt " + d + "/m.json --out " + d + "/x.obj", dir);
  CHECK(trunc.status != 0);
  CHECK(trunc.err.find("missing field") != std::string::npos);

  CHECK(cli("bogus", dir).status != 0);
  CHECK(cli("", dir).status != 0);
}

TEST_CASE("evaluate with emd") {
  const auto dir = hctest::scratch_dir("cli_emd");
  const auto d = dir.string();
  REQUIRE(cli("synth --family ellipsoid --count 2 --points 600 --seed 1 --out " + d + "/a", dir).status == 0);
  REQUIRE(cli("synth --family ellipsoid --count 2 --points 600 --seed 2 --out " + d + "/b", dir).status == 0);
  const Run big = cli("evaluate --gen " + d + "/a --ref " + d + "/b --dist emd --out " + d + "/r.json", dir);
  CHECK(big.status == 0);
  CHECK(big.err.find("O(n^3)") != std::string::npos);

  REQUIRE(cli("synth --family ellipsoid --count 2 --points 50 --seed 3 --out " + d + "/c", dir).status == 0);
  const Run mismatch = cli("evaluate --gen " + d + "/a --ref " + d + "/c --dist emd --out " + d + "/r2.json", dir);
  CHECK(mismatch.status != 0);
  CHECK(mismatch.err.find("resample") != std::string::npos);
}
