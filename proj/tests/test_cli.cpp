#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "pointpose/io.hpp"
#include "pointpose/net.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pointpose;

std::string bin() {
  const char* p = std::getenv("POINTPOSE_BIN");
  REQUIRE_MESSAGE(p != nullptr, "POINTPOSE_BIN must point at the CLI binary");
  return p;
}

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

/// Runs the CLI with the given arguments, capturing both streams.
RunResult run_cli(const std::string& args, const fs::path& workdir) {
  const fs::path err_file = workdir / "stderr.txt";
  const std::string cmd =
      "cd " + workdir.string() + " && " + bin() + " " + args + " 2>" +
      err_file.string();
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream es(err_file);
  std::stringstream ss;
  ss << es.rdbuf();
  r.err = ss.str();
  return r;
}

fs::path temp_dir() {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() /
                       ("pointpose_cli_" + std::to_string(getpid()) + "_" +
                        std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// Generates a small two-class dataset; returns its root directory.
fs::path small_dataset(const fs::path& dir, int seed) {
  const std::string cfg_path = (dir / "gen.json").string();
  std::ofstream(cfg_path)
      << R"({"n-samples": 10, "n-test": 4, "n-points": 32,
             "classes": [
               {"name": "blob_x", "kind": "blob", "dims": [0.035, 0.05, 0.065],
                "model_points": 2048, "model_seed": 21},
               {"name": "blob_y", "kind": "blob", "dims": [0.06, 0.045, 0.03],
                "model_points": 2048, "model_seed": 22}]})";
  const auto r = run_cli("generate --out ds --config " + cfg_path + " --seed " +
                             std::to_string(seed),
                         dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  return dir / "ds";
}

const std::string kTinyNetFlags =
    " --point-widths 8,16 --head-widths 8 --batch-size 4";

}  // namespace

TEST_CASE("generate writes train and test splits with disjoint seeds") {
  const fs::path dir = temp_dir();
  const auto r = run_cli(
      "generate --out ds --n-samples 10 --n-test 3 --n-points 32 --seed 40",
      dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);

  const json train = json::parse(read_file(dir / "ds/train/manifest.json"));
  const json test = json::parse(read_file(dir / "ds/test/manifest.json"));
  CHECK(train.at("seed") == 40);
  CHECK(train.at("n_samples") == 10);
  CHECK(test.at("seed") == 50);  // train seed + n_samples: no shared draws
  CHECK(test.at("n_samples") == 3);
  CHECK(train.at("classes").size() == 4);  // built-in object set

  std::size_t sample_files = 0;
  for (const auto& e : fs::directory_iterator(dir / "ds/train"))
    if (e.path().extension() == ".bin") ++sample_files;
  CHECK(sample_files == 10);

  // Summary goes to stdout, one key=value line per split.
  CHECK(r.out.find("split=train") != std::string::npos);
  CHECK(r.out.find("split=test") != std::string::npos);

  // Same invocation, fresh directory: identical manifest bytes.
  const auto r2 = run_cli(
      "generate --out ds2 --n-samples 10 --n-test 3 --n-points 32 --seed 40",
      dir);
  REQUIRE(r2.exit_code == 0);
  CHECK(read_file(dir / "ds/train/manifest.json") ==
        read_file(dir / "ds2/train/manifest.json"));
  CHECK(read_file(dir / "ds/train/sample_000007.bin") ==
        read_file(dir / "ds2/train/sample_000007.bin"));
}

TEST_CASE("train logs one line per epoch and writes a loadable checkpoint") {
  const fs::path dir = temp_dir();
  small_dataset(dir, 60);

  const auto r = run_cli("train --data ds/train --out ck.bin --epochs 2" +
                             kTinyNetFlags + " --seed 60",
                         dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);

  const auto lines = lines_of(r.out);
  REQUIRE(lines.size() == 3);  // two epochs plus the checkpoint line
  std::size_t epoch = 0;
  double loss = 0.0, rot = 0.0, trans = 0.0;
  REQUIRE(std::sscanf(lines[0].c_str(),
                      "epoch=%zu loss=%lf rot-err-deg=%lf trans-err-mm=%lf",
                      &epoch, &loss, &rot, &trans) == 4);
  CHECK(epoch == 1);
  CHECK(loss > 0.0);
  CHECK(rot > 0.0);
  CHECK(rot < 180.0);
  CHECK(trans > 0.0);
  CHECK(lines[2] == "checkpoint=ck.bin epochs=2");

  const Checkpoint ck = load_checkpoint(dir / "ck.bin");
  CHECK(ck.params.cfg.n_points == 32);
  CHECK(ck.params.cfg.n_classes == 2);
  CHECK(ck.params.cfg.point_mlp_widths == std::vector<std::size_t>{8, 16});
  CHECK(ck.adam.has_value());
  CHECK(ck.adam->step == 2 * 3);  // 10 samples, batches of 4: 3 per epoch

  // Identical invocation: bitwise identical checkpoint.
  const auto r2 = run_cli("train --data ds/train --out ck2.bin --epochs 2" +
                              kTinyNetFlags + " --seed 60",
                          dir);
  REQUIRE(r2.exit_code == 0);
  CHECK(read_file(dir / "ck.bin") == read_file(dir / "ck2.bin"));
}

TEST_CASE("train ablation switches reach the checkpoint config") {
  const fs::path dir = temp_dir();
  small_dataset(dir, 61);

  const auto r = run_cli(
      "train --data ds/train --out ck.bin --epochs 1" + kTinyNetFlags +
          " --rotation-repr quaternion --rotation-loss l2 --shared-layers all",
      dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const Checkpoint ck = load_checkpoint(dir / "ck.bin");
  CHECK(ck.params.cfg.rotation_repr == RotationRepr::Quaternion);
  CHECK(ck.params.cfg.rotation_loss == RotationLoss::L2);
  CHECK(ck.params.cfg.shared_layers == NetConfig::kSharedAll);

  const auto bad = run_cli("train --data ds/train --epochs 1" + kTinyNetFlags +
                               " --shared-layers most",
                           dir);
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("shared-layers") != std::string::npos);
}

TEST_CASE("eval writes the report text and a machine-readable results file") {
  const fs::path dir = temp_dir();
  small_dataset(dir, 62);
  REQUIRE(run_cli("train --data ds/train --out ck.bin --epochs 1" +
                      kTinyNetFlags + " --seed 62",
                  dir)
              .exit_code == 0);

  const auto r = run_cli(
      "eval --checkpoint ck.bin --data ds/test --out res.json --seed 62", dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  CHECK(r.out.find("overall") != std::string::npos);
  CHECK(r.out.find("occlusion bins") != std::string::npos);

  const json res = json::parse(read_file(dir / "res.json"));
  for (const char* key :
       {"per_class", "overall", "occlusion_bins", "raw_errors", "config"})
    CHECK_MESSAGE(res.contains(key), key);
  CHECK(res.at("occlusion_bins").size() == 8);
  CHECK(res.at("per_class").size() == 2);
  CHECK(res.at("raw_errors").at("ad").size() == 4);
  CHECK(res.at("raw_errors").at("ads").size() == 4);
  CHECK(res.at("used_icp") == false);
  CHECK(res.at("eval_seconds").get<double>() >= 0.0);
  CHECK(res.at("config").at("net").at("n_points") == 32);
  CHECK(res.at("config").at("icp-iterations") == 10);

  // Every aggregate metric lands in [0, 100].
  auto in_range = [](const json& c, const char* key) {
    const double v = c.at(key).get<double>();
    return v >= 0.0 && v <= 100.0;
  };
  json entries = res.at("per_class");
  entries.push_back(res.at("overall"));
  for (const json& c : entries) {
    for (const char* key : {"mean_rotation_error_rad", "mean_translation_error_m",
                            "ad_auc", "ads_auc", "ad_accuracy_1cm",
                            "ads_accuracy_1cm"})
      CHECK_MESSAGE(in_range(c, key), key);
  }

  // Mismatched dataset is named in the diagnostic.
  const auto bad = run_cli("eval --checkpoint ck.bin --data ds --out r.json", dir);
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("ds") != std::string::npos);
}

TEST_CASE("infer prints a pose that parses back and repeats bitwise") {
  const fs::path dir = temp_dir();
  small_dataset(dir, 63);
  REQUIRE(run_cli("train --data ds/train --out ck.bin --epochs 1" +
                      kTinyNetFlags + " --seed 63",
                  dir)
              .exit_code == 0);

  // A segment cloud: points of a posed blob, written as PLY.
  {
    std::ofstream os(dir / "cloud.ply");
    os << "ply\nformat ascii 1.0\nelement vertex 48\nproperty float x\n"
          "property float y\nproperty float z\nend_header\n";
    std::mt19937_64 gen(63);
    std::normal_distribution<double> d(0.0, 0.02);
    for (int i = 0; i < 48; ++i)
      os << d(gen) << ' ' << d(gen) << ' ' << d(gen) + 1.0 << '\n';
  }

  const auto r1 = run_cli("infer --checkpoint ck.bin --cloud cloud.ply --class-id 1", dir);
  REQUIRE_MESSAGE(r1.exit_code == 0, r1.err);
  double v[6];
  REQUIRE(std::sscanf(r1.out.c_str(),
                      "rx=%lf ry=%lf rz=%lf tx=%lf ty=%lf tz=%lf", &v[0],
                      &v[1], &v[2], &v[3], &v[4], &v[5]) == 6);
  // Nine significant digits survive a print -> parse -> print round trip.
  char reprinted[256];
  std::snprintf(reprinted, sizeof reprinted,
                "rx=%.9g ry=%.9g rz=%.9g tx=%.9g ty=%.9g tz=%.9g\n", v[0],
                v[1], v[2], v[3], v[4], v[5]);
  CHECK(r1.out == reprinted);

  const auto r2 = run_cli("infer --checkpoint ck.bin --cloud cloud.ply --class-id 1", dir);
  CHECK(r1.out == r2.out);

  const auto bad_class = run_cli(
      "infer --checkpoint ck.bin --cloud cloud.ply --class-id 9", dir);
  CHECK(bad_class.exit_code == 1);
  CHECK(bad_class.err.find("class id 9") != std::string::npos);

  const auto bad_model = run_cli(
      "infer --checkpoint ck.bin --cloud cloud.ply --class-id 0 --icp gone.ply",
      dir);
  CHECK(bad_model.exit_code == 1);
  CHECK(bad_model.err.find("gone.ply") != std::string::npos);
}

TEST_CASE("refine returns the init pose at the optimum and traces residuals") {
  const fs::path dir = temp_dir();

  // Model on a box surface grid; cloud is the same set translated.
  {
    std::ofstream om(dir / "model.ply"), oc(dir / "cloud.ply");
    std::vector<std::array<double, 3>> pts;
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) {
        const double u = -0.03 + 0.06 * i / 9.0, w = -0.02 + 0.04 * j / 9.0;
        pts.push_back({u, w, 0.025});
        pts.push_back({u, w, -0.025});
      }
    const std::string header =
        "ply\nformat ascii 1.0\nelement vertex " + std::to_string(pts.size()) +
        "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    om << header;
    oc << header;
    char line[128];
    for (const auto& p : pts) {
      std::snprintf(line, sizeof line, "%.9g %.9g %.9g\n", p[0], p[1], p[2]);
      om << line;
      std::snprintf(line, sizeof line, "%.9g %.9g %.9g\n", p[0] + 0.01,
                    p[1] - 0.02, p[2] + 0.8);
      oc << line;
    }
  }

  const auto r = run_cli(
      "refine --cloud cloud.ply --model model.ply --init 0 0 0 0.01 -0.02 0.8",
      dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const auto lines = lines_of(r.out);
  REQUIRE(lines.size() >= 3);
  double v[6];
  REQUIRE(std::sscanf(lines.back().c_str(),
                      "rx=%lf ry=%lf rz=%lf tx=%lf ty=%lf tz=%lf", &v[0],
                      &v[1], &v[2], &v[3], &v[4], &v[5]) == 6);
  CHECK(std::abs(v[0]) < 1e-8);
  CHECK(std::abs(v[1]) < 1e-8);
  CHECK(std::abs(v[2]) < 1e-8);
  CHECK(v[3] == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(v[4] == doctest::Approx(-0.02).epsilon(1e-9));
  CHECK(v[5] == doctest::Approx(0.8).epsilon(1e-9));

  // From a nudged init the trace stays within the iteration budget and the
  // overridden schedule flags are accepted.
  const auto r2 = run_cli(
      "refine --cloud cloud.ply --model model.ply --init 0 0 0 0.013 -0.018 0.803"
      " --icp-radius 0.05 --icp-decay 1.0 --icp-iterations 6",
      dir);
  REQUIRE_MESSAGE(r2.exit_code == 0, r2.err);
  std::size_t iter_lines = 0;
  for (const auto& line : lines_of(r2.out))
    if (line.rfind("iter=", 0) == 0) ++iter_lines;
  CHECK(iter_lines >= 1);
  CHECK(iter_lines <= 6);
  REQUIRE(std::sscanf(lines_of(r2.out).back().c_str(),
                      "rx=%lf ry=%lf rz=%lf tx=%lf ty=%lf tz=%lf", &v[0],
                      &v[1], &v[2], &v[3], &v[4], &v[5]) == 6);
  CHECK(v[3] == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(v[4] == doctest::Approx(-0.02).epsilon(1e-6));
  CHECK(v[5] == doctest::Approx(0.8).epsilon(1e-6));
}

TEST_CASE("config file fills defaults and command-line flags win") {
  const fs::path dir = temp_dir();
  small_dataset(dir, 64);
  std::ofstream(dir / "run.json")
      << R"({"epochs": 1, "batch-size": 4, "point-widths": [8, 16],
             "head-widths": [8], "seed": 64})";

  const auto r = run_cli("train --data ds/train --out a.bin --config run.json", dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  std::size_t epoch_lines = 0;
  for (const auto& line : lines_of(r.out))
    if (line.rfind("epoch=", 0) == 0) ++epoch_lines;
  CHECK(epoch_lines == 1);

  const auto r2 = run_cli(
      "train --data ds/train --out b.bin --config run.json --epochs 2", dir);
  REQUIRE(r2.exit_code == 0);
  epoch_lines = 0;
  for (const auto& line : lines_of(r2.out))
    if (line.rfind("epoch=", 0) == 0) ++epoch_lines;
  CHECK(epoch_lines == 2);

  std::ofstream(dir / "bad.json") << R"({"epochs": 1, "epochz": 2})";
  const auto bad = run_cli("train --data ds/train --config bad.json", dir);
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("epochz") != std::string::npos);
  CHECK(bad.err.find("bad.json") != std::string::npos);

  const auto gone = run_cli("train --data ds/train --config nope.json", dir);
  CHECK(gone.exit_code == 1);
  CHECK(gone.err.find("nope.json") != std::string::npos);
}
