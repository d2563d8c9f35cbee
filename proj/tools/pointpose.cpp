// Command-line front end: dataset generation, training, evaluation,
// single-cloud inference and standalone ICP refinement.
//
// Configuration precedence: built-in defaults < --config JSON file < flags.
// The config file uses flat keys mirroring the long flag names, e.g.
// {"epochs": 30, "batch-size": 64}; an optional "classes" array overrides the
// default object set for `generate`.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "pointpose/icp.hpp"
#include "pointpose/io.hpp"
#include "pointpose/net.hpp"
#include "pointpose/report.hpp"
#include "pointpose/synth.hpp"
#include "pointpose/train.hpp"

namespace {

using nlohmann::json;
using namespace pointpose;

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

/// Every tunable of every command. Only the fields bound to the active
/// subcommand matter for a given run.
struct RunConfig {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 7;

  // generate
  std::size_t n_samples = 2000;
  std::size_t n_test = 0;  // 0 picks n_samples / 5
  std::size_t n_points = 256;
  double noise_sigma = 0.003;
  CameraIntrinsics cam;
  PoseRanges ranges;
  std::vector<ClassSpec> classes = default_classes();

  // train
  std::string data_dir;
  std::size_t epochs = 90;
  std::size_t batch_size = 128;
  double lr = 0.0008;
  double alpha = 10.0;
  std::size_t save_interval = 10;
  std::vector<std::size_t> point_widths = {64, 128, 1024};
  std::vector<std::size_t> head_widths = {512, 256};
  std::string rotation_repr = "axis_angle";
  std::string rotation_loss = "geodesic";
  std::string shared_layers = "0";
  double width_multiplier = 1.0;

  // eval / infer / refine
  std::string checkpoint_path;
  bool use_icp = false;
  std::string cloud_path;
  std::string model_path;  // infer: --icp PATH, refine: --model PATH
  std::size_t class_id = 0;
  std::vector<double> init_pose;
  IcpConfig icp;
};

/// One flag mirrored into the config file under `key`.
struct ConfigKey {
  std::string key;
  CLI::Option* opt;
  std::function<void(const json&)> apply;
};

std::set<std::string>& known_keys() {
  static std::set<std::string> keys{"classes"};
  return keys;
}

/// Wraps one subcommand so every option it adds is also addressable from the
/// JSON config file under the flag's name without the leading dashes.
class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& desc)
      : cmd_(app.add_subcommand(name, desc)) {}

  template <typename T>
  CLI::Option* add(const std::string& flag, T& var, const std::string& desc) {
    CLI::Option* opt = cmd_->add_option(flag, var, desc);
    bind(flag, opt, var);
    return opt;
  }

  CLI::Option* add_flag(const std::string& flag, bool& var,
                        const std::string& desc) {
    CLI::Option* opt = cmd_->add_flag(flag, var, desc);
    bind(flag, opt, var);
    return opt;
  }

  void add_config_and_seed(RunConfig& rc) {
    cmd_->add_option("--config", rc.config_path,
                     "JSON config file; flags given on the command line win");
    add("--seed", rc.seed, "master RNG seed");
  }

  void add_shared(RunConfig& rc, const std::string& out_default,
                  const std::string& out_desc) {
    add_config_and_seed(rc);
    rc.out = out_default;
    add("--out", rc.out, out_desc);
  }

  /// Key reachable only from the config file, with a custom parser.
  void add_config_only(const std::string& key,
                       std::function<void(const json&)> apply) {
    known_keys().insert(key);
    keys_.push_back({key, nullptr, std::move(apply)});
  }

  void add_icp_options(RunConfig& rc) {
    add("--icp-iterations", rc.icp.max_iterations, "refinement iterations");
    add("--icp-radius", rc.icp.initial_radius,
        "initial correspondence radius, meters");
    add("--icp-decay", rc.icp.radius_decay, "radius decay factor per iteration");
    add("--icp-min-pairs", rc.icp.min_correspondences,
        "starvation threshold on matched pairs");
    add("--icp-max-model-points", rc.icp.max_model_points,
        "model subsample cap before matching");
  }

  bool parsed() const { return cmd_->parsed(); }

  /// File overrides defaults, flags override the file. Unknown keys are
  /// rejected against the keys of every command, so one config file can
  /// drive a whole generate/train/eval pipeline.
  void apply_config(const std::string& path) const {
    std::ifstream is(path);
    if (!is) throw std::runtime_error(path + ": cannot open config file");
    json j;
    try {
      j = json::parse(is);
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ": " + e.what());
    }
    for (const auto& [key, value] : j.items()) {
      if (!known_keys().count(key))
        throw std::runtime_error(path + ": unknown config key \"" + key + "\"");
    }
    for (const ConfigKey& k : keys_) {
      if (!j.contains(k.key) || (k.opt != nullptr && k.opt->count() > 0))
        continue;
      try {
        k.apply(j.at(k.key));
      } catch (const json::exception& e) {
        throw std::runtime_error(path + ": key \"" + k.key + "\": " + e.what());
      }
    }
  }

 private:
  template <typename T>
  void bind(const std::string& flag, CLI::Option* opt, T& var) {
    const auto start = flag.find_first_not_of('-');
    std::string key = flag.substr(start);
    known_keys().insert(key);
    keys_.push_back({std::move(key), opt, [&var](const json& v) {
                       var = v.get<T>();
                     }});
  }

  CLI::App* cmd_;
  std::vector<ConfigKey> keys_;
};

int parse_shared_layers(const std::string& s) {
  if (s == "all") return NetConfig::kSharedAll;
  std::size_t pos = 0;
  int value = 0;
  try {
    value = std::stoi(s, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != s.size())
    throw std::runtime_error("shared-layers must be an integer or \"all\", got \"" +
                             s + "\"");
  return value;
}

/// Net config from the flat CLI fields; n_points and n_classes always come
/// from the dataset or checkpoint at hand. Reuses the JSON path so enum
/// strings and invariants are validated in one place.
NetConfig net_config_from(const RunConfig& rc, std::size_t n_points,
                          std::size_t n_classes) {
  return net_config_from_json(json{
      {"point_mlp_widths", rc.point_widths},
      {"head_widths", rc.head_widths},
      {"rotation_repr", rc.rotation_repr},
      {"rotation_loss", rc.rotation_loss},
      {"shared_layers", parse_shared_layers(rc.shared_layers)},
      {"n_points", n_points},
      {"n_classes", n_classes},
      {"alpha", rc.alpha},
      {"width_multiplier", rc.width_multiplier},
  });
}

json icp_config_to_json(const IcpConfig& c) {
  return json{{"icp-iterations", c.max_iterations},
              {"icp-radius", c.initial_radius},
              {"icp-decay", c.radius_decay},
              {"icp-min-pairs", c.min_correspondences},
              {"icp-max-model-points", c.max_model_points}};
}

void print_pose(const Pose& p) {
  std::printf("rx=%.9g ry=%.9g rz=%.9g tx=%.9g ty=%.9g tz=%.9g\n",
              p.rotation.r.x(), p.rotation.r.y(), p.rotation.r.z(),
              p.translation.x(), p.translation.y(), p.translation.z());
}

void print_split_summary(const char* split, const std::filesystem::path& dir,
                         const DatasetManifest& m) {
  std::printf(
      "split=%s dir=%s classes=%zu samples=%zu points=%zu noise-sigma=%g "
      "seed=%llu\n",
      split, dir.string().c_str(), m.classes.size(), m.n_samples, m.n_points,
      m.noise_sigma, static_cast<unsigned long long>(m.seed));
}

int cmd_generate(const RunConfig& rc) {
  DatasetManifest m;
  m.classes = rc.classes;
  m.intrinsics = rc.cam;
  m.pose_ranges = rc.ranges;
  m.n_samples = rc.n_samples;
  m.n_points = rc.n_points;
  m.noise_sigma = rc.noise_sigma;
  m.seed = rc.seed;

  const std::filesystem::path root(rc.out);
  const Dataset train_ds = make_dataset(m);
  save_dataset(root / "train", train_ds);
  print_split_summary("train", root / "train", m);

  // Per-sample engines are seeded seed + i, so starting the test split at
  // seed + n_samples keeps every drawn pose disjoint from the train split.
  DatasetManifest mt = m;
  mt.n_samples = rc.n_test > 0 ? rc.n_test : std::max<std::size_t>(1, rc.n_samples / 5);
  mt.seed = rc.seed + rc.n_samples;
  const Dataset test_ds = make_dataset(mt);
  save_dataset(root / "test", test_ds);
  print_split_summary("test", root / "test", mt);
  return 0;
}

int cmd_train(const RunConfig& rc) {
  const Dataset ds = load_dataset(rc.data_dir);
  const NetConfig cfg =
      net_config_from(rc, ds.manifest.n_points, ds.manifest.classes.size());

  std::mt19937_64 gen(rc.seed);
  PoseNetParams params = init_params(cfg, gen);
  ad::AdamState adam;
  adam.lr = rc.lr;
  TrainOptions opt;
  opt.batch_size = rc.batch_size;

  for (std::size_t e = 0; e < rc.epochs; ++e) {
    const EpochMetrics em = train_epoch(ds.samples, params, adam, opt, gen);
    std::printf("epoch=%zu loss=%.6f rot-err-deg=%.3f trans-err-mm=%.3f\n",
                e + 1, em.mean_loss, em.mean_rotation_error_rad * kRadToDeg,
                em.mean_translation_error_m * 1000.0);
    std::fflush(stdout);
    if (rc.save_interval > 0 && (e + 1) % rc.save_interval == 0)
      save_checkpoint(rc.out, params, &adam);
  }
  save_checkpoint(rc.out, params, &adam);
  std::printf("checkpoint=%s epochs=%zu\n", rc.out.c_str(), rc.epochs);
  return 0;
}

int cmd_eval(const RunConfig& rc) {
  Checkpoint ck = load_checkpoint(rc.checkpoint_path);
  const Dataset ds = load_dataset(rc.data_dir);
  if (ds.manifest.n_points != ck.params.cfg.n_points)
    throw std::runtime_error(
        rc.data_dir + ": dataset has " + std::to_string(ds.manifest.n_points) +
        " points per segment but the checkpoint expects " +
        std::to_string(ck.params.cfg.n_points));
  if (ds.manifest.classes.size() != ck.params.cfg.n_classes)
    throw std::runtime_error(
        rc.data_dir + ": dataset has " +
        std::to_string(ds.manifest.classes.size()) +
        " classes but the checkpoint expects " +
        std::to_string(ck.params.cfg.n_classes));

  const ResultsReport rep = evaluate_dataset(ds, ck.params, rc.use_icp, rc.icp);
  std::fputs(format_report_text(rep).c_str(), stdout);

  json j = report_to_json(rep);
  j["config"] = json{{"checkpoint", rc.checkpoint_path},
                     {"data", rc.data_dir},
                     {"icp", rc.use_icp},
                     {"seed", rc.seed},
                     {"net", net_config_to_json(ck.params.cfg)}};
  const json icp_json = icp_config_to_json(rc.icp);
  for (const auto& [key, value] : icp_json.items()) j["config"][key] = value;
  std::ofstream os(rc.out);
  if (!os) throw std::runtime_error(rc.out + ": cannot open for writing");
  os << j.dump(2) << '\n';
  os.flush();
  if (!os) throw std::runtime_error(rc.out + ": write failed");
  std::printf("results=%s\n", rc.out.c_str());
  return 0;
}

int cmd_infer(const RunConfig& rc) {
  Checkpoint ck = load_checkpoint(rc.checkpoint_path);
  const PointCloud cloud = load_ply(rc.cloud_path);
  if (cloud.empty())
    throw std::runtime_error(rc.cloud_path + ": no vertices");
  if (rc.class_id >= ck.params.cfg.n_classes)
    throw std::runtime_error(
        "class id " + std::to_string(rc.class_id) +
        " out of range; the checkpoint has " +
        std::to_string(ck.params.cfg.n_classes) + " classes");

  std::mt19937_64 gen(rc.seed);
  const PointCloud resampled =
      resample_to_n(cloud, ck.params.cfg.n_points, gen);
  Eigen::Matrix<double, Eigen::Dynamic, 3> coords(resampled.size(), 3);
  for (std::size_t i = 0; i < resampled.size(); ++i)
    coords.row(static_cast<Eigen::Index>(i)) = resampled.points[i].transpose();
  const PointSegment seg =
      make_segment(std::move(coords), rc.class_id, ck.params.cfg.n_classes);

  Pose pose = predict_pose(seg, ck.params);
  if (!rc.model_path.empty()) {
    const PointCloud model_cloud = load_ply(rc.model_path);
    const ObjectModel model = make_model(model_cloud.points, rc.class_id);
    pose = icp_refine(model, cloud, pose, rc.icp).pose;
  }
  print_pose(pose);
  return 0;
}

int cmd_refine(const RunConfig& rc) {
  if (rc.init_pose.size() != 6)
    throw std::runtime_error("init must hold six numbers: rx ry rz tx ty tz");
  const PointCloud cloud = load_ply(rc.cloud_path);
  const PointCloud model_cloud = load_ply(rc.model_path);
  const ObjectModel model = make_model(model_cloud.points, 0);
  const Pose init{AxisAngle(rc.init_pose[0], rc.init_pose[1], rc.init_pose[2]),
                  Vec3(rc.init_pose[3], rc.init_pose[4], rc.init_pose[5])};

  const IcpResult res = icp_refine(model, cloud, init, rc.icp);
  for (std::size_t i = 0; i < res.residuals.size(); ++i)
    std::printf("iter=%zu rms=%.9g\n", i + 1, res.residuals[i]);
  std::printf("iterations=%d starved=%d\n", res.iterations,
              res.starved ? 1 : 0);
  print_pose(res.pose);
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Depth-only 6-DoF object pose estimation pipeline"};
  app.require_subcommand(1);
  RunConfig rc;

  Command generate(app, "generate",
                   "Write train/ and test/ dataset directories");
  generate.add_shared(rc, "dataset", "output directory root");
  generate.add("--n-samples", rc.n_samples, "training samples");
  generate.add("--n-test", rc.n_test, "test samples (default n-samples / 5)");
  generate.add("--n-points", rc.n_points, "points per segment");
  generate.add("--noise-sigma", rc.noise_sigma,
               "Gaussian depth noise per coordinate, meters");
  generate.add("--fx", rc.cam.fx, "focal length x, pixels");
  generate.add("--fy", rc.cam.fy, "focal length y, pixels");
  generate.add("--cx", rc.cam.cx, "principal point x");
  generate.add("--cy", rc.cam.cy, "principal point y");
  generate.add("--image-width", rc.cam.width, "frame width, pixels");
  generate.add("--image-height", rc.cam.height, "frame height, pixels");
  generate.add("--x-min", rc.ranges.x_min, "translation range, meters");
  generate.add("--x-max", rc.ranges.x_max, "translation range, meters");
  generate.add("--y-min", rc.ranges.y_min, "translation range, meters");
  generate.add("--y-max", rc.ranges.y_max, "translation range, meters");
  generate.add("--z-min", rc.ranges.z_min, "translation range, meters");
  generate.add("--z-max", rc.ranges.z_max, "translation range, meters");
  generate.add_config_only("classes", [&rc](const json& v) {
    rc.classes.clear();
    for (const json& c : v) rc.classes.push_back(class_spec_from_json(c));
  });

  Command train(app, "train", "Train the pose nets on a dataset directory");
  train.add_shared(rc, "checkpoint.bin", "checkpoint file to write");
  train.add("--data", rc.data_dir, "dataset directory (train split)")
      ->required();
  train.add("--epochs", rc.epochs, "training epochs");
  train.add("--batch-size", rc.batch_size, "mini-batch size");
  train.add("--lr", rc.lr, "Adam learning rate");
  train.add("--alpha", rc.alpha, "translation loss weight");
  train.add("--save-interval", rc.save_interval,
            "checkpoint every N epochs (0 saves only at the end)");
  train.add("--point-widths", rc.point_widths,
            "per-point MLP widths, comma separated")
      ->delimiter(',');
  train.add("--head-widths", rc.head_widths,
            "head MLP widths, comma separated")
      ->delimiter(',');
  train.add("--rotation-repr", rc.rotation_repr, "axis_angle or quaternion");
  train.add("--rotation-loss", rc.rotation_loss, "geodesic or l2");
  train.add("--shared-layers", rc.shared_layers,
            "leading per-point layers shared between the nets, or \"all\"");
  train.add("--width-multiplier", rc.width_multiplier,
            "scales every layer width");

  Command eval(app, "eval", "Evaluate a checkpoint on a dataset directory");
  eval.add_shared(rc, "results.json", "results file to write");
  eval.add("--checkpoint", rc.checkpoint_path, "checkpoint file")->required();
  eval.add("--data", rc.data_dir, "dataset directory (test split)")
      ->required();
  eval.add_flag("--icp", rc.use_icp, "refine every prediction with ICP");
  eval.add_icp_options(rc);

  Command infer(app, "infer", "Predict the pose of one segment PLY");
  infer.add_config_and_seed(rc);
  infer.add("--checkpoint", rc.checkpoint_path, "checkpoint file")->required();
  infer.add("--cloud", rc.cloud_path, "segment point cloud (ascii PLY)")
      ->required();
  infer.add("--class-id", rc.class_id, "object class index")->required();
  infer.add("--icp", rc.model_path,
            "object model PLY; when given the prediction is ICP-refined");
  infer.add_icp_options(rc);

  Command refine(app, "refine", "Standalone ICP from an initial pose");
  refine.add_config_and_seed(rc);
  refine.add("--cloud", rc.cloud_path, "observed point cloud (ascii PLY)")
      ->required();
  refine.add("--model", rc.model_path, "object model PLY")->required();
  refine
      .add("--init", rc.init_pose,
           "initial pose: rx ry rz tx ty tz (axis-angle, translation)")
      ->expected(6)
      ->required();
  refine.add_icp_options(rc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  for (const Command* c : {&generate, &train, &eval, &infer, &refine}) {
    if (c->parsed() && !rc.config_path.empty()) c->apply_config(rc.config_path);
  }
  if (generate.parsed()) return cmd_generate(rc);
  if (train.parsed()) return cmd_train(rc);
  if (eval.parsed()) return cmd_eval(rc);
  if (infer.parsed()) return cmd_infer(rc);
  return cmd_refine(rc);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
