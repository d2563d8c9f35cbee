#include "pointpose/io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace pointpose {

static_assert(std::endian::native == std::endian::little,
              "serialized formats are little-endian");

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& msg) {
  throw std::runtime_error(path.string() + ": " + msg);
}

void write_bytes(std::ofstream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& is, void* p, std::size_t n,
                const std::filesystem::path& path) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) fail(path, "truncated file");
}

template <typename T>
void write_pod(std::ofstream& os, T v) {
  write_bytes(os, &v, sizeof v);
}

template <typename T>
T read_pod(std::ifstream& is, const std::filesystem::path& path) {
  T v;
  read_bytes(is, &v, sizeof v, path);
  return v;
}

void write_f32(std::ofstream& os, std::span<const double> data) {
  std::vector<float> buf(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    buf[i] = static_cast<float>(data[i]);
  write_bytes(os, buf.data(), buf.size() * sizeof(float));
}

std::vector<double> read_f32(std::ifstream& is, std::size_t n,
                             const std::filesystem::path& path) {
  std::vector<float> buf(n);
  read_bytes(is, buf.data(), n * sizeof(float), path);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i];
  return out;
}

}  // namespace

void save_ply(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream os(path);
  if (!os) fail(path, "cannot open for writing");
  os << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
     << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  char line[128];
  for (const Vec3& p : cloud.points) {
    std::snprintf(line, sizeof line, "%.9g %.9g %.9g\n", p.x(), p.y(), p.z());
    os << line;
  }
  os.flush();
  if (!os) fail(path, "write failed");
}

PointCloud load_ply(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(path, "cannot open");
  auto next_line = [&]() {
    std::string line;
    if (!std::getline(is, line)) fail(path, "unexpected end of header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  auto expect = [&](const std::string& want) {
    const std::string got = next_line();
    if (got != want)
      fail(path, "expected '" + want + "', got '" + got + "'");
  };
  expect("ply");
  expect("format ascii 1.0");
  std::size_t n = 0;
  {
    const std::string line = next_line();
    std::istringstream ss(line);
    std::string a, b;
    ss >> a >> b >> n;
    if (a != "element" || b != "vertex" || ss.fail())
      fail(path, "expected 'element vertex N', got '" + line + "'");
  }
  expect("property float x");
  expect("property float y");
  expect("property float z");
  expect("end_header");
  PointCloud out;
  out.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x, y, z;
    if (!(is >> x >> y >> z))
      fail(path, "malformed vertex " + std::to_string(i));
    out.points.emplace_back(x, y, z);
  }
  is >> std::ws;
  if (is.peek() != std::char_traits<char>::eof())
    fail(path, "trailing content after the last vertex");
  return out;
}

namespace {

constexpr char kMagic[4] = {'C', 'P', 'S', 'E'};
constexpr std::uint32_t kVersion = 1;

void write_tensor(std::ofstream& os, const std::string& name,
                  std::span<const std::size_t> dims,
                  std::span<const double> data) {
  write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
  write_bytes(os, name.data(), name.size());
  write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(dims.size()));
  for (const std::size_t d : dims)
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  write_f32(os, data);
}

struct RawTensor {
  ad::Shape shape;
  std::vector<double> data;
};

std::pair<std::string, RawTensor> read_tensor(std::ifstream& is,
                                              const std::filesystem::path& path) {
  const auto name_len = read_pod<std::uint16_t>(is, path);
  std::string name(name_len, '\0');
  read_bytes(is, name.data(), name_len, path);
  const auto rank = read_pod<std::uint8_t>(is, path);
  RawTensor t;
  std::size_t total = 1;
  for (std::uint8_t i = 0; i < rank; ++i) {
    const auto d = read_pod<std::uint32_t>(is, path);
    t.shape.push_back(d);
    total *= d;
  }
  t.data = read_f32(is, total, path);
  return {std::move(name), std::move(t)};
}

json adam_meta(const ad::AdamState* adam) {
  if (!adam) return nullptr;
  return json{{"lr", adam->lr},       {"beta1", adam->beta1},
              {"beta2", adam->beta2}, {"eps", adam->eps},
              {"step", adam->step},   {"moments", !adam->m.empty()}};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const PoseNetParams& params, const ad::AdamState* adam) {
  const auto named = params.named_parameters();
  const auto bn_states = params.named_bn_states();
  if (adam && !adam->m.empty() && adam->m.size() != named.size())
    throw std::invalid_argument(
        "optimizer state does not match the parameter list");

  std::ofstream os(path, std::ios::binary);
  if (!os) fail(path, "cannot open for writing");
  write_bytes(os, kMagic, sizeof kMagic);
  write_pod<std::uint32_t>(os, kVersion);

  std::uint32_t count = static_cast<std::uint32_t>(named.size()) +
                        2 * static_cast<std::uint32_t>(bn_states.size());
  if (adam && !adam->m.empty())
    count += 2 * static_cast<std::uint32_t>(named.size());
  write_pod<std::uint32_t>(os, count);

  for (const auto& [name, t] : named)
    write_tensor(os, name, t.shape(), t.data());
  for (const auto& [name, state] : bn_states) {
    const ad::Shape dims = {state->running_mean.size()};
    write_tensor(os, name + ".running_mean", dims, state->running_mean);
    write_tensor(os, name + ".running_var", dims, state->running_var);
  }
  if (adam && !adam->m.empty()) {
    for (std::size_t i = 0; i < named.size(); ++i) {
      const ad::Shape dims = {adam->m[i].size()};
      write_tensor(os, "adam.m." + named[i].first, dims, adam->m[i]);
      write_tensor(os, "adam.v." + named[i].first, dims, adam->v[i]);
    }
  }

  json meta;
  meta["net_config"] = net_config_to_json(params.cfg);
  json flags = json::object();
  for (const auto& [name, state] : bn_states) flags[name] = state->initialized;
  meta["bn_initialized"] = flags;
  meta["adam"] = adam_meta(adam);
  const std::string meta_str = meta.dump();
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(meta_str.size()));
  write_bytes(os, meta_str.data(), meta_str.size());
  os.flush();
  if (!os) fail(path, "write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(path, "cannot open");
  char magic[4];
  read_bytes(is, magic, sizeof magic, path);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    fail(path, "not a checkpoint file");
  const auto version = read_pod<std::uint32_t>(is, path);
  if (version != kVersion)
    fail(path, "unsupported checkpoint version " + std::to_string(version));

  const auto count = read_pod<std::uint32_t>(is, path);
  std::map<std::string, RawTensor> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = read_tensor(is, path);
    if (!table.emplace(std::move(name), std::move(t)).second)
      fail(path, "duplicate tensor entry");
  }
  const auto meta_len = read_pod<std::uint32_t>(is, path);
  std::string meta_str(meta_len, '\0');
  read_bytes(is, meta_str.data(), meta_len, path);
  if (is.peek() != std::char_traits<char>::eof())
    fail(path, "trailing bytes after the metadata block");

  json meta;
  try {
    meta = json::parse(meta_str);
  } catch (const std::exception& e) {
    fail(path, std::string("bad metadata: ") + e.what());
  }

  Checkpoint ck;
  std::mt19937_64 gen(0);  // placeholder weights, overwritten below
  try {
    ck.params = init_params(net_config_from_json(meta.at("net_config")), gen);
  } catch (const std::exception& e) {
    fail(path, std::string("bad net config: ") + e.what());
  }

  auto take = [&](const std::string& name, std::span<const std::size_t> want)
      -> const RawTensor& {
    const auto it = table.find(name);
    if (it == table.end()) fail(path, "missing tensor " + name);
    const RawTensor& t = it->second;
    if (!std::equal(want.begin(), want.end(), t.shape.begin(), t.shape.end()))
      fail(path, "shape mismatch for " + name);
    return t;
  };

  for (auto& [name, tensor] : ck.params.named_parameters()) {
    const RawTensor& raw = take(name, tensor.shape());
    ad::Tensor t = tensor;
    std::copy(raw.data.begin(), raw.data.end(), t.mutable_data().begin());
  }
  const json& flags = meta.at("bn_initialized");
  for (auto& [name, state] : ck.params.named_bn_states()) {
    const ad::Shape dims = {state->running_mean.size()};
    state->running_mean = take(name + ".running_mean", dims).data;
    state->running_var = take(name + ".running_var", dims).data;
    if (!flags.contains(name)) fail(path, "missing bn flag " + name);
    state->initialized = flags.at(name).get<bool>();
  }

  const json& adam = meta.at("adam");
  if (!adam.is_null()) {
    ad::AdamState st;
    st.lr = adam.at("lr").get<double>();
    st.beta1 = adam.at("beta1").get<double>();
    st.beta2 = adam.at("beta2").get<double>();
    st.eps = adam.at("eps").get<double>();
    st.step = adam.at("step").get<std::uint64_t>();
    if (adam.at("moments").get<bool>()) {
      for (const auto& [name, tensor] : ck.params.named_parameters()) {
        const ad::Shape dims = {tensor.size()};
        st.m.push_back(take("adam.m." + name, dims).data);
        st.v.push_back(take("adam.v." + name, dims).data);
      }
    }
    ck.adam = std::move(st);
  }
  return ck;
}

namespace {

std::string kind_to_string(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Box:
      return "box";
    case PrimitiveKind::Cylinder:
      return "cylinder";
    case PrimitiveKind::AsymmetricBlob:
      return "blob";
  }
  throw std::logic_error("unreachable primitive kind");
}

PrimitiveKind kind_from_string(const std::string& s) {
  if (s == "box") return PrimitiveKind::Box;
  if (s == "cylinder") return PrimitiveKind::Cylinder;
  if (s == "blob") return PrimitiveKind::AsymmetricBlob;
  throw std::invalid_argument("unknown primitive kind '" + s + "'");
}

std::filesystem::path sample_path(const std::filesystem::path& dir,
                                  std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "sample_%06zu.bin", index);
  return dir / name;
}

}  // namespace

nlohmann::json net_config_to_json(const NetConfig& cfg) {
  return json{
      {"point_mlp_widths", cfg.point_mlp_widths},
      {"head_widths", cfg.head_widths},
      {"rotation_repr",
       cfg.rotation_repr == RotationRepr::Quaternion ? "quaternion"
                                                     : "axis_angle"},
      {"rotation_loss",
       cfg.rotation_loss == RotationLoss::L2 ? "l2" : "geodesic"},
      {"shared_layers", cfg.shared_layers},
      {"n_points", cfg.n_points},
      {"n_classes", cfg.n_classes},
      {"alpha", cfg.alpha},
      {"width_multiplier", cfg.width_multiplier},
  };
}

NetConfig net_config_from_json(const nlohmann::json& j) {
  NetConfig cfg;
  cfg.point_mlp_widths =
      j.value("point_mlp_widths", cfg.point_mlp_widths);
  cfg.head_widths = j.value("head_widths", cfg.head_widths);
  const std::string repr = j.value("rotation_repr", std::string("axis_angle"));
  if (repr == "axis_angle")
    cfg.rotation_repr = RotationRepr::AxisAngle;
  else if (repr == "quaternion")
    cfg.rotation_repr = RotationRepr::Quaternion;
  else
    throw std::invalid_argument("unknown rotation_repr '" + repr + "'");
  const std::string loss = j.value("rotation_loss", std::string("geodesic"));
  if (loss == "geodesic")
    cfg.rotation_loss = RotationLoss::Geodesic;
  else if (loss == "l2")
    cfg.rotation_loss = RotationLoss::L2;
  else
    throw std::invalid_argument("unknown rotation_loss '" + loss + "'");
  cfg.shared_layers = j.value("shared_layers", cfg.shared_layers);
  cfg.n_points = j.value("n_points", cfg.n_points);
  cfg.n_classes = j.value("n_classes", cfg.n_classes);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.width_multiplier = j.value("width_multiplier", cfg.width_multiplier);
  cfg.validate();
  return cfg;
}

nlohmann::json class_spec_to_json(const ClassSpec& c) {
  return json{{"name", c.name},
              {"kind", kind_to_string(c.kind)},
              {"dims", {c.dims.x(), c.dims.y(), c.dims.z()}},
              {"model_points", c.model_points},
              {"model_seed", c.model_seed}};
}

ClassSpec class_spec_from_json(const nlohmann::json& c) {
  ClassSpec spec;
  spec.name = c.at("name").get<std::string>();
  spec.kind = kind_from_string(c.at("kind").get<std::string>());
  const auto& dims = c.at("dims");
  if (!dims.is_array() || dims.size() != 3)
    throw std::invalid_argument("class dims must hold three numbers");
  spec.dims =
      Vec3(dims[0].get<double>(), dims[1].get<double>(), dims[2].get<double>());
  spec.model_points = c.value("model_points", spec.model_points);
  spec.model_seed = c.value("model_seed", spec.model_seed);
  return spec;
}

nlohmann::json manifest_to_json(const DatasetManifest& m) {
  json classes = json::array();
  for (const ClassSpec& c : m.classes) classes.push_back(class_spec_to_json(c));
  return json{
      {"classes", std::move(classes)},
      {"intrinsics",
       {{"fx", m.intrinsics.fx},
        {"fy", m.intrinsics.fy},
        {"cx", m.intrinsics.cx},
        {"cy", m.intrinsics.cy},
        {"width", m.intrinsics.width},
        {"height", m.intrinsics.height}}},
      {"pose_ranges",
       {{"x_min", m.pose_ranges.x_min},
        {"x_max", m.pose_ranges.x_max},
        {"y_min", m.pose_ranges.y_min},
        {"y_max", m.pose_ranges.y_max},
        {"z_min", m.pose_ranges.z_min},
        {"z_max", m.pose_ranges.z_max}}},
      {"n_samples", m.n_samples},
      {"n_points", m.n_points},
      {"noise_sigma", m.noise_sigma},
      {"seed", m.seed},
  };
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  for (const json& c : j.at("classes"))
    m.classes.push_back(class_spec_from_json(c));
  if (j.contains("intrinsics")) {
    const json& cam = j.at("intrinsics");
    m.intrinsics.fx = cam.value("fx", m.intrinsics.fx);
    m.intrinsics.fy = cam.value("fy", m.intrinsics.fy);
    m.intrinsics.cx = cam.value("cx", m.intrinsics.cx);
    m.intrinsics.cy = cam.value("cy", m.intrinsics.cy);
    m.intrinsics.width = cam.value("width", m.intrinsics.width);
    m.intrinsics.height = cam.value("height", m.intrinsics.height);
  }
  if (j.contains("pose_ranges")) {
    const json& r = j.at("pose_ranges");
    m.pose_ranges.x_min = r.value("x_min", m.pose_ranges.x_min);
    m.pose_ranges.x_max = r.value("x_max", m.pose_ranges.x_max);
    m.pose_ranges.y_min = r.value("y_min", m.pose_ranges.y_min);
    m.pose_ranges.y_max = r.value("y_max", m.pose_ranges.y_max);
    m.pose_ranges.z_min = r.value("z_min", m.pose_ranges.z_min);
    m.pose_ranges.z_max = r.value("z_max", m.pose_ranges.z_max);
  }
  m.n_samples = j.at("n_samples").get<std::size_t>();
  m.n_points = j.at("n_points").get<std::size_t>();
  m.noise_sigma = j.at("noise_sigma").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  {
    const auto path = dir / "manifest.json";
    std::ofstream os(path);
    if (!os) fail(path, "cannot open for writing");
    os << manifest_to_json(ds.manifest).dump(2) << '\n';
    os.flush();
    if (!os) fail(path, "write failed");
  }
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    const auto path = sample_path(dir, i);
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(path, "cannot open for writing");
    const auto n = static_cast<std::uint32_t>(s.segment.coords.rows());
    write_pod(os, n);
    std::vector<double> coords;
    coords.reserve(static_cast<std::size_t>(n) * 3);
    for (std::uint32_t r = 0; r < n; ++r)
      for (int c = 0; c < 3; ++c)
        coords.push_back(s.segment.coords(static_cast<Eigen::Index>(r), c));
    write_f32(os, coords);
    write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(s.segment.class_id));
    const double pose_vals[7] = {
        s.gt.rotation.r.x(), s.gt.rotation.r.y(), s.gt.rotation.r.z(),
        s.gt.translation.x(), s.gt.translation.y(), s.gt.translation.z(),
        s.occlusion};
    write_f32(os, pose_vals);
    os.flush();
    if (!os) fail(path, "write failed");
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_file = dir / "manifest.json";
  std::ifstream ms(manifest_file);
  if (!ms) fail(manifest_file, "cannot open");
  json mj;
  try {
    ms >> mj;
  } catch (const std::exception& e) {
    fail(manifest_file, std::string("bad manifest: ") + e.what());
  }
  Dataset ds;
  try {
    ds.manifest = manifest_from_json(mj);
  } catch (const std::exception& e) {
    fail(manifest_file, std::string("bad manifest: ") + e.what());
  }

  ds.samples.reserve(ds.manifest.n_samples);
  for (std::size_t i = 0; i < ds.manifest.n_samples; ++i) {
    const auto path = sample_path(dir, i);
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(path, "cannot open");
    const auto n = read_pod<std::uint32_t>(is, path);
    if (n != ds.manifest.n_points)
      fail(path, "sample holds " + std::to_string(n) + " points, manifest says " +
                     std::to_string(ds.manifest.n_points));
    const std::vector<double> coords = read_f32(is, std::size_t{n} * 3, path);
    const auto class_id = read_pod<std::uint16_t>(is, path);
    if (class_id >= ds.manifest.classes.size())
      fail(path, "class id " + std::to_string(class_id) + " out of range");
    const std::vector<double> pose_vals = read_f32(is, 7, path);
    if (is.peek() != std::char_traits<char>::eof())
      fail(path, "trailing bytes");

    Eigen::Matrix<double, Eigen::Dynamic, 3> mat(static_cast<Eigen::Index>(n), 3);
    for (std::uint32_t r = 0; r < n; ++r)
      for (int c = 0; c < 3; ++c)
        mat(static_cast<Eigen::Index>(r), c) = coords[3 * r + c];
    Sample s;
    s.segment = make_segment(std::move(mat), class_id, ds.manifest.classes.size());
    s.gt.rotation = AxisAngle(pose_vals[0], pose_vals[1], pose_vals[2]);
    s.gt.translation = Vec3(pose_vals[3], pose_vals[4], pose_vals[5]);
    s.occlusion = pose_vals[6];
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace pointpose
