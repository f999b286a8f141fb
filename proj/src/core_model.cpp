#include "seg4d/core_model.hpp"

#include "seg4d/error.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

namespace seg4d {

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian hosts");

namespace {

constexpr const char* kSceneMagic = "S4DSCENE";
constexpr const char* kSceneFields =
    "mu_x:f64x3,mu_t:f64,scale_x:f64x3,scale_t:f64,rotation_wxyz:f64x4,opacity:f64,"
    "velocity:f64x3,feature:f64xD,sh:f64xS,gt_instance:i32(-1=none)";

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) fail(ErrorKind::Format, "scene file truncated");
  return v;
}

}  // namespace

Vec3 position_at(const GaussianPrimitive& g, double t) { return g.mu_x + g.velocity * (t - g.mu_t); }

double temporal_opacity(const GaussianPrimitive& g, double t) {
  const double z = (t - g.mu_t) / g.scale_t;
  return std::exp(-0.5 * z * z);
}

double effective_opacity(const GaussianPrimitive& g, double t) { return g.opacity * temporal_opacity(g, t); }

Mat3 spatial_covariance(const GaussianPrimitive& g) {
  const Mat3 r = g.rotation.normalized().toRotationMatrix();
  const Vec3 s2 = g.scale_x.cwiseProduct(g.scale_x);
  Mat3 cov = r * s2.asDiagonal() * r.transpose();
  return 0.5 * (cov + cov.transpose());
}

void validate_primitive(const GaussianPrimitive& g, int feature_dim) {
  require((g.scale_x.array() > 0.0).all(), ErrorKind::InvalidArgument, "scale_x must be positive");
  require(g.scale_t > 0.0, ErrorKind::InvalidArgument, "scale_t must be positive");
  require(g.opacity >= 0.0 && g.opacity <= 1.0, ErrorKind::InvalidArgument, "opacity outside [0,1]");
  require(std::abs(g.rotation.norm() - 1.0) <= 1e-6, ErrorKind::InvalidArgument, "rotation is not a unit quaternion");
  require(static_cast<int>(g.feature.size()) == feature_dim, ErrorKind::ShapeMismatch,
          "feature length " + std::to_string(g.feature.size()) + " != feature_dim " + std::to_string(feature_dim));
}

void Scene::validate() const {
  require(feature_dim >= 1, ErrorKind::InvalidArgument, "feature_dim must be >= 1");
  require(t_min <= t_max, ErrorKind::InvalidArgument, "time range inverted");
  for (const auto& g : primitives) {
    validate_primitive(g, feature_dim);
    require(g.mu_t >= t_min && g.mu_t <= t_max, ErrorKind::InvalidArgument, "mu_t outside scene time range");
  }
}

void write_scene(std::ostream& os, const Scene& scene) {
  const std::size_t sh_dim = scene.empty() ? 0 : scene.primitives.front().sh.size();
  for (const auto& g : scene.primitives) {
    require(g.sh.size() == sh_dim, ErrorKind::ShapeMismatch, "inconsistent sh length across primitives");
    require(static_cast<int>(g.feature.size()) == scene.feature_dim, ErrorKind::ShapeMismatch,
            "feature length differs from feature_dim");
  }
  std::ostringstream header;
  header.precision(17);
  header << kSceneMagic << ' ' << kSceneFormatVersion << ' ' << scene.size() << ' ' << scene.feature_dim << ' '
         << sh_dim << ' ' << scene.t_min << ' ' << scene.t_max << ' ' << kSceneFields << '\n';
  os << header.str();
  for (const auto& g : scene.primitives) {
    for (int k = 0; k < 3; ++k) put(os, g.mu_x[k]);
    put(os, g.mu_t);
    for (int k = 0; k < 3; ++k) put(os, g.scale_x[k]);
    put(os, g.scale_t);
    put(os, g.rotation.w());
    put(os, g.rotation.x());
    put(os, g.rotation.y());
    put(os, g.rotation.z());
    put(os, g.opacity);
    for (int k = 0; k < 3; ++k) put(os, g.velocity[k]);
    for (double f : g.feature) put(os, f);
    for (double h : g.sh) put(os, h);
    put<std::int32_t>(os, g.gt_instance ? static_cast<std::int32_t>(*g.gt_instance) : -1);
  }
  if (!os) fail(ErrorKind::Io, "failed writing scene");
}

Scene read_scene(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) fail(ErrorKind::Format, "empty scene file");
  std::istringstream header(line);
  std::string magic, fields;
  int version = 0;
  std::size_t count = 0, sh_dim = 0;
  Scene scene;
  header >> magic >> version >> count >> scene.feature_dim >> sh_dim >> scene.t_min >> scene.t_max >> fields;
  if (!header || magic != kSceneMagic) fail(ErrorKind::Format, "not a scene file");
  if (version != kSceneFormatVersion) fail(ErrorKind::Format, "unsupported scene version " + std::to_string(version));
  if (fields != kSceneFields) fail(ErrorKind::Format, "unexpected scene field layout");
  scene.primitives.resize(count);
  for (auto& g : scene.primitives) {
    for (int k = 0; k < 3; ++k) g.mu_x[k] = get<double>(is);
    g.mu_t = get<double>(is);
    for (int k = 0; k < 3; ++k) g.scale_x[k] = get<double>(is);
    g.scale_t = get<double>(is);
    const double w = get<double>(is), x = get<double>(is), y = get<double>(is), z = get<double>(is);
    g.rotation = Eigen::Quaterniond(w, x, y, z);
    g.opacity = get<double>(is);
    for (int k = 0; k < 3; ++k) g.velocity[k] = get<double>(is);
    g.feature.resize(static_cast<std::size_t>(scene.feature_dim));
    for (double& f : g.feature) f = get<double>(is);
    g.sh.resize(sh_dim);
    for (double& h : g.sh) h = get<double>(is);
    const auto tag = get<std::int32_t>(is);
    if (tag >= 0) g.gt_instance = tag;
  }
  return scene;
}

void save_scene(const std::string& path, const Scene& scene) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  write_scene(os, scene);
}

Scene load_scene(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open " + path);
  return read_scene(is);
}

std::vector<double> gather_features(const Scene& scene) {
  const auto d = static_cast<std::size_t>(scene.feature_dim);
  std::vector<double> flat(scene.size() * d);
  for (std::size_t i = 0; i < scene.size(); ++i)
    std::copy(scene.primitives[i].feature.begin(), scene.primitives[i].feature.end(), flat.begin() + i * d);
  return flat;
}

void scatter_features(Scene& scene, const std::vector<double>& flat) {
  const auto d = static_cast<std::size_t>(scene.feature_dim);
  require(flat.size() == scene.size() * d, ErrorKind::ShapeMismatch, "flat feature buffer has wrong size");
  for (std::size_t i = 0; i < scene.size(); ++i) {
    auto& f = scene.primitives[i].feature;
    f.assign(flat.begin() + i * d, flat.begin() + (i + 1) * d);
  }
}

Scene strip_motion(const Scene& scene) {
  Scene out = scene;
  const double span = std::max(scene.t_max - scene.t_min, 1e-12);
  for (auto& g : out.primitives) {
    g.velocity.setZero();
    g.scale_t = std::max(g.scale_t, span);
  }
  return out;
}

}  // namespace seg4d
