#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace seg4d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// One spatiotemporal splat. Geometry is frozen after construction; only
/// `feature` is optimized. Times are normalized to the clip, [0, 1] by default.
struct GaussianPrimitive {
  Vec3 mu_x = Vec3::Zero();
  double mu_t = 0.0;
  Vec3 scale_x = Vec3::Ones();
  double scale_t = 1.0;
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  double opacity = 1.0;
  Vec3 velocity = Vec3::Zero();
  std::vector<double> feature;
  std::vector<double> sh;  // carried through I/O, never optimized
  std::optional<int> gt_instance;
};

struct Scene {
  std::vector<GaussianPrimitive> primitives;
  int feature_dim = 32;
  double t_min = 0.0;
  double t_max = 1.0;

  std::size_t size() const { return primitives.size(); }
  bool empty() const { return primitives.empty(); }

  /// Throws Error(InvalidArgument) on the first violated type invariant.
  void validate() const;
};

/// mu_x + velocity * (t - mu_t)
Vec3 position_at(const GaussianPrimitive& g, double t);

/// Gaussian time window exp(-1/2 ((t - mu_t) / scale_t)^2), in (0, 1].
double temporal_opacity(const GaussianPrimitive& g, double t);

/// opacity * temporal_opacity
double effective_opacity(const GaussianPrimitive& g, double t);

/// R diag(scale_x^2) R^T
Mat3 spatial_covariance(const GaussianPrimitive& g);

void validate_primitive(const GaussianPrimitive& g, int feature_dim);

// Binary scene file. Layout: an ASCII header line
//   "S4DSCENE <version> <count> <feature_dim> <sh_dim> <t_min> <t_max> <field-list>\n"
// followed by `count` little-endian records with fields in the declared order.
inline constexpr int kSceneFormatVersion = 1;

void write_scene(std::ostream& os, const Scene& scene);
Scene read_scene(std::istream& is);
void save_scene(const std::string& path, const Scene& scene);
Scene load_scene(const std::string& path);

/// Flat copy of all features, primitive-major (n * d).
std::vector<double> gather_features(const Scene& scene);
void scatter_features(Scene& scene, const std::vector<double>& flat);

/// Zero velocities and widen every temporal window to cover the clip.
Scene strip_motion(const Scene& scene);

}  // namespace seg4d
