#pragma once

#include "seg4d/core_model.hpp"
#include "seg4d/maps.hpp"

#include <optional>
#include <span>
#include <vector>

namespace seg4d {

/// Pinhole camera; x_cam = rotation * x_world + translation, looking down +z.
/// Pixel (i, j) has its center at (i + 0.5, j + 0.5).
struct Camera {
  double fx = 100.0;
  double fy = 100.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const;
  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 center() const { return -rotation.transpose() * translation; }
  /// Principal point at the image center.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height);
};

namespace raster {
inline constexpr double kNearPlane = 1e-2;
inline constexpr double kCullOpacity = 1.0 / 255.0;
inline constexpr double kCov2dDilation = 0.3;  // px^2 added to the projected covariance diagonal
inline constexpr double kAlphaMax = 0.99;
inline constexpr double kMinTransmittance = 1e-4;
inline constexpr double kMinRecordWeight = 1e-6;
inline constexpr double kFootprintSigma = 3.0;
inline constexpr double kForegroundAlpha = 0.5;
}  // namespace raster

struct Projection {
  Vec2 mean;   // px
  Mat2 cov;    // px^2, dilated
  double depth = 0.0;
  double opacity = 0.0;  // effective opacity at the query time
};

/// EWA projection of the time-sliced primitive. Empty when behind the near plane,
/// below the culling opacity, or when the 3-sigma footprint misses the image.
std::optional<Projection> project(const GaussianPrimitive& g, const Camera& cam, double t);

/// Projected primitive prepared for compositing.
struct Splat {
  int index = 0;  // into Scene::primitives
  Vec2 mean;
  double conic_xx = 0.0, conic_xy = 0.0, conic_yy = 0.0;  // inverse covariance
  double opacity = 0.0;
  double depth = 0.0;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds of the footprint
};

/// Projects every primitive and sorts the survivors front to back (ties by index).
std::vector<Splat> prepare_splats(const Scene& scene, const Camera& cam, double t);

/// Per-primitive alpha at a pixel center, zero outside the 3-sigma ellipse.
double splat_alpha(const Splat& s, double px, double py);

struct WeightRecord {
  int primitive = 0;
  double weight = 0.0;         // alpha_i * T_i
  double transmittance = 1.0;  // T_i, before this primitive
};

struct RenderOutput {
  FeatureMap feature_map;
  std::vector<double> alpha_map;  // sum of recorded weights per pixel
  std::vector<std::size_t> record_offsets;  // pixels + 1, CSR into records
  std::vector<WeightRecord> records;

  int height() const { return feature_map.height; }
  int width() const { return feature_map.width; }
  std::span<const WeightRecord> pixel_records(int p) const {
    return {records.data() + record_offsets[static_cast<std::size_t>(p)],
            records.data() + record_offsets[static_cast<std::size_t>(p) + 1]};
  }
};

/// Front-to-back feature compositing. Rows are processed in parallel; each
/// pixel's arithmetic is order-identical to the serial reference.
RenderOutput render(const Scene& scene, const Camera& cam, double t);

/// Recomposites a feature map from existing weight records (geometry fixed).
FeatureMap composite_features(const RenderOutput& out, const Scene& scene);

/// Adjoint of compositing: grad(f_i) = sum over pixels of w_i * grad_pixel.
/// Returns an n x d primitive-major buffer.
std::vector<double> backprop_features(const RenderOutput& out, const FeatureMap& grad_pixels, std::size_t primitive_count);

/// Per-pixel argmax over summed label weights; 0 where accumulated alpha < tau_fg.
/// `labels` gives one non-negative label per primitive.
SegmentationMap render_labels(const Scene& scene, std::span<const int> labels, const Camera& cam, double t,
                              double tau_fg = raster::kForegroundAlpha);
SegmentationMap labels_from_render(const RenderOutput& out, std::span<const int> labels,
                                   double tau_fg = raster::kForegroundAlpha);

/// Labels taken from gt_instance; throws when any primitive lacks one.
std::vector<int> ground_truth_labels(const Scene& scene);

/// Serial reference kernels kept for verification and benchmarking.
namespace reference {
RenderOutput render(const Scene& scene, const Camera& cam, double t);
std::vector<double> backprop_features(const RenderOutput& out, const FeatureMap& grad_pixels, std::size_t primitive_count);
}  // namespace reference

}  // namespace seg4d
