#include "seg4d/rasterizer.hpp"

#include "seg4d/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Eigenvalues>

namespace seg4d {

void Camera::validate() const {
  require(fx > 0.0 && fy > 0.0, ErrorKind::InvalidArgument, "camera focal lengths must be positive");
  require(width >= 1 && height >= 1, ErrorKind::InvalidArgument, "camera image size must be at least 1x1");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  require(right.norm() > 1e-12, ErrorKind::InvalidArgument, "look_at: up is parallel to the view direction");
  right.normalize();
  // Image y grows downward, so the camera's y axis is forward x right.
  const Vec3 down = forward.cross(right);
  Camera cam;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  cam.fx = cam.fy = focal;
  cam.width = width;
  cam.height = height;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  return cam;
}

namespace {

struct Footprint {
  int x0, x1, y0, y1;
};

std::optional<Footprint> footprint(const Vec2& mean, const Mat2& cov, int width, int height) {
  const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
  const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
  const double r = raster::kFootprintSigma * std::sqrt(lambda_max);
  const int x0 = static_cast<int>(std::ceil(mean.x() - r - 0.5));
  const int x1 = static_cast<int>(std::floor(mean.x() + r - 0.5));
  const int y0 = static_cast<int>(std::ceil(mean.y() - r - 0.5));
  const int y1 = static_cast<int>(std::floor(mean.y() + r - 0.5));
  if (x1 < 0 || y1 < 0 || x0 > width - 1 || y0 > height - 1 || x0 > x1 || y0 > y1) return std::nullopt;
  return Footprint{std::max(x0, 0), std::min(x1, width - 1), std::max(y0, 0), std::min(y1, height - 1)};
}

}  // namespace

std::optional<Projection> project(const GaussianPrimitive& g, const Camera& cam, double t) {
  const double opacity = effective_opacity(g, t);
  if (opacity < raster::kCullOpacity) return std::nullopt;
  const Vec3 pc = cam.to_camera(position_at(g, t));
  const double z = pc.z();
  if (z <= raster::kNearPlane) return std::nullopt;

  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx / z, 0.0, -cam.fx * pc.x() / (z * z),  //
      0.0, cam.fy / z, -cam.fy * pc.y() / (z * z);
  const Mat3 cov_cam = cam.rotation * spatial_covariance(g) * cam.rotation.transpose();
  Mat2 cov = jac * cov_cam * jac.transpose();
  cov = 0.5 * (cov + cov.transpose());
  cov.diagonal().array() += raster::kCov2dDilation;

  Projection p;
  p.mean = Vec2(cam.fx * pc.x() / z + cam.cx, cam.fy * pc.y() / z + cam.cy);
  p.cov = cov;
  p.depth = z;
  p.opacity = opacity;
  if (!footprint(p.mean, p.cov, cam.width, cam.height)) return std::nullopt;
  return p;
}

std::vector<Splat> prepare_splats(const Scene& scene, const Camera& cam, double t) {
  cam.validate();
  std::vector<Splat> splats;
  splats.reserve(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const auto proj = project(scene.primitives[i], cam, t);
    if (!proj) continue;
    const auto fp = footprint(proj->mean, proj->cov, cam.width, cam.height);
    const Mat2 conic = proj->cov.inverse();
    Splat s;
    s.index = static_cast<int>(i);
    s.mean = proj->mean;
    s.conic_xx = conic(0, 0);
    s.conic_xy = 0.5 * (conic(0, 1) + conic(1, 0));
    s.conic_yy = conic(1, 1);
    s.opacity = proj->opacity;
    s.depth = proj->depth;
    s.x0 = fp->x0;
    s.x1 = fp->x1;
    s.y0 = fp->y0;
    s.y1 = fp->y1;
    splats.push_back(s);
  }
  std::stable_sort(splats.begin(), splats.end(), [](const Splat& a, const Splat& b) { return a.depth < b.depth; });
  return splats;
}

double splat_alpha(const Splat& s, double px, double py) {
  const double dx = px - s.mean.x();
  const double dy = py - s.mean.y();
  const double power = 0.5 * (s.conic_xx * dx * dx + 2.0 * s.conic_xy * dx * dy + s.conic_yy * dy * dy);
  const double cutoff = 0.5 * raster::kFootprintSigma * raster::kFootprintSigma;
  if (!(power <= cutoff)) return 0.0;
  return std::min(raster::kAlphaMax, s.opacity * std::exp(-power));
}

namespace {

void check_render_inputs(const Scene& scene, const Camera& cam) {
  cam.validate();
  require(scene.feature_dim >= 1, ErrorKind::InvalidArgument, "feature_dim must be positive");
  for (const auto& g : scene.primitives)
    require(static_cast<int>(g.feature.size()) == scene.feature_dim, ErrorKind::ShapeMismatch,
            "primitive feature length does not match scene feature_dim");
}

}  // namespace

RenderOutput render(const Scene& scene, const Camera& cam, double t) {
  check_render_inputs(scene, cam);
  const int width = cam.width, height = cam.height, dim = scene.feature_dim;
  const auto splats = prepare_splats(scene, cam, t);

  std::vector<std::vector<int>> row_bins(static_cast<std::size_t>(height));
  for (int s = 0; s < static_cast<int>(splats.size()); ++s)
    for (int y = splats[s].y0; y <= splats[s].y1; ++y) row_bins[static_cast<std::size_t>(y)].push_back(s);

  RenderOutput out;
  out.feature_map = FeatureMap(height, width, dim);
  out.alpha_map.assign(static_cast<std::size_t>(height) * width, 0.0);
  std::vector<std::vector<WeightRecord>> row_records(static_cast<std::size_t>(height));
  std::vector<std::size_t> counts(static_cast<std::size_t>(height) * width, 0);

#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < height; ++y) {
    const auto& bin = row_bins[static_cast<std::size_t>(y)];
    auto& recs = row_records[static_cast<std::size_t>(y)];
    const double py = y + 0.5;
    for (int x = 0; x < width; ++x) {
      const int p = y * width + x;
      const double px = x + 0.5;
      auto feat = out.feature_map.pixel(p);
      double transmittance = 1.0;
      double acc = 0.0;
      std::size_t n = 0;
      for (int s : bin) {
        const Splat& sp = splats[static_cast<std::size_t>(s)];
        if (x < sp.x0 || x > sp.x1) continue;
        const double alpha = splat_alpha(sp, px, py);
        if (alpha <= 0.0) continue;
        const double w = alpha * transmittance;
        if (w > raster::kMinRecordWeight) {
          const auto& f = scene.primitives[static_cast<std::size_t>(sp.index)].feature;
          for (int c = 0; c < dim; ++c) feat[static_cast<std::size_t>(c)] += w * f[static_cast<std::size_t>(c)];
          recs.push_back({sp.index, w, transmittance});
          acc += w;
          ++n;
        }
        transmittance *= 1.0 - alpha;
        if (transmittance < raster::kMinTransmittance) break;
      }
      out.alpha_map[static_cast<std::size_t>(p)] = acc;
      counts[static_cast<std::size_t>(p)] = n;
    }
  }

  out.record_offsets.assign(counts.size() + 1, 0);
  for (std::size_t p = 0; p < counts.size(); ++p) out.record_offsets[p + 1] = out.record_offsets[p] + counts[p];
  out.records.reserve(out.record_offsets.back());
  for (auto& recs : row_records) out.records.insert(out.records.end(), recs.begin(), recs.end());
  return out;
}

FeatureMap composite_features(const RenderOutput& out, const Scene& scene) {
  FeatureMap map(out.height(), out.width(), scene.feature_dim);
  const int dim = scene.feature_dim;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < map.pixels(); ++p) {
    auto feat = map.pixel(p);
    for (const auto& r : out.pixel_records(p)) {
      const auto& f = scene.primitives[static_cast<std::size_t>(r.primitive)].feature;
      for (int c = 0; c < dim; ++c) feat[static_cast<std::size_t>(c)] += r.weight * f[static_cast<std::size_t>(c)];
    }
  }
  return map;
}

std::vector<double> backprop_features(const RenderOutput& out, const FeatureMap& grad_pixels, std::size_t primitive_count) {
  require(grad_pixels.height == out.height() && grad_pixels.width == out.width() &&
              grad_pixels.channels == out.feature_map.channels,
          ErrorKind::ShapeMismatch, "pixel gradient shape does not match the render");
  const auto dim = static_cast<std::size_t>(grad_pixels.channels);

  // Transpose the pixel-major records into primitive-major lists, keeping
  // pixel order, so each primitive sums its contributions in the same order
  // as the serial pixel loop.
  std::vector<std::size_t> offsets(primitive_count + 1, 0);
  for (const auto& r : out.records) {
    require(static_cast<std::size_t>(r.primitive) < primitive_count, ErrorKind::ShapeMismatch,
            "weight record references a primitive outside the scene");
    ++offsets[static_cast<std::size_t>(r.primitive) + 1];
  }
  for (std::size_t i = 0; i < primitive_count; ++i) offsets[i + 1] += offsets[i];
  std::vector<std::pair<int, double>> entries(out.records.size());
  {
    auto cursor = offsets;
    const int pixels = grad_pixels.pixels();
    for (int p = 0; p < pixels; ++p)
      for (const auto& r : out.pixel_records(p)) entries[cursor[static_cast<std::size_t>(r.primitive)]++] = {p, r.weight};
  }

  std::vector<double> grads(primitive_count * dim, 0.0);
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(primitive_count); ++i) {
    double* g = grads.data() + static_cast<std::size_t>(i) * dim;
    for (std::size_t e = offsets[static_cast<std::size_t>(i)]; e < offsets[static_cast<std::size_t>(i) + 1]; ++e) {
      const auto [p, w] = entries[e];
      const auto gp = grad_pixels.pixel(p);
      for (std::size_t c = 0; c < dim; ++c) g[c] += w * gp[c];
    }
  }
  return grads;
}

SegmentationMap labels_from_render(const RenderOutput& out, std::span<const int> labels, double tau_fg) {
  SegmentationMap seg(out.height(), out.width());
#pragma omp parallel for schedule(static)
  for (int p = 0; p < seg.pixels(); ++p) {
    if (out.alpha_map[static_cast<std::size_t>(p)] < tau_fg) continue;
    std::map<int, double> sums;
    for (const auto& r : out.pixel_records(p)) sums[labels[static_cast<std::size_t>(r.primitive)]] += r.weight;
    int best = 0;
    double best_w = -1.0;
    for (const auto& [label, w] : sums) {
      if (w > best_w) {
        best = label;
        best_w = w;
      }
    }
    seg.labels[static_cast<std::size_t>(p)] = best;
  }
  return seg;
}

SegmentationMap render_labels(const Scene& scene, std::span<const int> labels, const Camera& cam, double t,
                              double tau_fg) {
  require(labels.size() == scene.size(), ErrorKind::InvalidArgument, "render_labels needs one label per primitive");
  for (int l : labels) require(l >= 0, ErrorKind::InvalidArgument, "render_labels: labels must be non-negative");
  return labels_from_render(render(scene, cam, t), labels, tau_fg);
}

std::vector<int> ground_truth_labels(const Scene& scene) {
  std::vector<int> labels;
  labels.reserve(scene.size());
  for (const auto& g : scene.primitives) {
    require(g.gt_instance.has_value(), ErrorKind::InvalidArgument, "primitive without gt_instance tag");
    labels.push_back(*g.gt_instance);
  }
  return labels;
}

}  // namespace seg4d
