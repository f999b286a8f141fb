// Straightforward serial kernels. The parallel versions must match these
// bit for bit; tests and the benchmark target compare the two.

#include "seg4d/error.hpp"
#include "seg4d/rasterizer.hpp"

namespace seg4d::reference {

RenderOutput render(const Scene& scene, const Camera& cam, double t) {
  cam.validate();
  const int width = cam.width, height = cam.height, dim = scene.feature_dim;
  const auto splats = prepare_splats(scene, cam, t);

  RenderOutput out;
  out.feature_map = FeatureMap(height, width, dim);
  out.alpha_map.assign(static_cast<std::size_t>(height) * width, 0.0);
  out.record_offsets.assign(static_cast<std::size_t>(height) * width + 1, 0);

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int p = y * width + x;
      auto feat = out.feature_map.pixel(p);
      double transmittance = 1.0;
      double acc = 0.0;
      for (const Splat& sp : splats) {
        if (x < sp.x0 || x > sp.x1 || y < sp.y0 || y > sp.y1) continue;
        const double alpha = splat_alpha(sp, x + 0.5, y + 0.5);
        if (alpha <= 0.0) continue;
        const double w = alpha * transmittance;
        if (w > raster::kMinRecordWeight) {
          const auto& f = scene.primitives[static_cast<std::size_t>(sp.index)].feature;
          for (int c = 0; c < dim; ++c) feat[static_cast<std::size_t>(c)] += w * f[static_cast<std::size_t>(c)];
          out.records.push_back({sp.index, w, transmittance});
          acc += w;
        }
        transmittance *= 1.0 - alpha;
        if (transmittance < raster::kMinTransmittance) break;
      }
      out.alpha_map[static_cast<std::size_t>(p)] = acc;
      out.record_offsets[static_cast<std::size_t>(p) + 1] = out.records.size();
    }
  }
  return out;
}

std::vector<double> backprop_features(const RenderOutput& out, const FeatureMap& grad_pixels, std::size_t primitive_count) {
  require(grad_pixels.height == out.height() && grad_pixels.width == out.width() &&
              grad_pixels.channels == out.feature_map.channels,
          ErrorKind::ShapeMismatch, "pixel gradient shape does not match the render");
  const auto dim = static_cast<std::size_t>(grad_pixels.channels);
  std::vector<double> grads(primitive_count * dim, 0.0);
  for (int p = 0; p < grad_pixels.pixels(); ++p) {
    const auto gp = grad_pixels.pixel(p);
    for (const auto& r : out.pixel_records(p)) {
      double* g = grads.data() + static_cast<std::size_t>(r.primitive) * dim;
      for (std::size_t c = 0; c < dim; ++c) g[c] += r.weight * gp[c];
    }
  }
  return grads;
}

}  // namespace seg4d::reference
