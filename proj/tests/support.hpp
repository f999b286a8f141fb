#pragma once

#include "seg4d/core_model.hpp"
#include "seg4d/maps.hpp"
#include "seg4d/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

namespace testing {

using namespace seg4d;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::vector<double> random_vector(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = normal(rng);
  return v;
}

inline Eigen::Quaterniond random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  return q.normalized();
}

/// Camera at the origin looking down +z.
inline Camera axis_camera(int width, int height, double focal = 40.0) {
  Camera cam;
  cam.fx = cam.fy = focal;
  cam.width = width;
  cam.height = height;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  return cam;
}

/// Primitives scattered in front of axis_camera, mostly inside its frustum.
inline Scene random_scene(std::mt19937_64& rng, int count, int dim, int instances = 1) {
  Scene scene;
  scene.feature_dim = dim;
  for (int i = 0; i < count; ++i) {
    GaussianPrimitive g;
    const double z = uniform(rng, 3.0, 6.0);
    g.mu_x = Vec3(uniform(rng, -0.4, 0.4) * z, uniform(rng, -0.4, 0.4) * z, z);
    g.mu_t = uniform(rng, 0.0, 1.0);
    g.scale_x = Vec3(uniform(rng, 0.05, 0.3), uniform(rng, 0.05, 0.3), uniform(rng, 0.05, 0.3));
    g.scale_t = uniform(rng, 0.3, 2.0);
    g.rotation = random_rotation(rng);
    g.opacity = uniform(rng, 0.3, 1.0);
    g.velocity = Vec3(uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3));
    g.feature = random_vector(rng, dim);
    g.gt_instance = 1 + i % instances;
    scene.primitives.push_back(g);
  }
  return scene;
}

/// Brute-force compositing of one pixel without early termination or record
/// threshold: (weight per primitive index, final transmittance).
struct PixelOracle {
  std::vector<double> weights;
  double transmittance = 1.0;
};

inline PixelOracle composite_pixel(const Scene& scene, const Camera& cam, double t, int x, int y) {
  PixelOracle o;
  o.weights.assign(scene.size(), 0.0);
  for (const auto& s : prepare_splats(scene, cam, t)) {
    if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1) continue;
    const double a = splat_alpha(s, x + 0.5, y + 0.5);
    o.weights[static_cast<std::size_t>(s.index)] = a * o.transmittance;
    o.transmittance *= 1.0 - a;
  }
  return o;
}

inline std::string scene_bytes(const Scene& scene) {
  std::ostringstream os;
  write_scene(os, scene);
  return os.str();
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace testing
