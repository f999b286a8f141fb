#include "seg4d/synth.hpp"

#include "seg4d/error.hpp"
#include "seg4d/rasterizer.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

namespace seg4d {

using nlohmann::json;

const char* to_string(MotionProfile m) {
  switch (m) {
    case MotionProfile::Static: return "static";
    case MotionProfile::Linear: return "linear";
    case MotionProfile::PiecewiseLinear: return "piecewise";
    case MotionProfile::Circular: return "circular";
  }
  return "static";
}

MotionProfile motion_from_string(const std::string& s) {
  if (s == "static") return MotionProfile::Static;
  if (s == "linear") return MotionProfile::Linear;
  if (s == "piecewise") return MotionProfile::PiecewiseLinear;
  if (s == "circular") return MotionProfile::Circular;
  fail(ErrorKind::InvalidArgument, "unknown motion profile '" + s + "'");
}

Vec3 InstanceTemplate::path(double t) const {
  switch (motion) {
    case MotionProfile::Static: return waypoints.front();
    case MotionProfile::Linear: return waypoints[0] + t * (waypoints[1] - waypoints[0]);
    case MotionProfile::PiecewiseLinear: {
      const int legs = static_cast<int>(waypoints.size()) - 1;
      const double s = std::clamp(t, 0.0, 1.0) * legs;
      const int leg = std::min(static_cast<int>(std::floor(s)), legs - 1);
      const double u = s - leg;
      return waypoints[static_cast<std::size_t>(leg)] +
             u * (waypoints[static_cast<std::size_t>(leg) + 1] - waypoints[static_cast<std::size_t>(leg)]);
    }
    case MotionProfile::Circular: {
      const double a = 2.0 * std::numbers::pi * circle_turns * t;
      return circle_center + circle_radius * Vec3(std::cos(a), std::sin(a), 0.0);
    }
  }
  return Vec3::Zero();
}

void SceneSpec::validate() const {
  require(!instances.empty(), ErrorKind::InvalidArgument, "scene spec needs at least one instance");
  require(frames >= 2, ErrorKind::InvalidArgument, "scene spec needs at least two frames");
  require(views >= 1, ErrorKind::InvalidArgument, "scene spec needs at least one view");
  require(width >= 1 && height >= 1 && focal > 0.0, ErrorKind::InvalidArgument, "bad image geometry");
  require(feature_dim >= 1, ErrorKind::InvalidArgument, "feature_dim must be positive");
  require(semantic_classes >= 1 && semantic_dim >= semantic_classes + 1, ErrorKind::InvalidArgument,
          "semantic_dim must hold the background channel plus one channel per class");
  for (const auto& inst : instances) {
    require(inst.primitives_per_segment >= 1 && inst.segments >= 1, ErrorKind::InvalidArgument,
            "instance needs primitives and segments");
    require(inst.primitive_scale > 0.0 && (inst.extent.array() >= 0.0).all(), ErrorKind::InvalidArgument,
            "instance scales must be positive");
    require(inst.opacity > 0.0 && inst.opacity <= 1.0, ErrorKind::InvalidArgument, "instance opacity outside (0,1]");
    switch (inst.motion) {
      case MotionProfile::Static: require(inst.waypoints.size() == 1, ErrorKind::InvalidArgument, "static needs 1 waypoint"); break;
      case MotionProfile::Linear: require(inst.waypoints.size() == 2, ErrorKind::InvalidArgument, "linear needs 2 waypoints"); break;
      case MotionProfile::PiecewiseLinear:
        require(inst.waypoints.size() >= 2, ErrorKind::InvalidArgument, "piecewise needs >= 2 waypoints");
        break;
      case MotionProfile::Circular: require(inst.circle_radius > 0.0, ErrorKind::InvalidArgument, "circle radius must be positive"); break;
    }
  }
}

std::vector<int> SceneSpec::dynamic_ids() const {
  std::vector<int> ids;
  for (std::size_t i = 0; i < instances.size(); ++i)
    if (instances[i].motion != MotionProfile::Static) ids.push_back(static_cast<int>(i) + 1);
  return ids;
}

std::vector<double> SceneSpec::frame_times() const {
  std::vector<double> times(static_cast<std::size_t>(frames));
  for (int k = 0; k < frames; ++k) times[static_cast<std::size_t>(k)] = static_cast<double>(k) / (frames - 1);
  return times;
}

SceneSpec SceneSpec::default_scene() {
  SceneSpec spec;

  InstanceTemplate walker_a;
  walker_a.motion = MotionProfile::Linear;
  walker_a.waypoints = {Vec3(-1.3, -0.9, 0.55), Vec3(-0.3, 0.9, 0.55)};
  walker_a.extent = Vec3(0.22, 0.22, 0.5);
  walker_a.primitive_scale = 0.07;
  walker_a.segments = 10;
  walker_a.primitives_per_segment = 120;

  InstanceTemplate walker_b;
  walker_b.motion = MotionProfile::PiecewiseLinear;
  walker_b.waypoints = {Vec3(1.2, -1.0, 0.55), Vec3(0.5, 0.0, 0.55), Vec3(1.2, 0.9, 0.55)};
  walker_b.extent = Vec3(0.22, 0.22, 0.5);
  walker_b.primitive_scale = 0.07;
  walker_b.segments = 10;
  walker_b.primitives_per_segment = 120;

  // Ball passed back and forth between the walkers, one pass per quarter clip.
  InstanceTemplate ball;
  ball.motion = MotionProfile::PiecewiseLinear;
  const Vec3 hands(0.0, 0.0, 0.45);
  for (int k = 0; k <= 4; ++k) {
    const double t = 0.25 * k;
    const auto& holder = (k % 2 == 0) ? walker_a : walker_b;
    const Vec3 toward = (k % 2 == 0) ? Vec3(0.25, 0.0, 0.0) : Vec3(-0.25, 0.0, 0.0);
    ball.waypoints.push_back(holder.path(t) + hands + toward);
  }
  ball.extent = Vec3(0.14, 0.14, 0.14);
  ball.primitive_scale = 0.045;
  ball.segments = 12;
  ball.primitives_per_segment = 100;

  InstanceTemplate floor;
  floor.motion = MotionProfile::Static;
  floor.waypoints = {Vec3(0.0, 0.0, 0.0)};
  floor.extent = Vec3(2.0, 2.0, 0.02);
  floor.primitive_scale = 0.16;
  floor.segments = 1;
  floor.primitives_per_segment = 1200;

  spec.instances = {walker_a, ball, floor, walker_b};
  return spec;
}

SceneSpec SceneSpec::two_instance() {
  SceneSpec spec;
  InstanceTemplate left;
  left.motion = MotionProfile::Static;
  left.waypoints = {Vec3(-0.45, 0.0, 0.4)};
  left.extent = Vec3(0.3, 0.3, 0.3);
  left.primitive_scale = 0.08;
  left.primitives_per_segment = 200;
  InstanceTemplate right = left;
  right.waypoints = {Vec3(0.45, 0.0, 0.4)};
  spec.instances = {left, right};
  spec.frames = 4;
  spec.views = 2;
  spec.width = spec.height = 48;
  spec.focal = 40.0;
  spec.semantic_classes = 2;
  spec.semantic_dim = 3;
  return spec;
}

SceneSpec SceneSpec::named(const std::string& name) {
  if (name == "default") return default_scene();
  if (name == "two-instance") return two_instance();
  fail(ErrorKind::InvalidArgument, "unknown scene spec '" + name + "'");
}

namespace {

Vec3 sample_in_ellipsoid(const Vec3& extent, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    Vec3 p;
    for (int k = 0; k < 3; ++k) p[k] = u(rng);
    if (p.squaredNorm() <= 1.0) return p.cwiseProduct(extent);
  }
}

Eigen::Quaterniond random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector4d c;
  for (int k = 0; k < 4; ++k) c[k] = n(rng);
  Eigen::Quaterniond q(c[0], c[1], c[2], c[3]);
  q.normalize();
  return q;
}

GaussianPrimitive make_primitive(const InstanceTemplate& inst, const Vec3& center, int feature_dim, double init_scale,
                                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(0.7, 1.3), fade(0.85, 1.0);
  std::normal_distribution<double> feat(0.0, init_scale);
  GaussianPrimitive g;
  g.mu_x = center + sample_in_ellipsoid(inst.extent, rng);
  for (int k = 0; k < 3; ++k) g.scale_x[k] = jitter(rng) * inst.primitive_scale;
  g.rotation = random_rotation(rng);
  g.opacity = inst.opacity * fade(rng);
  g.feature.resize(static_cast<std::size_t>(feature_dim));
  for (double& f : g.feature) f = feat(rng);
  return g;
}

}  // namespace

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.seed, 0x5ce4e));
  Scene scene;
  scene.feature_dim = spec.feature_dim;
  scene.t_min = 0.0;
  scene.t_max = 1.0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (std::size_t k = 0; k < spec.instances.size(); ++k) {
    const auto& inst = spec.instances[k];
    const int id = static_cast<int>(k) + 1;
    const std::vector<double> color = {unit(rng), unit(rng), unit(rng)};
    if (inst.motion == MotionProfile::Static) {
      for (int j = 0; j < inst.primitives_per_segment; ++j) {
        auto g = make_primitive(inst, inst.path(0.0), spec.feature_dim, spec.feature_init_scale, rng);
        g.mu_t = 0.5;
        g.scale_t = 1.0;
        g.sh = color;
        g.gt_instance = id;
        scene.primitives.push_back(std::move(g));
      }
      continue;
    }
    // Chain of segments: windows of half-length h, temporal std 1.5h, so
    // neighbouring visibility windows (opacity >= 0.5) overlap by more than
    // one temporal std.
    const int segments = inst.segments;
    const double h = 0.5 / segments;
    std::uniform_real_distribution<double> stagger(-0.25 * h, 0.25 * h);
    for (int s = 0; s < segments; ++s) {
      const double mid = (2 * s + 1) * h;
      const Vec3 start = inst.path(mid - h), end = inst.path(mid + h);
      const Vec3 velocity = (end - start) / (2.0 * h);
      for (int j = 0; j < inst.primitives_per_segment; ++j) {
        const double mu_t = mid + stagger(rng);
        auto g = make_primitive(inst, start + velocity * (mu_t - (mid - h)), spec.feature_dim, spec.feature_init_scale, rng);
        g.mu_t = mu_t;
        g.scale_t = 1.5 * h;
        g.velocity = velocity;
        g.sh = color;
        g.gt_instance = id;
        scene.primitives.push_back(std::move(g));
      }
    }
  }

  if (spec.background_primitives > 0) {
    InstanceTemplate clutter;
    clutter.extent = Vec3(2.0, 2.0, 1.0);
    clutter.primitive_scale = 0.05;
    clutter.opacity = 0.5;
    for (int j = 0; j < spec.background_primitives; ++j) {
      auto g = make_primitive(clutter, Vec3(0.0, 0.0, 1.0), spec.feature_dim, spec.feature_init_scale, rng);
      g.mu_t = 0.5;
      g.scale_t = 1.0;
      g.sh = {0.5, 0.5, 0.5};
      g.gt_instance = 0;
      scene.primitives.push_back(std::move(g));
    }
  }
  scene.validate();
  return scene;
}

std::vector<Camera> camera_ring(const SceneSpec& spec) {
  std::vector<Camera> cams;
  for (int v = 0; v < spec.views; ++v) {
    const double a = 2.0 * std::numbers::pi * v / spec.views + 0.25 * std::numbers::pi;
    const Vec3 eye(spec.ring_radius * std::cos(a), spec.ring_radius * std::sin(a), spec.ring_height);
    cams.push_back(Camera::look_at(eye, spec.look_target, Vec3::UnitZ(), spec.focal, spec.width, spec.height));
  }
  return cams;
}

SegmentationMap permute_labels(const SegmentationMap& map, std::mt19937_64& rng) {
  std::set<int> present;
  for (int l : map.labels)
    if (l != 0) present.insert(l);
  std::vector<int> targets(present.size());
  std::iota(targets.begin(), targets.end(), 1);
  std::shuffle(targets.begin(), targets.end(), rng);
  std::vector<std::pair<int, int>> mapping;
  std::size_t k = 0;
  for (int l : present) mapping.emplace_back(l, targets[k++]);
  SegmentationMap out = map;
  for (auto& l : out.labels) {
    if (l == 0) continue;
    l = std::lower_bound(mapping.begin(), mapping.end(), std::make_pair(static_cast<int>(l), 0))->second;
  }
  return out;
}

std::vector<SegmentationMap> generate_masks(const Scene& scene, const std::vector<Camera>& cams,
                                            const std::vector<double>& times, bool permute, std::uint64_t seed) {
  const auto labels = ground_truth_labels(scene);
  std::vector<SegmentationMap> masks;
  masks.reserve(cams.size() * times.size());
  for (const auto& cam : cams)
    for (double t : times) masks.push_back(render_labels(scene, labels, cam, t));
  if (permute) {
    std::mt19937_64 rng(seed);
    for (auto& m : masks) m = permute_labels(m, rng);
  }
  return masks;
}

int semantic_class_channel(int instance_id, int classes) {
  if (instance_id <= 0) return 0;
  return 1 + instance_id % classes;
}

std::vector<FeatureMap> generate_semantic(const std::vector<SegmentationMap>& gt_masks, int raw_dim, int classes,
                                          double noise, std::uint64_t seed) {
  require(raw_dim >= classes + 1, ErrorKind::InvalidArgument, "raw semantic dim too small for the class count");
  std::vector<FeatureMap> maps;
  maps.reserve(gt_masks.size());
  for (std::size_t i = 0; i < gt_masks.size(); ++i) {
    const auto& gt = gt_masks[i];
    std::mt19937_64 rng(derive_seed(seed, i));
    std::normal_distribution<double> n(0.0, 1.0);
    FeatureMap map(gt.height, gt.width, raw_dim);
    for (int p = 0; p < gt.pixels(); ++p) {
      auto f = map.pixel(p);
      const int channel = semantic_class_channel(gt.labels[static_cast<std::size_t>(p)], classes);
      for (int c = 0; c < raw_dim; ++c) {
        const double v = (c == channel ? 1.0 : 0.0) + (noise > 0.0 ? noise * n(rng) : 0.0);
        f[static_cast<std::size_t>(c)] = static_cast<double>(static_cast<float>(v));
      }
    }
    maps.push_back(std::move(map));
  }
  return maps;
}

SyntheticData generate_dataset(const SceneSpec& spec) {
  SyntheticData out;
  out.scene = generate_scene(spec);
  auto& data = out.dataset;
  data.cameras = camera_ring(spec);
  data.times = spec.frame_times();
  data.dynamic_ids = spec.dynamic_ids();
  data.gt_masks = generate_masks(out.scene, data.cameras, data.times, false, 0);
  data.masks = data.gt_masks;
  if (spec.permute_masks) {
    std::mt19937_64 rng(derive_seed(spec.seed, 0x3a5c));
    for (auto& m : data.masks) m = permute_labels(m, rng);
  }
  data.semantic = generate_semantic(data.gt_masks, spec.semantic_dim, spec.semantic_classes, spec.semantic_noise,
                                    derive_seed(spec.seed, 0x5e3a));
  return out;
}

namespace {

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
Vec3 vec_from(const json& j) { return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

}  // namespace

std::string spec_to_json(const SceneSpec& spec) {
  json insts = json::array();
  for (const auto& inst : spec.instances) {
    json wps = json::array();
    for (const auto& w : inst.waypoints) wps.push_back(vec_json(w));
    insts.push_back({{"motion", to_string(inst.motion)},
                     {"waypoints", wps},
                     {"circle_center", vec_json(inst.circle_center)},
                     {"circle_radius", inst.circle_radius},
                     {"circle_turns", inst.circle_turns},
                     {"extent", vec_json(inst.extent)},
                     {"primitive_scale", inst.primitive_scale},
                     {"segments", inst.segments},
                     {"primitives_per_segment", inst.primitives_per_segment},
                     {"opacity", inst.opacity}});
  }
  const json j = {{"instances", insts},
                  {"background_primitives", spec.background_primitives},
                  {"frames", spec.frames},
                  {"views", spec.views},
                  {"width", spec.width},
                  {"height", spec.height},
                  {"focal", spec.focal},
                  {"ring_radius", spec.ring_radius},
                  {"ring_height", spec.ring_height},
                  {"look_target", vec_json(spec.look_target)},
                  {"feature_dim", spec.feature_dim},
                  {"feature_init_scale", spec.feature_init_scale},
                  {"semantic_classes", spec.semantic_classes},
                  {"semantic_dim", spec.semantic_dim},
                  {"semantic_noise", spec.semantic_noise},
                  {"permute_masks", spec.permute_masks},
                  {"seed", spec.seed}};
  return j.dump(2);
}

SceneSpec spec_from_json(const std::string& text) {
  SceneSpec spec;
  try {
    const json j = json::parse(text);
    spec.instances.clear();
    for (const auto& ji : j.at("instances")) {
      InstanceTemplate inst;
      inst.motion = motion_from_string(ji.at("motion").get<std::string>());
      for (const auto& w : ji.at("waypoints")) inst.waypoints.push_back(vec_from(w));
      inst.circle_center = vec_from(ji.at("circle_center"));
      inst.circle_radius = ji.at("circle_radius");
      inst.circle_turns = ji.at("circle_turns");
      inst.extent = vec_from(ji.at("extent"));
      inst.primitive_scale = ji.at("primitive_scale");
      inst.segments = ji.at("segments");
      inst.primitives_per_segment = ji.at("primitives_per_segment");
      inst.opacity = ji.at("opacity");
      spec.instances.push_back(inst);
    }
    spec.background_primitives = j.at("background_primitives");
    spec.frames = j.at("frames");
    spec.views = j.at("views");
    spec.width = j.at("width");
    spec.height = j.at("height");
    spec.focal = j.at("focal");
    spec.ring_radius = j.at("ring_radius");
    spec.ring_height = j.at("ring_height");
    spec.look_target = vec_from(j.at("look_target"));
    spec.feature_dim = j.at("feature_dim");
    spec.feature_init_scale = j.at("feature_init_scale");
    spec.semantic_classes = j.at("semantic_classes");
    spec.semantic_dim = j.at("semantic_dim");
    spec.semantic_noise = j.at("semantic_noise");
    spec.permute_masks = j.at("permute_masks");
    spec.seed = j.at("seed");
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("bad scene spec json: ") + e.what());
  }
  spec.validate();
  return spec;
}

}  // namespace seg4d
