#pragma once

#include "seg4d/core_model.hpp"
#include "seg4d/dataset.hpp"
#include "seg4d/seeding.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace seg4d {

enum class MotionProfile { Static, Linear, PiecewiseLinear, Circular };

const char* to_string(MotionProfile m);
MotionProfile motion_from_string(const std::string& s);

/// One ground-truth instance: a blob of primitives following a trajectory.
/// Moving instances are chains of short-lived segments, each a fresh set of
/// primitives moving with the segment's chord velocity.
struct InstanceTemplate {
  MotionProfile motion = MotionProfile::Static;
  std::vector<Vec3> waypoints;  // static: [p]; linear: [a, b]; piecewise: [p0, p1, ...] (equal time per leg)
  Vec3 circle_center = Vec3::Zero();  // circular motion in the xy plane
  double circle_radius = 1.0;
  double circle_turns = 1.0;
  Vec3 extent = Vec3(0.2, 0.2, 0.2);  // blob half-axes
  double primitive_scale = 0.05;
  int segments = 8;                 // temporal segments for moving instances
  int primitives_per_segment = 64;  // static instances use this for their single segment
  double opacity = 0.9;

  /// Trajectory of the blob center at normalized time t.
  Vec3 path(double t) const;
};

struct SceneSpec {
  std::vector<InstanceTemplate> instances;  // gt ids are 1..N in order
  int background_primitives = 0;            // unlabeled clutter (gt tag 0)
  int frames = 30;
  int views = 4;
  int width = 96;
  int height = 96;
  double focal = 80.0;
  double ring_radius = 4.0;
  double ring_height = 2.5;
  Vec3 look_target = Vec3(0.0, 0.0, 0.4);
  int feature_dim = 32;
  double feature_init_scale = 0.01;
  int semantic_classes = 3;
  int semantic_dim = 4;
  double semantic_noise = 0.1;
  bool permute_masks = true;
  std::uint64_t seed = 1;

  void validate() const;
  std::vector<int> dynamic_ids() const;
  std::vector<double> frame_times() const;

  /// Floor, two walkers, and a ball passed between them.
  static SceneSpec default_scene();
  /// Two static blobs side by side.
  static SceneSpec two_instance();
  static SceneSpec named(const std::string& name);
};

Scene generate_scene(const SceneSpec& spec);
std::vector<Camera> camera_ring(const SceneSpec& spec);

/// Ground-truth masks rendered from gt tags, one per (view, frame), view-major.
/// With `permute`, every image gets an independent random relabeling of its
/// instance ids onto 1..K.
std::vector<SegmentationMap> generate_masks(const Scene& scene, const std::vector<Camera>& cams,
                                            const std::vector<double>& times, bool permute, std::uint64_t seed);

/// Relabels one image's nonzero ids onto a random permutation of 1..K.
SegmentationMap permute_labels(const SegmentationMap& map, std::mt19937_64& rng);

/// Surrogate semantic maps: one-hot class code (instance id mod classes,
/// offset by one; channel 0 is background) plus Gaussian noise. Values are
/// rounded to float32 so they survive the on-disk format unchanged.
std::vector<FeatureMap> generate_semantic(const std::vector<SegmentationMap>& gt_masks, int raw_dim, int classes,
                                          double noise, std::uint64_t seed);
int semantic_class_channel(int instance_id, int classes);

struct SyntheticData {
  Scene scene;
  Dataset dataset;
};

SyntheticData generate_dataset(const SceneSpec& spec);

std::string spec_to_json(const SceneSpec& spec);
SceneSpec spec_from_json(const std::string& text);

}  // namespace seg4d
