#pragma once

#include "seg4d/maps.hpp"
#include "seg4d/rasterizer.hpp"

#include <string>
#include <vector>

namespace seg4d {

/// Multi-view clip. Per-frame arrays are view-major: index = view * frames + frame.
struct Dataset {
  std::vector<Camera> cameras;
  std::vector<double> times;
  std::vector<SegmentationMap> masks;     // per-image labels, no cross-frame identity
  std::vector<SegmentationMap> gt_masks;  // globally consistent instance ids
  std::vector<FeatureMap> semantic;       // raw surrogate semantic maps, may be empty
  std::vector<int> dynamic_ids;

  int views() const { return static_cast<int>(cameras.size()); }
  int frames() const { return static_cast<int>(times.size()); }
  std::size_t index(int view, int frame) const {
    return static_cast<std::size_t>(view) * times.size() + static_cast<std::size_t>(frame);
  }
  bool has_semantic() const { return !semantic.empty(); }
  void validate() const;
};

// Directory layout:
//   cameras.json, dataset.json (times, dynamic ids, counts),
//   masks/v{V}_t{T}.map, gt/v{V}_t{T}.map, semantic/v{V}_t{T}.map
void write_dataset(const std::string& dir, const Dataset& data);
Dataset read_dataset(const std::string& dir);

std::string cameras_to_json(const std::vector<Camera>& cameras);
std::vector<Camera> cameras_from_json(const std::string& text);

}  // namespace seg4d
