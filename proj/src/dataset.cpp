#include "seg4d/dataset.hpp"

#include "seg4d/error.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace seg4d {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string frame_name(int view, int frame) {
  return "v" + std::to_string(view) + "_t" + std::to_string(frame) + ".map";
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void dump(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  os << text;
}

}  // namespace

void Dataset::validate() const {
  const std::size_t n = cameras.size() * times.size();
  require(!cameras.empty() && !times.empty(), ErrorKind::InvalidArgument, "dataset needs at least one view and frame");
  require(masks.size() == n, ErrorKind::ShapeMismatch, "dataset mask count does not match views x frames");
  require(gt_masks.empty() || gt_masks.size() == n, ErrorKind::ShapeMismatch, "ground-truth mask count mismatch");
  require(semantic.empty() || semantic.size() == n, ErrorKind::ShapeMismatch, "semantic map count mismatch");
  for (int v = 0; v < views(); ++v)
    for (int t = 0; t < frames(); ++t) {
      const auto& m = masks[index(v, t)];
      require(m.width == cameras[static_cast<std::size_t>(v)].width && m.height == cameras[static_cast<std::size_t>(v)].height,
              ErrorKind::ShapeMismatch, "mask size differs from its camera");
    }
}

std::string cameras_to_json(const std::vector<Camera>& cameras) {
  json arr = json::array();
  for (const auto& c : cameras) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r) rot.push_back({c.rotation(r, 0), c.rotation(r, 1), c.rotation(r, 2)});
    arr.push_back({{"fx", c.fx},
                   {"fy", c.fy},
                   {"cx", c.cx},
                   {"cy", c.cy},
                   {"width", c.width},
                   {"height", c.height},
                   {"rotation", rot},
                   {"translation", {c.translation.x(), c.translation.y(), c.translation.z()}}});
  }
  return arr.dump(2);
}

std::vector<Camera> cameras_from_json(const std::string& text) {
  std::vector<Camera> cams;
  try {
    for (const auto& j : json::parse(text)) {
      Camera c;
      c.fx = j.at("fx");
      c.fy = j.at("fy");
      c.cx = j.at("cx");
      c.cy = j.at("cy");
      c.width = j.at("width");
      c.height = j.at("height");
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) c.rotation(r, k) = j.at("rotation").at(r).at(k);
      for (int k = 0; k < 3; ++k) c.translation[k] = j.at("translation").at(k);
      c.validate();
      cams.push_back(c);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("bad cameras json: ") + e.what());
  }
  return cams;
}

void write_dataset(const std::string& dir, const Dataset& data) {
  data.validate();
  const fs::path root(dir);
  fs::create_directories(root / "masks");
  if (!data.gt_masks.empty()) fs::create_directories(root / "gt");
  if (data.has_semantic()) fs::create_directories(root / "semantic");
  dump(root / "cameras.json", cameras_to_json(data.cameras));
  const json meta = {{"format", "seg4d-dataset"},
                     {"version", 1},
                     {"views", data.views()},
                     {"frames", data.frames()},
                     {"times", data.times},
                     {"dynamic_ids", data.dynamic_ids},
                     {"has_gt", !data.gt_masks.empty()},
                     {"has_semantic", data.has_semantic()}};
  dump(root / "dataset.json", meta.dump(2));
  for (int v = 0; v < data.views(); ++v)
    for (int t = 0; t < data.frames(); ++t) {
      const auto i = data.index(v, t);
      const double time = data.times[static_cast<std::size_t>(t)];
      write_label_map((root / "masks" / frame_name(v, t)).string(), data.masks[i], time, v);
      if (!data.gt_masks.empty()) write_label_map((root / "gt" / frame_name(v, t)).string(), data.gt_masks[i], time, v);
      if (data.has_semantic())
        write_feature_map((root / "semantic" / frame_name(v, t)).string(), data.semantic[i], MapDtype::Float32, time, v);
    }
}

Dataset read_dataset(const std::string& dir) {
  const fs::path root(dir);
  require(fs::is_directory(root), ErrorKind::Io, "dataset directory not found: " + dir);
  Dataset data;
  data.cameras = cameras_from_json(slurp(root / "cameras.json"));
  json meta;
  try {
    meta = json::parse(slurp(root / "dataset.json"));
    data.times = meta.at("times").get<std::vector<double>>();
    data.dynamic_ids = meta.at("dynamic_ids").get<std::vector<int>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("bad dataset.json: ") + e.what());
  }
  const bool has_gt = meta.value("has_gt", false), has_sem = meta.value("has_semantic", false);
  for (int v = 0; v < data.views(); ++v)
    for (int t = 0; t < data.frames(); ++t) {
      data.masks.push_back(read_label_map((root / "masks" / frame_name(v, t)).string()));
      if (has_gt) data.gt_masks.push_back(read_label_map((root / "gt" / frame_name(v, t)).string()));
      if (has_sem) data.semantic.push_back(read_feature_map((root / "semantic" / frame_name(v, t)).string()));
    }
  data.validate();
  return data;
}

}  // namespace seg4d
