#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace seg4d {

/// Dense H x W x C array, row-major with channels innermost.
struct FeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int h, int w, int c) : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, 0.0) {}

  int pixels() const { return height * width; }
  std::span<double> pixel(int p) { return {data.data() + static_cast<std::size_t>(p) * channels, static_cast<std::size_t>(channels)}; }
  std::span<const double> pixel(int p) const {
    return {data.data() + static_cast<std::size_t>(p) * channels, static_cast<std::size_t>(channels)};
  }
  bool same_shape(const FeatureMap& o) const { return height == o.height && width == o.width && channels == o.channels; }
};

/// Per-image instance labels. 0 is unlabeled; ids carry no meaning across images.
struct SegmentationMap {
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> labels;

  SegmentationMap() = default;
  SegmentationMap(int h, int w) : height(h), width(w), labels(static_cast<std::size_t>(h) * w, 0) {}
  int pixels() const { return height * width; }
  std::int32_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::int32_t max_label() const;
};

// Flat binary map file: one ASCII header line with eight values
//   "<magic> <version> <H> <W> <C> <dtype> <time> <view>\n"
// followed by H*W*C little-endian values. dtype: 1 = float32, 2 = float64, 3 = int32.
inline constexpr const char* kMapMagic = "S4DMAP";
inline constexpr int kMapFormatVersion = 1;
enum class MapDtype : int { Float32 = 1, Float64 = 2, Int32 = 3 };

struct MapHeader {
  int height = 0;
  int width = 0;
  int channels = 0;
  MapDtype dtype = MapDtype::Float32;
  double time = 0.0;
  int view = 0;
};

void write_feature_map(const std::string& path, const FeatureMap& map, MapDtype dtype, double time, int view);
FeatureMap read_feature_map(const std::string& path, MapHeader* header = nullptr);
void write_label_map(const std::string& path, const SegmentationMap& map, double time, int view);
SegmentationMap read_label_map(const std::string& path, MapHeader* header = nullptr);

/// 8-bit RGB image, row-major.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;
};

void write_ppm(const std::string& path, const RgbImage& image);
RgbImage label_map_to_rgb(const SegmentationMap& map);

}  // namespace seg4d
