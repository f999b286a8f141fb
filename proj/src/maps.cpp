#include "seg4d/maps.hpp"

#include "seg4d/error.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace seg4d {

namespace {

void write_header(std::ostream& os, const MapHeader& h) {
  std::ostringstream line;
  line.precision(17);
  line << kMapMagic << ' ' << kMapFormatVersion << ' ' << h.height << ' ' << h.width << ' ' << h.channels << ' '
       << static_cast<int>(h.dtype) << ' ' << h.time << ' ' << h.view << '\n';
  os << line.str();
}

MapHeader read_header(std::istream& is, const std::string& path) {
  std::string line;
  if (!std::getline(is, line)) fail(ErrorKind::Format, path + ": empty map file");
  std::istringstream in(line);
  std::string magic;
  int version = 0, dtype = 0;
  MapHeader h;
  in >> magic >> version >> h.height >> h.width >> h.channels >> dtype >> h.time >> h.view;
  if (!in || magic != kMapMagic) fail(ErrorKind::Format, path + ": bad map header");
  if (version != kMapFormatVersion) fail(ErrorKind::Format, path + ": unsupported map version");
  if (dtype < 1 || dtype > 3) fail(ErrorKind::Format, path + ": unknown dtype code");
  if (h.height < 0 || h.width < 0 || h.channels < 0) fail(ErrorKind::Format, path + ": negative dimensions");
  h.dtype = static_cast<MapDtype>(dtype);
  return h;
}

template <typename T>
void read_raw(std::istream& is, std::vector<T>& out, std::size_t n, const std::string& path) {
  out.resize(n);
  is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) fail(ErrorKind::Format, path + ": truncated map payload");
}

}  // namespace

std::int32_t SegmentationMap::max_label() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
}

void write_feature_map(const std::string& path, const FeatureMap& map, MapDtype dtype, double time, int view) {
  require(dtype != MapDtype::Int32, ErrorKind::InvalidArgument, "feature maps are floating point");
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  write_header(os, {map.height, map.width, map.channels, dtype, time, view});
  if (dtype == MapDtype::Float64) {
    os.write(reinterpret_cast<const char*>(map.data.data()), static_cast<std::streamsize>(map.data.size() * sizeof(double)));
  } else {
    std::vector<float> tmp(map.data.begin(), map.data.end());
    os.write(reinterpret_cast<const char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * sizeof(float)));
  }
  if (!os) fail(ErrorKind::Io, "failed writing " + path);
}

FeatureMap read_feature_map(const std::string& path, MapHeader* header) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open " + path);
  const MapHeader h = read_header(is, path);
  if (h.dtype == MapDtype::Int32) fail(ErrorKind::Format, path + ": expected a floating point map");
  FeatureMap map(h.height, h.width, h.channels);
  const std::size_t n = map.data.size();
  if (h.dtype == MapDtype::Float64) {
    read_raw(is, map.data, n, path);
  } else {
    std::vector<float> tmp;
    read_raw(is, tmp, n, path);
    std::copy(tmp.begin(), tmp.end(), map.data.begin());
  }
  if (header) *header = h;
  return map;
}

void write_label_map(const std::string& path, const SegmentationMap& map, double time, int view) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  write_header(os, {map.height, map.width, 1, MapDtype::Int32, time, view});
  os.write(reinterpret_cast<const char*>(map.labels.data()),
           static_cast<std::streamsize>(map.labels.size() * sizeof(std::int32_t)));
  if (!os) fail(ErrorKind::Io, "failed writing " + path);
}

SegmentationMap read_label_map(const std::string& path, MapHeader* header) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open " + path);
  const MapHeader h = read_header(is, path);
  if (h.dtype != MapDtype::Int32 || h.channels != 1) fail(ErrorKind::Format, path + ": expected an int32 label map");
  SegmentationMap map(h.height, h.width);
  read_raw(is, map.labels, map.labels.size(), path);
  if (header) *header = h;
  return map;
}

void write_ppm(const std::string& path, const RgbImage& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  os << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!os) fail(ErrorKind::Io, "failed writing " + path);
}

RgbImage label_map_to_rgb(const SegmentationMap& map) {
  RgbImage img{map.height, map.width, std::vector<std::uint8_t>(static_cast<std::size_t>(map.pixels()) * 3, 0)};
  for (int p = 0; p < map.pixels(); ++p) {
    const auto label = static_cast<std::uint32_t>(map.labels[static_cast<std::size_t>(p)]);
    if (label == 0) continue;
    // Knuth multiplicative hash spreads consecutive ids over distinct hues.
    const std::uint32_t h = label * 2654435761u;
    img.rgb[3 * p + 0] = static_cast<std::uint8_t>(64 + (h >> 24) % 192);
    img.rgb[3 * p + 1] = static_cast<std::uint8_t>(64 + (h >> 16) % 192);
    img.rgb[3 * p + 2] = static_cast<std::uint8_t>(64 + (h >> 8) % 192);
  }
  return img;
}

}  // namespace seg4d
