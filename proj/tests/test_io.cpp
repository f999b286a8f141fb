#include "doctest.h"
#include "support.hpp"

#include "seg4d/dataset.hpp"
#include "seg4d/error.hpp"
#include "seg4d/synth.hpp"

#include <filesystem>
#include <fstream>

using namespace testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("seg4d_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("feature map round trip") {
  const auto dir = scratch_dir("fmap");
  std::mt19937_64 rng(3);
  FeatureMap m(5, 7, 3);
  for (double& v : m.data) v = uniform(rng, -2.0, 2.0);

  SUBCASE("float64 is exact") {
    const auto path = (dir / "a.map").string();
    write_feature_map(path, m, MapDtype::Float64, 0.25, 2);
    MapHeader h;
    const auto back = read_feature_map(path, &h);
    CHECK(back.same_shape(m));
    CHECK(back.data == m.data);
    CHECK(h.time == 0.25);
    CHECK(h.view == 2);
    CHECK(h.dtype == MapDtype::Float64);
  }
  SUBCASE("float32 rounds once") {
    const auto path = (dir / "b.map").string();
    write_feature_map(path, m, MapDtype::Float32, 1.0 / 3.0, 0);
    MapHeader h;
    const auto back = read_feature_map(path, &h);
    for (std::size_t i = 0; i < m.data.size(); ++i)
      CHECK(back.data[i] == static_cast<double>(static_cast<float>(m.data[i])));
    CHECK(h.time == 1.0 / 3.0);
    write_feature_map(path, back, MapDtype::Float32, 0.0, 0);
    CHECK(read_feature_map(path).data == back.data);
  }
  SUBCASE("label map is rejected as features") {
    const auto path = (dir / "c.map").string();
    SegmentationMap s(2, 2);
    write_label_map(path, s, 0.0, 0);
    CHECK(kind_of([&] { read_feature_map(path); }) == ErrorKind::Format);
  }
  CHECK(kind_of([&] { write_feature_map((dir / "d.map").string(), m, MapDtype::Int32, 0.0, 0); }) ==
        ErrorKind::InvalidArgument);
}

TEST_CASE("label map round trip and malformed files") {
  const auto dir = scratch_dir("lmap");
  SegmentationMap s(4, 6);
  for (int p = 0; p < s.pixels(); ++p) s.labels[static_cast<std::size_t>(p)] = (p * 7) % 5 - 1;
  const auto path = (dir / "m.map").string();
  write_label_map(path, s, 0.5, 3);
  MapHeader h;
  const auto back = read_label_map(path, &h);
  CHECK(back.labels == s.labels);
  CHECK(back.width == 6);
  CHECK(back.height == 4);
  CHECK(h.view == 3);

  CHECK(kind_of([&] { read_label_map((dir / "missing.map").string()); }) == ErrorKind::Io);

  const auto bad = (dir / "bad.map").string();
  auto write_raw = [&](const std::string& bytes) {
    std::ofstream os(bad, std::ios::binary);
    os << bytes;
  };
  write_raw("");
  CHECK(kind_of([&] { read_label_map(bad); }) == ErrorKind::Format);
  write_raw("NOTMAP 1 2 2 1 3 0 0\n");
  CHECK(kind_of([&] { read_label_map(bad); }) == ErrorKind::Format);
  write_raw("S4DMAP 9 2 2 1 3 0 0\n");
  CHECK(kind_of([&] { read_label_map(bad); }) == ErrorKind::Format);
  write_raw("S4DMAP 1 2 2 1 7 0 0\n");
  CHECK(kind_of([&] { read_label_map(bad); }) == ErrorKind::Format);
  write_raw("S4DMAP 1 2 2 1 3 0 0\nabc");  // 3 of 16 payload bytes
  CHECK(kind_of([&] { read_label_map(bad); }) == ErrorKind::Format);
  write_raw("S4DMAP 1 2 2 2 3 0 0\n");
  CHECK(kind_of([&] { read_label_map(bad); }) == ErrorKind::Format);
}

TEST_CASE("ppm output") {
  const auto dir = scratch_dir("ppm");
  SegmentationMap s(3, 4);
  s.labels = {0, 1, 2, 3, 0, 1, 2, 3, 0, 0, 0, 5};
  const RgbImage img = label_map_to_rgb(s);
  REQUIRE(img.rgb.size() == 36);
  CHECK(img.rgb[0] == 0);
  // Same label, same color; different labels, different colors.
  CHECK(std::equal(img.rgb.begin() + 3, img.rgb.begin() + 6, img.rgb.begin() + 15));
  CHECK(!std::equal(img.rgb.begin() + 3, img.rgb.begin() + 6, img.rgb.begin() + 6));
  const auto path = (dir / "x.ppm").string();
  write_ppm(path, img);
  std::ifstream is(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string header = "P6\n4 3\n255\n";
  REQUIRE(bytes.size() == header.size() + 36);
  CHECK(bytes.substr(0, header.size()) == header);
}

TEST_CASE("dataset round trip") {
  const auto dir = scratch_dir("dataset");
  SceneSpec spec = SceneSpec::two_instance();
  spec.instances[0].primitives_per_segment = 40;
  spec.instances[1].primitives_per_segment = 40;
  const auto data = generate_dataset(spec);
  write_dataset(dir.string(), data.dataset);
  const Dataset back = read_dataset(dir.string());
  REQUIRE(back.views() == data.dataset.views());
  REQUIRE(back.frames() == data.dataset.frames());
  CHECK(back.times == data.dataset.times);
  CHECK(back.dynamic_ids == data.dataset.dynamic_ids);
  for (std::size_t v = 0; v < back.cameras.size(); ++v) {
    CHECK(back.cameras[v].rotation == data.dataset.cameras[v].rotation);
    CHECK(back.cameras[v].translation == data.dataset.cameras[v].translation);
    CHECK(back.cameras[v].fx == data.dataset.cameras[v].fx);
  }
  for (std::size_t i = 0; i < back.masks.size(); ++i) {
    CHECK(back.masks[i].labels == data.dataset.masks[i].labels);
    CHECK(back.gt_masks[i].labels == data.dataset.gt_masks[i].labels);
    CHECK(back.semantic[i].data == data.dataset.semantic[i].data);
  }

  SUBCASE("missing directory") { CHECK(kind_of([&] { read_dataset((dir / "nope").string()); }) == ErrorKind::Io); }
  SUBCASE("missing map file") {
    fs::remove(dir / "masks" / "v0_t0.map");
    CHECK(kind_of([&] { read_dataset(dir.string()); }) == ErrorKind::Io);
  }
  SUBCASE("corrupt metadata") {
    std::ofstream(dir / "dataset.json") << "{\"times\": 3}";
    CHECK(kind_of([&] { read_dataset(dir.string()); }) == ErrorKind::Format);
  }
  SUBCASE("inconsistent dataset is refused") {
    Dataset broken = data.dataset;
    broken.masks.pop_back();
    CHECK(kind_of([&] { write_dataset((dir / "w").string(), broken); }) == ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("cameras json") {
  const auto cams = camera_ring(SceneSpec::default_scene());
  const auto back = cameras_from_json(cameras_to_json(cams));
  REQUIRE(back.size() == cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    CHECK(back[i].rotation == cams[i].rotation);
    CHECK(back[i].translation == cams[i].translation);
  }
  CHECK(kind_of([] { cameras_from_json("[{\"fx\": 1}]"); }) == ErrorKind::Format);
}

}  // TEST_SUITE
