#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "geoseg/geometry/centroid.hpp"
#include "geoseg/scenegen/dataset.hpp"

using namespace geoseg;
using scenegen::ClassTable;
using scenegen::NoiseSpec;
using scenegen::SceneSpec;
using scenegen::Shape;

namespace {

NoiseSpec noiseless() { return NoiseSpec{0.0, 0.0}; }

SceneSpec axis_sphere_spec() {
  SceneSpec spec;
  spec.name = "axis";
  spec.seed = 1;
  spec.noise = noiseless();
  spec.objects = {{Shape::kSphere, {0, 0, 2}, 1.0, 1, 1}};
  spec.cameras = {geom::Camera(32, 32, 16, 16, geom::Mat3::identity(), {0, 0, 0})};
  return spec;
}

}  // namespace

TEST_CASE("ray-sphere: center pixel depth matches the analytic front hit") {
  auto classes = ClassTable::standard(32, 0);
  auto sample = scenegen::render(axis_sphere_spec(), classes);
  const auto& view = sample.views[0];
  // unit sphere at z=2 seen from the origin: front surface at depth 1
  CHECK(view.depth[view.pixel_index(16, 16)] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(view.instance_ids[view.pixel_index(16, 16)] == 1);
  CHECK(view.class_ids[view.pixel_index(16, 16)] == 1);
  // corner pixel misses: background depth and id 0
  CHECK(view.depth[view.pixel_index(0, 0)] == doctest::Approx(scenegen::kBackgroundDepth));
  CHECK(view.instance_ids[view.pixel_index(0, 0)] == 0);
}

TEST_CASE("noiseless rendering is exactly deterministic") {
  auto classes = ClassTable::standard(32, 0);
  auto a = scenegen::render(axis_sphere_spec(), classes);
  auto b = scenegen::render(axis_sphere_spec(), classes);
  CHECK(a.views[0].depth == b.views[0].depth);
  CHECK(a.views[0].features == b.views[0].features);
  CHECK(a.views[0].instance_ids == b.views[0].instance_ids);
}

TEST_CASE("same seed gives bitwise identical noisy samples") {
  auto classes = ClassTable::standard(32, 5);
  auto spec = scenegen::twin_scene_spec(2.5, 42);
  auto a = scenegen::render(spec, classes);
  auto b = scenegen::render(spec, classes);
  for (std::size_t v = 0; v < a.views.size(); ++v) {
    CHECK(a.views[v].depth == b.views[v].depth);
    CHECK(a.views[v].features == b.views[v].features);
  }
}

TEST_CASE("render rejects degenerate specs") {
  auto classes = ClassTable::standard(32, 0);
  SceneSpec empty;
  empty.cameras = {geom::Camera(32, 32, 16, 16, geom::Mat3::identity(), {0, 0, 0})};
  CHECK_THROWS_AS(scenegen::render(empty, classes), GenerationError);

  SceneSpec behind = axis_sphere_spec();
  behind.objects[0].center = {0, 0, -3};
  CHECK_THROWS_AS(scenegen::render(behind, classes), GenerationError);
}

TEST_CASE("twin scene: GT centroid separation under noiseless depth") {
  auto classes = ClassTable::standard(32, 3);
  auto sample = scenegen::make_twin_scene(3.0, 11, classes, noiseless());
  // centroid of each twin's GT mask via unprojection, in view 0
  const auto& view = sample.views[0];
  auto pm = scenegen::view_pointmap(view);
  auto m1 = scenegen::instance_mask<double>(view, 1);
  auto m2 = scenegen::instance_mask<double>(view, 2);
  auto c1 = geom::mask_weighted_centroid(m1, pm);
  auto c2 = geom::mask_weighted_centroid(m2, pm);
  REQUIRE(c1.weight_sum > 3);
  REQUIRE(c2.weight_sum > 3);
  CHECK(geom::distance(c1.centroid, c2.centroid) == doctest::Approx(3.0).epsilon(0.05 / 3.0));
}

TEST_CASE("twin scene: zero separation is rejected") {
  CHECK_THROWS_AS(scenegen::twin_scene_spec(0.0, 1), GenerationError);
}

TEST_CASE("twin scene: twins share features, cosine similarity > 0.95") {
  auto classes = ClassTable::standard(32, 3);
  auto sample = scenegen::make_twin_scene(3.0, 13, classes, NoiseSpec{0.0, 0.1});
  const auto& view = sample.views[0];
  const int F = view.feature_dim;
  std::vector<double> mean1(F, 0), mean2(F, 0);
  int n1 = 0, n2 = 0;
  for (int v = 0; v < view.height; ++v)
    for (int u = 0; u < view.width; ++u) {
      const auto i = view.pixel_index(u, v);
      if (view.instance_ids[i] == 1) {
        ++n1;
        for (int f = 0; f < F; ++f) mean1[f] += view.features[i * F + f];
      } else if (view.instance_ids[i] == 2) {
        ++n2;
        for (int f = 0; f < F; ++f) mean2[f] += view.features[i * F + f];
      }
    }
  REQUIRE(n1 > 5);
  REQUIRE(n2 > 5);
  double dot = 0, na = 0, nb = 0;
  for (int f = 0; f < F; ++f) {
    mean1[f] /= n1;
    mean2[f] /= n2;
    dot += mean1[f] * mean2[f];
    na += mean1[f] * mean1[f];
    nb += mean2[f] * mean2[f];
  }
  CHECK(dot / std::sqrt(na * nb) > 0.95);
}

TEST_CASE("GT masks partition the image") {
  auto classes = ClassTable::standard(32, 5);
  auto ds = scenegen::make_dataset({6, 77, 0.5, NoiseSpec{}, 32});
  for (const auto& scene : ds.scenes)
    for (const auto& view : scene.views)
      for (std::size_t i = 0; i < view.instance_ids.size(); ++i) {
        // exactly one id per pixel by construction; id 0 is background
        const bool is_bg = view.instance_ids[i] == 0;
        CHECK(is_bg == (view.class_ids[i] == 0));
      }
}

TEST_CASE("cross-view geometric consistency on noiseless scenes") {
  auto classes = ClassTable::standard(32, 5);
  auto sample = scenegen::make_twin_scene(2.2, 21, classes, noiseless());
  num::Rng rng(99);
  const auto& va = sample.views[0];
  const auto& vb = sample.views[1];
  // sample object pixels of view a, reproject into view b
  std::vector<std::pair<int, int>> object_pixels;
  for (int v = 0; v < va.height; ++v)
    for (int u = 0; u < va.width; ++u)
      if (va.instance_ids[va.pixel_index(u, v)] != 0) object_pixels.emplace_back(u, v);
  REQUIRE(object_pixels.size() >= 20);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto [u, v] = object_pixels[rng.next_u32(static_cast<std::uint32_t>(
        object_pixels.size()))];
    const auto i = va.pixel_index(u, v);
    const auto inst = va.instance_ids[i];
    const geom::Vec3 p = va.camera.unproject_pixel(u, v, va.depth[i]);
    const auto uvd = vb.camera.project_point(p);
    const int iu = static_cast<int>(std::lround(uvd[0]));
    const int iv = static_cast<int>(std::lround(uvd[1]));
    if (iu < 0 || iv < 0 || iu >= vb.width || iv >= vb.height) continue;
    ++checked;
    const auto j = vb.pixel_index(iu, iv);
    // the same instance, or an occluder strictly in front, or a boundary
    // pixel whose rounded reprojection fell just off the silhouette
    const bool same = vb.instance_ids[j] == inst;
    const bool occluded = vb.depth[j] < uvd[2] - 1e-6;
    bool near_boundary = false;
    if (!same && !occluded) {
      for (int dy = -1; dy <= 1 && !near_boundary; ++dy)
        for (int dx = -1; dx <= 1 && !near_boundary; ++dx) {
          const int nu = iu + dx, nv = iv + dy;
          if (nu < 0 || nv < 0 || nu >= vb.width || nv >= vb.height) continue;
          if (vb.instance_ids[vb.pixel_index(nu, nv)] == inst) near_boundary = true;
        }
    }
    CHECK((same || occluded || near_boundary));
  }
  CHECK(checked >= 50);
}

TEST_CASE("depth noise is unbiased") {
  auto classes = ClassTable::standard(32, 5);
  auto noisy = scenegen::make_twin_scene(2.5, 31, classes, NoiseSpec{0.02, 0.0});
  auto clean = scenegen::make_twin_scene(2.5, 31, classes, noiseless());
  double sum_rel = 0;
  std::size_t n = 0;
  for (std::size_t v = 0; v < noisy.views.size(); ++v)
    for (std::size_t i = 0; i < noisy.views[v].depth.size(); ++i) {
      sum_rel += (noisy.views[v].depth[i] - clean.views[v].depth[i]) / clean.views[v].depth[i];
      ++n;
    }
  const double mean_rel = sum_rel / static_cast<double>(n);
  CHECK(std::abs(mean_rel) < 3.0 * 0.02 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("tokenize pools blocks and records pixel rects") {
  auto classes = ClassTable::standard(8, 2);
  SceneSpec spec = axis_sphere_spec();
  spec.feature_dim = 8;
  auto sample = scenegen::render(spec, classes);
  auto grid = scenegen::tokenize(sample.views[0], 4);
  CHECK(grid.count() == 64);  // 8x8 grid of 4x4 blocks on 32x32
  CHECK(grid.blocks[0] == std::array<int, 4>{0, 0, 4, 4});
  // mean pooling oracle on the first block
  const auto& view = sample.views[0];
  for (int f = 0; f < 8; ++f) {
    double acc = 0;
    for (int yy = 0; yy < 4; ++yy)
      for (int xx = 0; xx < 4; ++xx) acc += view.features[view.pixel_index(xx, yy) * 8 + f];
    CHECK(grid.features.at(0, f) == doctest::Approx(acc / 16.0).epsilon(1e-6));
  }
  // center-pixel position oracle
  const float d = view.depth[view.pixel_index(2, 2)];
  const auto want = view.camera.unproject_pixel(2, 2, d);
  CHECK(grid.positions[0].x == doctest::Approx(want.x).epsilon(1e-12));
  CHECK(grid.positions[0].z == doctest::Approx(want.z).epsilon(1e-12));
}

TEST_CASE("dataset round trip is bitwise exact") {
  const std::string dir = "/tmp/geoseg_test_ds";
  std::filesystem::remove_all(dir);
  auto ds = scenegen::make_dataset({4, 9, 0.5, NoiseSpec{}, 16});
  scenegen::write_dataset(dir, ds);
  auto loaded = scenegen::read_dataset(dir);
  REQUIRE(loaded.scenes.size() == ds.scenes.size());
  CHECK(loaded.seed == ds.seed);
  for (std::size_t s = 0; s < ds.scenes.size(); ++s) {
    REQUIRE(loaded.scenes[s].views.size() == ds.scenes[s].views.size());
    for (std::size_t v = 0; v < ds.scenes[s].views.size(); ++v) {
      CHECK(loaded.scenes[s].views[v].features == ds.scenes[s].views[v].features);
      CHECK(loaded.scenes[s].views[v].depth == ds.scenes[s].views[v].depth);
      CHECK(loaded.scenes[s].views[v].instance_ids == ds.scenes[s].views[v].instance_ids);
      CHECK(loaded.scenes[s].views[v].camera.fx == ds.scenes[s].views[v].camera.fx);
      for (int k = 0; k < 9; ++k)
        CHECK(loaded.scenes[s].views[v].camera.rotation.m[k] ==
              ds.scenes[s].views[v].camera.rotation.m[k]);
    }
    for (std::size_t o = 0; o < ds.scenes[s].objects.size(); ++o) {
      CHECK(loaded.scenes[s].objects[o].center.x == ds.scenes[s].objects[o].center.x);
      CHECK(loaded.scenes[s].objects[o].size == ds.scenes[s].objects[o].size);
    }
  }
  for (std::size_t c = 0; c < ds.classes.classes.size(); ++c)
    CHECK(loaded.classes.classes[c].embedding == ds.classes.classes[c].embedding);
}

TEST_CASE("dataset corruption and version errors are distinct") {
  const std::string dir = "/tmp/geoseg_test_ds_bad";
  std::filesystem::remove_all(dir);
  auto ds = scenegen::make_dataset({2, 9, 0.5, NoiseSpec{}, 8});
  scenegen::write_dataset(dir, ds);

  // corrupt one payload byte
  const std::string victim = dir + "/scenes/scene_0000/depth.bin";
  {
    std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(10);
    char c;
    f.seekg(10);
    f.get(c);
    f.seekp(10);
    f.put(static_cast<char>(c ^ 0x7f));
  }
  CHECK_THROWS_WITH_AS(scenegen::read_dataset(dir), doctest::Contains("depth.bin"),
                       DatasetChecksumError);

  // restore, then truncate a file
  scenegen::write_dataset(dir, ds);
  std::filesystem::resize_file(dir + "/scenes/scene_0001/class.bin", 4);
  CHECK_THROWS_WITH_AS(scenegen::read_dataset(dir), doctest::Contains("class.bin"),
                       DatasetTruncatedError);

  // unknown version
  scenegen::write_dataset(dir, ds);
  {
    std::ifstream in(dir + "/manifest.json");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto pos = text.find("\"version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 12, "\"version\": 9");
    std::ofstream out(dir + "/manifest.json");
    out << text;
  }
  CHECK_THROWS_AS(scenegen::read_dataset(dir), DatasetVersionError);
}

TEST_CASE("make_dataset mixes twin and random scenes deterministically") {
  auto a = scenegen::make_dataset({10, 123, 0.4, NoiseSpec{}, 16});
  auto b = scenegen::make_dataset({10, 123, 0.4, NoiseSpec{}, 16});
  int twins = 0;
  for (std::size_t s = 0; s < a.scenes.size(); ++s) {
    CHECK(a.scenes[s].views[0].depth == b.scenes[s].views[0].depth);
    bool twin = a.scenes[s].objects.size() == 3 && a.scenes[s].objects[0].class_id == 1 &&
                a.scenes[s].objects[1].class_id == 1;
    if (twin) ++twins;
  }
  CHECK(twins == 4);
}
