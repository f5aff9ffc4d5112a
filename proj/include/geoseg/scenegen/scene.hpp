#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geoseg/gasa/token_grid.hpp"
#include "geoseg/geometry/camera.hpp"
#include "geoseg/numerics/rng.hpp"

namespace geoseg::scenegen {

enum class Shape : std::uint8_t { kSphere = 0, kBox = 1 };

struct ObjectSpec {
  Shape shape = Shape::kSphere;
  geom::Vec3 center;
  double size = 0.4;  // sphere radius / box half-extent
  std::uint16_t class_id = 1;
  std::uint16_t instance_id = 1;
};

struct NoiseSpec {
  double depth_rel = 0.02;  // multiplicative sigma on depth
  double feature = 0.1;     // additive sigma per feature channel
};

struct SceneSpec {
  std::string name;
  std::vector<ObjectSpec> objects;
  std::vector<geom::Camera> cameras;
  int width = 32, height = 32;
  int feature_dim = 32;
  NoiseSpec noise;
  std::uint64_t seed = 0;
};

struct ViewData {
  geom::Camera camera;
  int width = 0, height = 0, feature_dim = 0;
  std::vector<float> features;             // H*W*F, channel-last
  std::vector<float> depth;                // H*W, estimated (noisy) depth
  std::vector<std::uint16_t> instance_ids; // H*W, 0 = background
  std::vector<std::uint16_t> class_ids;    // H*W, 0 = background

  std::size_t pixel_index(int u, int v) const {
    return static_cast<std::size_t>(v) * width + u;
  }
};

struct SceneSample {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<ViewData> views;
  std::vector<ObjectSpec> objects;  // ground-truth object table
};

// Class vocabulary shared across a dataset. Index 0 is the background class.
// Embeddings are unit-norm; the clean class vector doubles as the text
// embedding for a class-name query.
struct ClassInfo {
  std::string name;
  Shape shape = Shape::kSphere;
  std::vector<float> embedding;
};

struct ClassTable {
  std::vector<ClassInfo> classes;

  static ClassTable standard(int feature_dim, std::uint64_t seed);
  int find(const std::string& name) const;
  const std::vector<float>& embedding(std::uint16_t class_id) const {
    return classes[class_id].embedding;
  }
};

constexpr double kBackgroundDepth = 20.0;  // far plane, meters

// Analytic ray casting of the primitive list: nearest hit per pixel gives
// depth (camera z) and instance id; background pixels get the far plane.
// Features are the hit class vector plus Gaussian noise, depth is perturbed
// multiplicatively. Deterministic per (seed, view index).
SceneSample render(const SceneSpec& spec, const ClassTable& classes);

// Canonical GASA disambiguation fixture: two identical-class spheres at the
// given 3D separation plus one distractor box near one of the twins.
SceneSpec twin_scene_spec(double separation, std::uint64_t seed,
                          const NoiseSpec& noise = NoiseSpec{});
SceneSample make_twin_scene(double separation, std::uint64_t seed,
                            const ClassTable& classes, const NoiseSpec& noise = NoiseSpec{});

// Random multi-object scene; roughly twin_fraction of scenes from
// make_dataset use the twin fixture.
SceneSpec random_scene_spec(std::uint64_t seed, const ClassTable& classes, int min_objects = 2,
                            int max_objects = 4);

geom::DepthMap depth_map(const ViewData& view);
geom::PointMap view_pointmap(const ViewData& view);

// Mean-pooled block tokens with the center pixel's world position.
gasa::TokenGridView tokenize(const ViewData& view, int block);
std::vector<gasa::TokenGridView> tokenize_sample(const SceneSample& sample, int block);

// Binary ground-truth mask of one instance in one view, as H x W floats.
template <typename T>
num::Tensor<T> instance_mask(const ViewData& view, std::uint16_t instance_id) {
  num::Tensor<T> m({static_cast<std::size_t>(view.height), static_cast<std::size_t>(view.width)});
  for (std::size_t i = 0; i < view.instance_ids.size(); ++i)
    m[i] = view.instance_ids[i] == instance_id ? T(1) : T(0);
  return m;
}

}  // namespace geoseg::scenegen
