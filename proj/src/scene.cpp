#include "geoseg/scenegen/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geoseg/errors.hpp"

namespace geoseg::scenegen {

ClassTable ClassTable::standard(int feature_dim, std::uint64_t seed) {
  ClassTable t;
  const char* names[] = {"background", "sphere", "box", "ball", "cube", "orb", "crate"};
  const Shape shapes[] = {Shape::kSphere, Shape::kSphere, Shape::kBox, Shape::kSphere,
                          Shape::kBox,    Shape::kSphere, Shape::kBox};
  num::Rng rng(seed ^ 0xc1a55ull);
  for (int c = 0; c < 7; ++c) {
    ClassInfo info;
    info.name = names[c];
    info.shape = shapes[c];
    info.embedding.resize(feature_dim);
    double norm2 = 0;
    for (auto& v : info.embedding) {
      v = static_cast<float>(rng.normal());
      norm2 += double(v) * v;
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
    for (auto& v : info.embedding) v *= inv;
    t.classes.push_back(std::move(info));
  }
  return t;
}

int ClassTable::find(const std::string& name) const {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i].name == name) return static_cast<int>(i);
  return -1;
}

namespace {

// Ray origin + t * dir with dir = R * K^-1 [u v 1]; the parameter t equals
// camera-frame depth because the camera-space direction has z = 1.
struct Ray {
  geom::Vec3 origin;
  geom::Vec3 dir;
};

Ray pixel_ray(const geom::Camera& cam, int u, int v) {
  const geom::Vec3 dir_cam{(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0};
  return {cam.translation, cam.rotation.apply(dir_cam)};
}

std::optional<double> intersect_sphere(const Ray& r, const geom::Vec3& c, double radius) {
  const geom::Vec3 oc = r.origin - c;
  const double a = r.dir.dot(r.dir);
  const double b = 2.0 * r.dir.dot(oc);
  const double cc = oc.dot(oc) - radius * radius;
  const double disc = b * b - 4.0 * a * cc;
  if (disc < 0) return std::nullopt;
  const double sq = std::sqrt(disc);
  double t = (-b - sq) / (2.0 * a);
  if (t <= 1e-6) t = (-b + sq) / (2.0 * a);
  if (t <= 1e-6) return std::nullopt;
  return t;
}

std::optional<double> intersect_box(const Ray& r, const geom::Vec3& c, double half) {
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  const double o[3] = {r.origin.x, r.origin.y, r.origin.z};
  const double d[3] = {r.dir.x, r.dir.y, r.dir.z};
  const double lo[3] = {c.x - half, c.y - half, c.z - half};
  const double hi[3] = {c.x + half, c.y + half, c.z + half};
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-12) {
      if (o[k] < lo[k] || o[k] > hi[k]) return std::nullopt;
      continue;
    }
    double t0 = (lo[k] - o[k]) / d[k];
    double t1 = (hi[k] - o[k]) / d[k];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return std::nullopt;
  }
  const double t = tmin > 1e-6 ? tmin : tmax;
  if (t <= 1e-6) return std::nullopt;
  return t;
}

}  // namespace

SceneSample render(const SceneSpec& spec, const ClassTable& classes) {
  if (spec.objects.empty() || spec.cameras.empty()) {
    throw GenerationError("render: scene '" + spec.name + "' has no objects or no cameras");
  }
  for (const auto& obj : spec.objects) {
    bool visible = false;
    for (const auto& cam : spec.cameras) {
      const geom::Vec3 cam_pt = cam.rotation.apply_transposed(obj.center - cam.translation);
      if (cam_pt.z > 0) visible = true;
    }
    if (!visible) {
      throw GenerationError("render: object instance " + std::to_string(obj.instance_id) +
                            " is behind every camera");
    }
  }

  SceneSample sample;
  sample.name = spec.name;
  sample.seed = spec.seed;
  sample.objects = spec.objects;
  const int F = spec.feature_dim;
  for (std::size_t vi = 0; vi < spec.cameras.size(); ++vi) {
    ViewData view;
    view.camera = spec.cameras[vi];
    view.width = spec.width;
    view.height = spec.height;
    view.feature_dim = F;
    const std::size_t npx = static_cast<std::size_t>(spec.width) * spec.height;
    view.features.resize(npx * F);
    view.depth.resize(npx);
    view.instance_ids.resize(npx);
    view.class_ids.resize(npx);

    num::Rng rng = num::Rng::split(spec.seed, vi);
    for (int v = 0; v < spec.height; ++v) {
      for (int u = 0; u < spec.width; ++u) {
        const Ray ray = pixel_ray(view.camera, u, v);
        double best_t = kBackgroundDepth;
        const ObjectSpec* hit = nullptr;
        for (const auto& obj : spec.objects) {
          const auto t = obj.shape == Shape::kSphere
                             ? intersect_sphere(ray, obj.center, obj.size)
                             : intersect_box(ray, obj.center, obj.size);
          if (t && *t < best_t) {
            best_t = *t;
            hit = &obj;
          }
        }
        const std::size_t i = view.pixel_index(u, v);
        view.instance_ids[i] = hit ? hit->instance_id : 0;
        view.class_ids[i] = hit ? hit->class_id : 0;
        double d = best_t;
        if (spec.noise.depth_rel > 0) d *= 1.0 + rng.normal(0.0, spec.noise.depth_rel);
        view.depth[i] = static_cast<float>(std::max(1e-3, d));
        const auto& emb = classes.embedding(view.class_ids[i]);
        for (int f = 0; f < F; ++f) {
          double val = emb[f];
          if (spec.noise.feature > 0) val += rng.normal(0.0, spec.noise.feature);
          view.features[i * F + f] = static_cast<float>(val);
        }
      }
    }
    sample.views.push_back(std::move(view));
  }
  return sample;
}

namespace {

geom::Camera rig_camera(int index, double fx, double cx, double cy, num::Rng& rng) {
  const double jitter = 0.12;
  const geom::Vec3 base[] = {
      {-0.35, -0.22, -0.15}, {0.35, 0.22, -0.3}, {-0.3, 0.25, 0.0}, {0.3, -0.25, -0.25}};
  const geom::Vec3 pos = base[index % 4] + geom::Vec3{rng.uniform(-jitter, jitter),
                                                      rng.uniform(-jitter, jitter),
                                                      rng.uniform(-jitter, jitter)};
  const double yaw = rng.uniform(-0.06, 0.06);
  const double pitch = rng.uniform(-0.06, 0.06);
  return geom::Camera(fx, fx, cx, cy, geom::Mat3::from_euler(yaw, pitch, 0.0), pos);
}

}  // namespace

SceneSpec twin_scene_spec(double separation, std::uint64_t seed, const NoiseSpec& noise) {
  if (separation <= 0) {
    throw GenerationError("twin scene: separation must be positive, got " +
                          std::to_string(separation));
  }
  SceneSpec spec;
  spec.name = "twin";
  spec.seed = seed;
  spec.noise = noise;
  num::Rng rng = num::Rng::split(seed, 0x7714);

  // Twins separate mostly along the viewing axis with a small lateral
  // offset. Near-parallel lines of sight keep the two surface-centroid
  // shifts almost equal, so the mask-centroid distance tracks the true 3D
  // separation; it also gives the twins distinct depths and x order for
  // spatial qualifiers.
  const double radius = 0.33;
  const double x_off = std::min(0.3 * separation, 0.6);
  const double dz = std::sqrt(separation * separation - 4.0 * x_off * x_off);
  const double z_near = 8.0;
  ObjectSpec a{Shape::kSphere, {-x_off, 0.0, z_near}, radius, 1, 1};
  ObjectSpec b{Shape::kSphere, {x_off, 0.0, z_near + dz}, radius, 1, 2};
  // the distractor sits next to one twin only, so even without world PE the
  // two twins' attention neighborhoods differ
  ObjectSpec distractor{Shape::kBox, {x_off + 1.0, 0.85, z_near + dz - 0.3}, 0.3, 2, 3};
  spec.objects = {a, b, distractor};

  const double fx = 2.0 * spec.width;  // narrow FOV, scene sits 8-11 m out
  const double cx = spec.width / 2.0, cy = spec.height / 2.0;
  for (int v = 0; v < 4; ++v) spec.cameras.push_back(rig_camera(v, fx, cx, cy, rng));
  return spec;
}

SceneSample make_twin_scene(double separation, std::uint64_t seed, const ClassTable& classes,
                            const NoiseSpec& noise) {
  return render(twin_scene_spec(separation, seed, noise), classes);
}

SceneSpec random_scene_spec(std::uint64_t seed, const ClassTable& classes, int min_objects,
                            int max_objects) {
  SceneSpec spec;
  spec.name = "scene";
  spec.seed = seed;
  num::Rng rng = num::Rng::split(seed, 0x5ce2e);

  const int count = min_objects + static_cast<int>(rng.next_u32(
                                      static_cast<std::uint32_t>(max_objects - min_objects + 1)));
  const int num_classes = static_cast<int>(classes.classes.size()) - 1;
  std::uint16_t next_instance = 1;
  for (int i = 0; i < count; ++i) {
    ObjectSpec obj;
    obj.class_id = static_cast<std::uint16_t>(1 + rng.next_u32(num_classes));
    obj.shape = classes.classes[obj.class_id].shape;
    const double z = rng.uniform(3.0, 6.0);
    obj.center = {rng.uniform(-0.38, 0.38) * z, rng.uniform(-0.3, 0.3) * z, z};
    obj.size = rng.uniform(0.3, 0.55);
    obj.instance_id = next_instance++;
    spec.objects.push_back(obj);
  }
  const double fx = spec.width;
  const double cx = spec.width / 2.0, cy = spec.height / 2.0;
  for (int v = 0; v < 4; ++v) spec.cameras.push_back(rig_camera(v, fx, cx, cy, rng));
  return spec;
}

geom::DepthMap depth_map(const ViewData& view) {
  geom::DepthMap dm(view.width, view.height);
  dm.values = view.depth;
  return dm;
}

geom::PointMap view_pointmap(const ViewData& view) {
  return geom::unproject(view.camera, depth_map(view));
}

gasa::TokenGridView tokenize(const ViewData& view, int block) {
  gasa::TokenGridView grid;
  grid.image_width = view.width;
  grid.image_height = view.height;
  grid.block = block;
  const int gw = (view.width + block - 1) / block;
  const int gh = (view.height + block - 1) / block;
  const int F = view.feature_dim;
  const std::size_t n = static_cast<std::size_t>(gw) * gh;
  grid.features = num::Tensor<float>({n, static_cast<std::size_t>(F)});
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      const std::size_t t = static_cast<std::size_t>(gy) * gw + gx;
      const int x0 = gx * block, y0 = gy * block;
      const int w = std::min(block, view.width - x0);
      const int h = std::min(block, view.height - y0);
      grid.blocks.push_back({x0, y0, w, h});
      for (int yy = y0; yy < y0 + h; ++yy)
        for (int xx = x0; xx < x0 + w; ++xx) {
          const std::size_t px = view.pixel_index(xx, yy);
          for (int f = 0; f < F; ++f) grid.features.at(t, f) += view.features[px * F + f];
        }
      const float inv = 1.0f / static_cast<float>(w * h);
      for (int f = 0; f < F; ++f) grid.features.at(t, f) *= inv;

      const int cu = std::min(x0 + block / 2, view.width - 1);
      const int cv = std::min(y0 + block / 2, view.height - 1);
      const float d = view.depth[view.pixel_index(cu, cv)];
      if (d > 0.f) {
        grid.positions.push_back(view.camera.unproject_pixel(cu, cv, d));
        grid.valid.push_back(1);
      } else {
        grid.positions.push_back({0, 0, 0});
        grid.valid.push_back(0);
      }
    }
  }
  return grid;
}

std::vector<gasa::TokenGridView> tokenize_sample(const SceneSample& sample, int block) {
  std::vector<gasa::TokenGridView> grids;
  for (const auto& view : sample.views) grids.push_back(tokenize(view, block));
  return grids;
}

}  // namespace geoseg::scenegen
