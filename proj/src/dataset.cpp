#include "geoseg/scenegen/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "geoseg/crc32.hpp"
#include "geoseg/errors.hpp"

namespace geoseg::scenegen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kDatasetVersion = 1;

template <typename T>
void write_blob(const fs::path& path, const std::vector<T>& data, json& files) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("dataset: cannot write '" + path.string() + "'");
  const std::size_t bytes = data.size() * sizeof(T);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(bytes));
  files[path.filename().string()] = {{"bytes", bytes},
                                     {"crc32", geoseg::crc32(data.data(), bytes)}};
}

template <typename T>
std::vector<T> read_blob(const fs::path& path, const json& entry) {
  const auto want_bytes = entry.at("bytes").get<std::size_t>();
  const auto want_crc = entry.at("crc32").get<std::uint32_t>();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetTruncatedError("dataset: missing file '" + path.string() + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() != want_bytes) {
    throw DatasetTruncatedError("dataset: file '" + path.string() + "' has " +
                                std::to_string(raw.size()) + " bytes, manifest says " +
                                std::to_string(want_bytes));
  }
  if (geoseg::crc32(raw.data(), raw.size()) != want_crc) {
    throw DatasetChecksumError("dataset: checksum mismatch in '" + path.string() + "'");
  }
  std::vector<T> data(raw.size() / sizeof(T));
  std::memcpy(data.data(), raw.data(), raw.size());
  return data;
}

json camera_json(const geom::Camera& c) {
  return {{"fx", c.fx},
          {"fy", c.fy},
          {"cx", c.cx},
          {"cy", c.cy},
          {"rotation", c.rotation.m},
          {"translation", {c.translation.x, c.translation.y, c.translation.z}}};
}

geom::Camera camera_from_json(const json& j) {
  geom::Mat3 r;
  for (int i = 0; i < 9; ++i) r.m[i] = j.at("rotation").at(i).get<double>();
  const auto& t = j.at("translation");
  return geom::Camera(j.at("fx").get<double>(), j.at("fy").get<double>(),
                      j.at("cx").get<double>(), j.at("cy").get<double>(), r,
                      {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()});
}

json object_json(const ObjectSpec& o) {
  return {{"shape", o.shape == Shape::kSphere ? "sphere" : "box"},
          {"center", {o.center.x, o.center.y, o.center.z}},
          {"size", o.size},
          {"class_id", o.class_id},
          {"instance_id", o.instance_id}};
}

ObjectSpec object_from_json(const json& j) {
  ObjectSpec o;
  o.shape = j.at("shape").get<std::string>() == "sphere" ? Shape::kSphere : Shape::kBox;
  const auto& c = j.at("center");
  o.center = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
  o.size = j.at("size").get<double>();
  o.class_id = j.at("class_id").get<std::uint16_t>();
  o.instance_id = j.at("instance_id").get<std::uint16_t>();
  return o;
}

}  // namespace

Dataset make_dataset(const DatasetSpec& spec) {
  Dataset ds;
  ds.seed = spec.seed;
  ds.feature_dim = spec.feature_dim;
  ds.classes = ClassTable::standard(spec.feature_dim, spec.seed);
  long twins_emitted = 0;
  for (int i = 0; i < spec.num_scenes; ++i) {
    const std::uint64_t scene_seed = num::Rng::split(spec.seed, 1000 + i).next_u64();
    const bool twin =
        static_cast<long>((i + 1) * spec.twin_fraction) > twins_emitted;
    SceneSpec sc;
    if (twin) {
      ++twins_emitted;
      num::Rng r = num::Rng::split(scene_seed, 7);
      sc = twin_scene_spec(r.uniform(1.2, 3.0), scene_seed, spec.noise);
    } else {
      sc = random_scene_spec(scene_seed, ds.classes);
      sc.noise = spec.noise;
    }
    sc.feature_dim = spec.feature_dim;
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04d", i);
    sc.name = name;
    ds.scenes.push_back(render(sc, ds.classes));
    ds.width = sc.width;
    ds.height = sc.height;
    ds.views = static_cast<int>(sc.cameras.size());
  }
  return ds;
}

void write_dataset(const std::string& dir, const Dataset& dataset) {
  fs::create_directories(fs::path(dir) / "scenes");
  json manifest;
  manifest["format"] = "geoseg-dataset";
  manifest["version"] = kDatasetVersion;
  manifest["width"] = dataset.width;
  manifest["height"] = dataset.height;
  manifest["views"] = dataset.views;
  manifest["feature_dim"] = dataset.feature_dim;
  manifest["seed"] = dataset.seed;
  manifest["classes"] = json::array();
  for (const auto& c : dataset.classes.classes) {
    manifest["classes"].push_back({{"name", c.name},
                                   {"shape", c.shape == Shape::kSphere ? "sphere" : "box"},
                                   {"embedding", c.embedding}});
  }
  manifest["scenes"] = json::array();
  for (const auto& scene : dataset.scenes) {
    const fs::path scene_dir = fs::path(dir) / "scenes" / scene.name;
    fs::create_directories(scene_dir);
    std::vector<float> features, depth;
    std::vector<std::uint16_t> instances, class_ids;
    for (const auto& view : scene.views) {
      features.insert(features.end(), view.features.begin(), view.features.end());
      depth.insert(depth.end(), view.depth.begin(), view.depth.end());
      instances.insert(instances.end(), view.instance_ids.begin(), view.instance_ids.end());
      class_ids.insert(class_ids.end(), view.class_ids.begin(), view.class_ids.end());
    }
    json files;
    write_blob(scene_dir / "features.bin", features, files);
    write_blob(scene_dir / "depth.bin", depth, files);
    write_blob(scene_dir / "instance.bin", instances, files);
    write_blob(scene_dir / "class.bin", class_ids, files);
    json js;
    js["name"] = scene.name;
    js["seed"] = scene.seed;
    js["objects"] = json::array();
    for (const auto& o : scene.objects) js["objects"].push_back(object_json(o));
    js["cameras"] = json::array();
    for (const auto& v : scene.views) js["cameras"].push_back(camera_json(v.camera));
    js["files"] = files;
    manifest["scenes"].push_back(std::move(js));
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw Error("dataset: cannot write manifest in '" + dir + "'");
  out << manifest.dump(1) << "\n";
}

Dataset read_dataset(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DatasetTruncatedError("dataset: missing manifest '" + manifest_path.string() + "'");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DatasetTruncatedError("dataset: unparseable manifest '" + manifest_path.string() +
                                "': " + e.what());
  }
  if (manifest.value("format", "") != "geoseg-dataset" ||
      manifest.value("version", -1) != kDatasetVersion) {
    throw DatasetVersionError("dataset: '" + manifest_path.string() +
                              "' has unsupported format/version (want geoseg-dataset v" +
                              std::to_string(kDatasetVersion) + ")");
  }
  Dataset ds;
  ds.width = manifest.at("width").get<int>();
  ds.height = manifest.at("height").get<int>();
  ds.views = manifest.at("views").get<int>();
  ds.feature_dim = manifest.at("feature_dim").get<int>();
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  for (const auto& cj : manifest.at("classes")) {
    ClassInfo c;
    c.name = cj.at("name").get<std::string>();
    c.shape = cj.at("shape").get<std::string>() == "sphere" ? Shape::kSphere : Shape::kBox;
    c.embedding = cj.at("embedding").get<std::vector<float>>();
    ds.classes.classes.push_back(std::move(c));
  }
  const std::size_t npx = static_cast<std::size_t>(ds.width) * ds.height;
  for (const auto& sj : manifest.at("scenes")) {
    SceneSample scene;
    scene.name = sj.at("name").get<std::string>();
    scene.seed = sj.at("seed").get<std::uint64_t>();
    for (const auto& oj : sj.at("objects")) scene.objects.push_back(object_from_json(oj));
    const fs::path scene_dir = fs::path(dir) / "scenes" / scene.name;
    const auto& files = sj.at("files");
    auto features = read_blob<float>(scene_dir / "features.bin", files.at("features.bin"));
    auto depth = read_blob<float>(scene_dir / "depth.bin", files.at("depth.bin"));
    auto instances = read_blob<std::uint16_t>(scene_dir / "instance.bin", files.at("instance.bin"));
    auto class_ids = read_blob<std::uint16_t>(scene_dir / "class.bin", files.at("class.bin"));
    const auto& cams = sj.at("cameras");
    const std::size_t nviews = cams.size();
    if (depth.size() != npx * nviews || instances.size() != npx * nviews ||
        features.size() != npx * nviews * ds.feature_dim) {
      throw DatasetTruncatedError("dataset: scene '" + scene.name +
                                  "' payload sizes do not match manifest dimensions");
    }
    for (std::size_t v = 0; v < nviews; ++v) {
      ViewData view;
      view.camera = camera_from_json(cams.at(v));
      view.width = ds.width;
      view.height = ds.height;
      view.feature_dim = ds.feature_dim;
      const std::size_t f0 = v * npx * ds.feature_dim;
      view.features.assign(features.begin() + f0,
                           features.begin() + f0 + npx * ds.feature_dim);
      view.depth.assign(depth.begin() + v * npx, depth.begin() + (v + 1) * npx);
      view.instance_ids.assign(instances.begin() + v * npx, instances.begin() + (v + 1) * npx);
      view.class_ids.assign(class_ids.begin() + v * npx, class_ids.begin() + (v + 1) * npx);
      scene.views.push_back(std::move(view));
    }
    ds.scenes.push_back(std::move(scene));
  }
  return ds;
}

}  // namespace geoseg::scenegen
