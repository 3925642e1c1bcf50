#pragma once

// Dataset ingest: manifest loading and validation, the on-disk formats
// (.xyz clouds, .pose.json, .boxes.json, .tau.json), scene loading, and
// aggregation of world-frame traversal stores.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tda/geometry.hpp"
#include "tda/traversal_store.hpp"

namespace tda {

struct ScanRecord {
  std::string cloud_path;  // relative to dataset root
  std::string pose_path;
};

struct TraversalRecord {
  std::string id;
  std::vector<ScanRecord> scans;
};

struct LocationRecord {
  std::string id;
  std::vector<TraversalRecord> traversals;
};

struct SceneRecord {
  std::string id;
  std::string location_id;
  std::string traversal_id;
  std::size_t scan_index = 0;
  std::optional<std::string> labels_path;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<LocationRecord> locations;  // lexicographic by id
  std::vector<SceneRecord> scenes;        // lexicographic by id

  const LocationRecord* find_location(const std::string& id) const {
    for (const auto& l : locations)
      if (l.id == id) return &l;
    return nullptr;
  }
  const SceneRecord* find_scene(const std::string& id) const {
    for (const auto& s : scenes)
      if (s.id == id) return &s;
    return nullptr;
  }
};

namespace detail {

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace detail

// --- cloud files (.xyz: one "x y z" ASCII line per point, LF endings) ------

inline PointCloud read_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cloud file " + path.string());
  PointCloud cloud;
  cloud.frame = Frame::sensor;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const char* s = line.c_str();
    char* end = nullptr;
    Point3 p;
    p.x = std::strtod(s, &end);
    if (end == s) throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad point record");
    s = end;
    p.y = std::strtod(s, &end);
    if (end == s) throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad point record");
    s = end;
    p.z = std::strtod(s, &end);
    if (end == s) throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad point record");
    if (!is_finite(p))
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": non-finite coordinate");
    cloud.points.push_back(p);
  }
  return cloud;
}

inline void write_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  std::string buf;
  buf.reserve(cloud.points.size() * 40);
  char line[128];
  for (const auto& p : cloud.points) {
    std::snprintf(line, sizeof(line), "%.6f %.6f %.6f\n", p.x, p.y, p.z);
    buf += line;
  }
  detail::write_text_file(path, buf);
}

// --- pose files (.pose.json) ------------------------------------------------

inline Pose6DoF read_pose(const std::filesystem::path& path) {
  const nlohmann::json j = detail::parse_json_file(path);
  Pose6DoF pose;
  try {
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) pose.rotation[i][k] = j.at("rotation").at(i).at(k).get<double>();
    for (int i = 0; i < 3; ++i) pose.translation[i] = j.at("translation").at(i).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed pose file " + path.string() + ": " + e.what());
  }
  validate_pose(pose);
  return pose;
}

inline void write_pose(const std::filesystem::path& path, const Pose6DoF& pose) {
  nlohmann::json j;
  j["rotation"] = {pose.rotation[0], pose.rotation[1], pose.rotation[2]};
  j["translation"] = pose.translation;
  detail::write_text_file(path, j.dump());
}

// --- box files (.boxes.json) ------------------------------------------------

inline std::vector<LabeledBox> read_boxes(const std::filesystem::path& path,
                                          BoxProvenance provenance) {
  const nlohmann::json j = detail::parse_json_file(path);
  if (!j.is_array()) throw IoError("box file " + path.string() + " is not an array");
  std::vector<LabeledBox> boxes;
  boxes.reserve(j.size());
  for (const auto& e : j) {
    try {
      const Point3 center{e.at("center").at(0).get<double>(), e.at("center").at(1).get<double>(),
                          e.at("center").at(2).get<double>()};
      boxes.push_back(make_box(center, e.at("size").at(0).get<double>(),
                               e.at("size").at(1).get<double>(), e.at("size").at(2).get<double>(),
                               e.at("yaw").get<double>(),
                               class_from_name(e.at("class").get<std::string>()),
                               e.at("score").get<double>(), provenance));
    } catch (const nlohmann::json::exception& ex) {
      throw IoError("malformed box record in " + path.string() + ": " + ex.what());
    }
  }
  return boxes;
}

inline void write_boxes(const std::filesystem::path& path, const std::vector<LabeledBox>& boxes) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& b : boxes) {
    j.push_back({{"center", {b.center.x, b.center.y, b.center.z}},
                 {"size", {b.length, b.width, b.height}},
                 {"yaw", b.yaw},
                 {"class", class_name(b.cls)},
                 {"score", b.confidence}});
  }
  detail::write_text_file(path, j.dump());
}

// --- persistence sidecars (.tau.json) ----------------------------------------

inline std::vector<double> read_tau(const std::filesystem::path& path) {
  const nlohmann::json j = detail::parse_json_file(path);
  if (!j.is_array()) throw IoError("tau file " + path.string() + " is not an array");
  std::vector<double> tau;
  tau.reserve(j.size());
  for (const auto& v : j) tau.push_back(v.get<double>());
  return tau;
}

inline void write_tau(const std::filesystem::path& path, const std::vector<double>& tau) {
  detail::write_text_file(path, nlohmann::json(tau).dump());
}

// --- manifest ----------------------------------------------------------------

inline DatasetManifest load_manifest(const std::filesystem::path& root) {
  const auto manifest_path = root / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw IoError("manifest.json not found");
  const nlohmann::json j = detail::parse_json_file(manifest_path);

  DatasetManifest manifest;
  manifest.root = root;
  try {
    for (const auto& jl : j.at("locations")) {
      LocationRecord loc;
      loc.id = jl.at("id").get<std::string>();
      for (const auto& jt : jl.at("traversals")) {
        TraversalRecord trav;
        trav.id = jt.at("id").get<std::string>();
        for (const auto& js : jt.at("scans")) {
          trav.scans.push_back({js.at("cloud").get<std::string>(), js.at("pose").get<std::string>()});
        }
        loc.traversals.push_back(std::move(trav));
      }
      manifest.locations.push_back(std::move(loc));
    }
    for (const auto& js : j.at("scenes")) {
      SceneRecord scene;
      scene.id = js.at("id").get<std::string>();
      scene.location_id = js.at("location").get<std::string>();
      scene.traversal_id = js.at("traversal").get<std::string>();
      scene.scan_index = js.at("scan_index").get<std::size_t>();
      if (js.contains("labels")) scene.labels_path = js.at("labels").get<std::string>();
      manifest.scenes.push_back(std::move(scene));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest record: " + std::string(e.what()));
  }

  // Deterministic ordering regardless of file order.
  std::sort(manifest.locations.begin(), manifest.locations.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (auto& loc : manifest.locations)
    std::sort(loc.traversals.begin(), loc.traversals.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(manifest.scenes.begin(), manifest.scenes.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });

  // Referenced files must exist.
  for (const auto& loc : manifest.locations) {
    for (const auto& trav : loc.traversals) {
      for (const auto& scan : trav.scans) {
        for (const std::string* rel : {&scan.cloud_path, &scan.pose_path}) {
          if (!std::filesystem::exists(root / *rel))
            throw IoError("manifest references missing file " + (root / *rel).string());
        }
      }
    }
  }
  for (const auto& scene : manifest.scenes) {
    const LocationRecord* loc = manifest.find_location(scene.location_id);
    if (loc == nullptr)
      throw ValidationError("scene " + scene.id + " references unknown location " +
                            scene.location_id);
    if (loc->traversals.size() < 2)
      throw ValidationError("location " + scene.location_id +
                            " has fewer than 2 traversals but is referenced by scene " +
                            scene.id);
    const auto trav = std::find_if(loc->traversals.begin(), loc->traversals.end(),
                                   [&](const auto& t) { return t.id == scene.traversal_id; });
    if (trav == loc->traversals.end())
      throw ValidationError("scene " + scene.id + " references unknown traversal " +
                            scene.traversal_id);
    if (scene.scan_index >= trav->scans.size())
      throw ValidationError("scene " + scene.id + " scan_index out of range");
    if (scene.labels_path && !std::filesystem::exists(root / *scene.labels_path))
      throw IoError("manifest references missing file " + (root / *scene.labels_path).string());
  }
  return manifest;
}

inline void write_manifest(const std::filesystem::path& root, const DatasetManifest& manifest) {
  nlohmann::json j;
  j["locations"] = nlohmann::json::array();
  for (const auto& loc : manifest.locations) {
    nlohmann::json jl;
    jl["id"] = loc.id;
    jl["traversals"] = nlohmann::json::array();
    for (const auto& trav : loc.traversals) {
      nlohmann::json jt;
      jt["id"] = trav.id;
      jt["scans"] = nlohmann::json::array();
      for (const auto& scan : trav.scans)
        jt["scans"].push_back({{"cloud", scan.cloud_path}, {"pose", scan.pose_path}});
      jl["traversals"].push_back(std::move(jt));
    }
    j["locations"].push_back(std::move(jl));
  }
  j["scenes"] = nlohmann::json::array();
  for (const auto& scene : manifest.scenes) {
    nlohmann::json js = {{"id", scene.id},
                         {"location", scene.location_id},
                         {"traversal", scene.traversal_id},
                         {"scan_index", scene.scan_index}};
    if (scene.labels_path) js["labels"] = *scene.labels_path;
    j["scenes"].push_back(std::move(js));
  }
  detail::write_text_file(root / "manifest.json", j.dump(2));
}

// --- traversal stores and scenes ----------------------------------------------

// Aggregates the first min(available, max_traversals) traversals of a location
// into world-frame stores, in manifest order.
inline std::vector<TraversalStore::Entry> build_traversal_store(
    const DatasetManifest& manifest, const std::string& location_id,
    std::size_t max_traversals) {
  const LocationRecord* loc = manifest.find_location(location_id);
  if (loc == nullptr) throw ValidationError("unknown location " + location_id);
  if (loc->traversals.size() < 2)
    throw ValidationError("location " + location_id + " has fewer than 2 traversals");
  if (max_traversals < 1) throw ValidationError("max_traversals must be >= 1");

  std::vector<TraversalStore::Entry> entries;
  const std::size_t used = std::min<std::size_t>(loc->traversals.size(), max_traversals);
  for (std::size_t t = 0; t < used; ++t) {
    const TraversalRecord& trav = loc->traversals[t];
    TraversalStore::Entry entry;
    entry.location_id = location_id;
    entry.traversal_id = trav.id;
    entry.cloud.frame = Frame::world;
    for (const auto& scan : trav.scans) {
      const PointCloud sensor_cloud = read_xyz(manifest.root / scan.cloud_path);
      const Pose6DoF pose = read_pose(manifest.root / scan.pose_path);
      const PointCloud world = transform_cloud(sensor_cloud, pose);
      entry.cloud.points.insert(entry.cloud.points.end(), world.points.begin(),
                                world.points.end());
    }
    if (entry.cloud.points.empty())
      throw ValidationError("aggregated cloud for location " + location_id + " traversal " +
                            trav.id + " is empty");
    entries.push_back(std::move(entry));
  }
  return entries;
}

inline TraversalStore build_store_for_locations(const DatasetManifest& manifest,
                                                const std::vector<std::string>& location_ids,
                                                std::size_t max_traversals) {
  TraversalStore store;
  for (const auto& id : location_ids) {
    auto entries = build_traversal_store(manifest, id, max_traversals);
    for (auto& e : entries) store.entries.push_back(std::move(e));
  }
  return store;
}

inline Scene load_scene(const DatasetManifest& manifest, const std::string& scene_id) {
  const SceneRecord* rec = manifest.find_scene(scene_id);
  if (rec == nullptr) throw ValidationError("unknown scene " + scene_id);
  const LocationRecord* loc = manifest.find_location(rec->location_id);
  const auto trav = std::find_if(loc->traversals.begin(), loc->traversals.end(),
                                 [&](const auto& t) { return t.id == rec->traversal_id; });
  const ScanRecord& scan = trav->scans[rec->scan_index];

  Scene scene;
  scene.scene_id = rec->id;
  scene.location_id = rec->location_id;
  scene.traversal_id = rec->traversal_id;
  scene.cloud = read_xyz(manifest.root / scan.cloud_path);
  scene.sensor_pose = read_pose(manifest.root / scan.pose_path);
  if (rec->labels_path)
    scene.gt_boxes = read_boxes(manifest.root / *rec->labels_path, BoxProvenance::ground_truth);
  return scene;
}

inline std::vector<Scene> load_all_scenes(const DatasetManifest& manifest) {
  std::vector<Scene> scenes;
  scenes.reserve(manifest.scenes.size());
  for (const auto& rec : manifest.scenes) scenes.push_back(load_scene(manifest, rec.id));
  return scenes;
}

// Scan file path for a scene (for sidecar discovery next to the cloud file).
inline std::filesystem::path scene_cloud_path(const DatasetManifest& manifest,
                                              const SceneRecord& rec) {
  const LocationRecord* loc = manifest.find_location(rec.location_id);
  const auto trav = std::find_if(loc->traversals.begin(), loc->traversals.end(),
                                 [&](const auto& t) { return t.id == rec.traversal_id; });
  return manifest.root / trav->scans[rec.scan_index].cloud_path;
}

}  // namespace tda
