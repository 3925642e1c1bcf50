#pragma once

// Deterministic synthetic multi-traversal world generator. Produces datasets
// in the ingest format (clouds, poses, labels, manifest) plus ground-truth
// static/dynamic masks, with every property the pipeline tests rely on:
// static structures fixed across traversals, dynamic objects resampled per
// traversal with guaranteed clearances, and surface sampling density that is
// equal across traversals of a location.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tda/dataset.hpp"
#include "tda/geometry.hpp"
#include "tda/random.hpp"

namespace tda {

struct StructureSpec {
  Point3 center;  // base center; z is the bottom of the slab
  double length = 1.0;
  double width = 1.0;
  double height = 1.0;
  double yaw = 0.0;
  double density_scale = 1.0;
};

struct ClassProfile {
  double frequency = 1.0;  // expected objects per location (present in every traversal)
  std::array<double, 3> size_mean = {4.2, 1.8, 1.5};   // l, w, h
  std::array<double, 3> size_sigma = {0.2, 0.1, 0.08};
  double density_scale = 1.0;  // surface sampling multiplier
};

struct WorldSpec {
  std::uint64_t seed = 1;
  double extent = 20.0;               // half-size of the square area, meters
  double ground_noise_sigma = 0.02;   // terrain roughness
  double sensor_noise_sigma = 0.01;   // per-axis measurement noise
  std::vector<StructureSpec> structures;                  // local coordinates
  std::vector<std::vector<std::array<double, 2>>> lanes;  // 2D polylines, local
  std::array<ClassProfile, kNumClasses> classes = {
      ClassProfile{2.0, {4.2, 1.8, 1.5}, {0.25, 0.10, 0.08}, 1.0},
      ClassProfile{1.0, {0.7, 0.7, 1.75}, {0.05, 0.05, 0.08}, 0.75},
      ClassProfile{1.0, {1.8, 0.6, 1.7}, {0.10, 0.05, 0.08}, 0.55}};
  int locations = 1;
  double location_spacing = 200.0;    // world-frame offset between locations
  int traversals = 5;
  int scans_per_traversal = 2;
  std::vector<std::array<double, 2>> sensor_path = {{-12.0, 0.0}, {12.0, 0.0}};
  double sensor_height = 1.8;
  double density_at_10m = 6.0;        // points/m^2 on surfaces at 10 m, 1/range^2
  double ground_density_scale = 0.15; // ground density factor at 10 m, 1/range^3
  double min_sample_range = 6.0;      // ranges below this sample at this range's density
  double object_base_height = 0.5;    // clearance under dynamic objects
  bool write_labels = true;
};

struct DomainShiftSpec {
  double car_size_scale = 1.15;  // applied to mean car length and width
  std::array<double, kNumClasses> frequency_multipliers = {1.0, 1.0, 1.0};
};

// Ground-truth provenance of each sampled point.
struct PointMask {
  enum class Kind { ground, static_structure, dynamic };
  std::vector<Kind> kinds;
  std::vector<int> object_ids;  // location-scoped object index; -1 if not dynamic
};

// --- JSON bindings (CLI config files) ---------------------------------------

inline void to_json(nlohmann::json& j, const StructureSpec& s) {
  j = {{"center", {s.center.x, s.center.y, s.center.z}},
       {"size", {s.length, s.width, s.height}},
       {"yaw", s.yaw},
       {"density_scale", s.density_scale}};
}

inline void from_json(const nlohmann::json& j, StructureSpec& s) {
  s.center = {j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>(),
              j.at("center").at(2).get<double>()};
  s.length = j.at("size").at(0).get<double>();
  s.width = j.at("size").at(1).get<double>();
  s.height = j.at("size").at(2).get<double>();
  s.yaw = j.at("yaw").get<double>();
  s.density_scale = j.value("density_scale", 1.0);
}

inline void to_json(nlohmann::json& j, const ClassProfile& c) {
  j = {{"frequency", c.frequency},
       {"size_mean", c.size_mean},
       {"size_sigma", c.size_sigma},
       {"density_scale", c.density_scale}};
}

inline void from_json(const nlohmann::json& j, ClassProfile& c) {
  c.frequency = j.at("frequency").get<double>();
  c.size_mean = j.at("size_mean").get<std::array<double, 3>>();
  c.size_sigma = j.at("size_sigma").get<std::array<double, 3>>();
  c.density_scale = j.value("density_scale", 1.0);
}

inline void to_json(nlohmann::json& j, const WorldSpec& w) {
  j = {{"seed", w.seed},
       {"extent", w.extent},
       {"ground_noise_sigma", w.ground_noise_sigma},
       {"sensor_noise_sigma", w.sensor_noise_sigma},
       {"structures", w.structures},
       {"lanes", w.lanes},
       {"classes", {w.classes[0], w.classes[1], w.classes[2]}},
       {"locations", w.locations},
       {"location_spacing", w.location_spacing},
       {"traversals", w.traversals},
       {"scans_per_traversal", w.scans_per_traversal},
       {"sensor_path", w.sensor_path},
       {"sensor_height", w.sensor_height},
       {"density_at_10m", w.density_at_10m},
       {"ground_density_scale", w.ground_density_scale},
       {"min_sample_range", w.min_sample_range},
       {"object_base_height", w.object_base_height},
       {"write_labels", w.write_labels}};
}

inline void from_json(const nlohmann::json& j, WorldSpec& w) {
  WorldSpec defaults;
  w.seed = j.value("seed", defaults.seed);
  w.extent = j.value("extent", defaults.extent);
  w.ground_noise_sigma = j.value("ground_noise_sigma", defaults.ground_noise_sigma);
  w.sensor_noise_sigma = j.value("sensor_noise_sigma", defaults.sensor_noise_sigma);
  if (j.contains("structures"))
    w.structures = j.at("structures").get<std::vector<StructureSpec>>();
  if (j.contains("lanes"))
    w.lanes = j.at("lanes").get<std::vector<std::vector<std::array<double, 2>>>>();
  if (j.contains("classes")) {
    const auto& jc = j.at("classes");
    for (int c = 0; c < kNumClasses; ++c) w.classes[c] = jc.at(c).get<ClassProfile>();
  }
  w.locations = j.value("locations", defaults.locations);
  w.location_spacing = j.value("location_spacing", defaults.location_spacing);
  w.traversals = j.value("traversals", defaults.traversals);
  w.scans_per_traversal = j.value("scans_per_traversal", defaults.scans_per_traversal);
  if (j.contains("sensor_path"))
    w.sensor_path = j.at("sensor_path").get<std::vector<std::array<double, 2>>>();
  w.sensor_height = j.value("sensor_height", defaults.sensor_height);
  w.density_at_10m = j.value("density_at_10m", defaults.density_at_10m);
  w.ground_density_scale = j.value("ground_density_scale", defaults.ground_density_scale);
  w.min_sample_range = j.value("min_sample_range", defaults.min_sample_range);
  w.object_base_height = j.value("object_base_height", defaults.object_base_height);
  w.write_labels = j.value("write_labels", defaults.write_labels);
}

inline void to_json(nlohmann::json& j, const DomainShiftSpec& s) {
  j = {{"car_size_scale", s.car_size_scale},
       {"frequency_multipliers", s.frequency_multipliers}};
}

inline void from_json(const nlohmann::json& j, DomainShiftSpec& s) {
  DomainShiftSpec defaults;
  s.car_size_scale = j.value("car_size_scale", defaults.car_size_scale);
  if (j.contains("frequency_multipliers"))
    s.frequency_multipliers = j.at("frequency_multipliers").get<std::array<double, 3>>();
}

namespace synth_detail {

struct Placement {
  int object_id;  // location-scoped
  ClassId cls;
  std::array<double, 3> size;  // l, w, h
  double x, y, yaw;            // local coordinates
  double base_z;
};

inline double bev_circle_radius(double length, double width) {
  return 0.5 * std::sqrt(length * length + width * width);
}

// Conservative footprint separation: center distance minus both bounding circles.
inline double footprint_gap(double ax, double ay, double ar, double bx, double by, double br) {
  const double d = std::hypot(ax - bx, ay - by);
  return d - ar - br;
}

struct Polyline {
  std::vector<std::array<double, 2>> pts;
  std::vector<double> cumulative;  // arclength prefix
  double total = 0.0;

  explicit Polyline(const std::vector<std::array<double, 2>>& p) : pts(p) {
    cumulative.push_back(0.0);
    for (std::size_t i = 1; i < pts.size(); ++i) {
      total += std::hypot(pts[i][0] - pts[i - 1][0], pts[i][1] - pts[i - 1][1]);
      cumulative.push_back(total);
    }
  }

  // Position and direction at arclength s.
  void at(double s, double& x, double& y, double& heading) const {
    s = std::clamp(s, 0.0, total);
    std::size_t seg = 1;
    while (seg + 1 < pts.size() && cumulative[seg] < s) ++seg;
    const double seg_len = cumulative[seg] - cumulative[seg - 1];
    const double t = seg_len > 0 ? (s - cumulative[seg - 1]) / seg_len : 0.0;
    x = pts[seg - 1][0] + t * (pts[seg][0] - pts[seg - 1][0]);
    y = pts[seg - 1][1] + t * (pts[seg][1] - pts[seg - 1][1]);
    heading = std::atan2(pts[seg][1] - pts[seg - 1][1], pts[seg][0] - pts[seg - 1][0]);
  }
};

// Clearance rules, meters of footprint gap:
//   same traversal: >= 1.0 (also keeps clusters from merging),
//   across traversals: >= 0.5 (> scoring radius + noise bound),
//   against structures: >= 0.5,
//   same object across traversals: centers >= 2.0 apart.
inline constexpr double kSameTraversalGap = 1.0;
inline constexpr double kCrossTraversalGap = 0.5;
inline constexpr double kStructureGap = 0.5;
inline constexpr double kSameObjectDisplacement = 2.0;

inline bool placement_ok(const Placement& cand, int traversal,
                         const std::vector<std::vector<Placement>>& per_traversal,
                         const WorldSpec& world) {
  const double cr = bev_circle_radius(cand.size[0], cand.size[1]);
  for (const auto& s : world.structures) {
    const double sr = bev_circle_radius(s.length, s.width);
    if (footprint_gap(cand.x, cand.y, cr, s.center.x, s.center.y, sr) < kStructureGap)
      return false;
  }
  for (int t = 0; t < static_cast<int>(per_traversal.size()); ++t) {
    for (const auto& other : per_traversal[t]) {
      const double orr = bev_circle_radius(other.size[0], other.size[1]);
      const double gap = footprint_gap(cand.x, cand.y, cr, other.x, other.y, orr);
      if (t == traversal) {
        if (gap < kSameTraversalGap) return false;
      } else {
        if (gap < kCrossTraversalGap) return false;
        if (other.object_id == cand.object_id &&
            std::hypot(cand.x - other.x, cand.y - other.y) < kSameObjectDisplacement)
          return false;
      }
    }
  }
  return true;
}

inline double clamped_range(double range, double min_range) {
  return std::max(range, min_range);
}

// Samples n points uniformly on an axis-aligned rectangle patch in the plane
// given by a fixed coordinate, then rotates by yaw about (cx, cy) and offsets.
struct SurfaceSampler {
  PointCloud* cloud;
  PointMask* mask;
  Rng* rng;
  double sensor_noise;
  PointMask::Kind kind;
  int object_id;

  void emit(double x, double y, double z) {
    cloud->points.push_back({x + rng->normal_clipped(sensor_noise),
                             y + rng->normal_clipped(sensor_noise),
                             z + rng->normal_clipped(sensor_noise)});
    mask->kinds.push_back(kind);
    mask->object_ids.push_back(object_id);
  }
};

// An upright box surface (4 sides + top), sampled with expected density
// points/m^2. Used for both structures and dynamic objects.
inline void sample_box_surfaces(SurfaceSampler& out, double cx, double cy, double base_z,
                                double length, double width, double height, double yaw,
                                double sensor_x, double sensor_y, double density_at_10m,
                                double min_range, double density_scale) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  struct Face {
    double u_len;    // horizontal extent along the face
    double axis_u[2];
    double origin[2];
    bool top;
  };
  const double hl = 0.5 * length, hw = 0.5 * width;
  // Side faces: four rectangles (u along the edge, v vertical).
  const Face faces[4] = {
      {length, {c, s}, {cx - c * hl + s * hw, cy - s * hl - c * hw}, false},   // -w side
      {length, {c, s}, {cx - c * hl - s * hw, cy - s * hl + c * hw}, false},   // +w side
      {width, {-s, c}, {cx - c * hl + s * hw, cy - s * hl - c * hw}, false},   // -l side
      {width, {-s, c}, {cx + c * hl + s * hw, cy + s * hl - c * hw}, false},   // +l side
  };
  for (const auto& f : faces) {
    const double mid_x = f.origin[0] + 0.5 * f.u_len * f.axis_u[0];
    const double mid_y = f.origin[1] + 0.5 * f.u_len * f.axis_u[1];
    const double range = clamped_range(std::hypot(mid_x - sensor_x, mid_y - sensor_y), min_range);
    const double rho = density_at_10m * density_scale * (10.0 / range) * (10.0 / range);
    const int n = out.rng->poisson(rho * f.u_len * height);
    for (int i = 0; i < n; ++i) {
      const double u = out.rng->uniform(0.0, f.u_len);
      const double v = out.rng->uniform(0.0, height);
      out.emit(f.origin[0] + u * f.axis_u[0], f.origin[1] + u * f.axis_u[1], base_z + v);
    }
  }
  // Top face.
  {
    const double range = clamped_range(std::hypot(cx - sensor_x, cy - sensor_y), min_range);
    const double rho = density_at_10m * density_scale * (10.0 / range) * (10.0 / range);
    const int n = out.rng->poisson(rho * length * width);
    for (int i = 0; i < n; ++i) {
      const double u = out.rng->uniform(-hl, hl);
      const double v = out.rng->uniform(-hw, hw);
      out.emit(cx + c * u - s * v, cy + s * u + c * v, base_z + height);
    }
  }
}

}  // namespace synth_detail

// Generates a dataset under out_root and returns the validated manifest.
// Fixed seed -> byte-identical output. The optional shift scales mean car
// footprint size and class frequencies (the target-domain variant).
inline DatasetManifest generate_dataset(const WorldSpec& world,
                                        const std::optional<DomainShiftSpec>& shift,
                                        const std::filesystem::path& out_root) {
  if (world.traversals < 2) throw ValidationError("world traversal count must be >= 2");
  if (world.locations < 1) throw ValidationError("world needs at least one location");
  if (world.scans_per_traversal < 1) throw ValidationError("scans_per_traversal must be >= 1");
  if (world.sensor_path.size() < 2) throw ValidationError("sensor path needs >= 2 waypoints");
  if (world.lanes.empty()) throw ValidationError("world needs at least one lane");

  std::array<ClassProfile, kNumClasses> classes = world.classes;
  if (shift) {
    classes[0].size_mean[0] *= shift->car_size_scale;
    classes[0].size_mean[1] *= shift->car_size_scale;
    for (int c = 0; c < kNumClasses; ++c)
      classes[c].frequency *= shift->frequency_multipliers[c];
  }

  std::filesystem::create_directories(out_root);

  DatasetManifest manifest;
  manifest.root = out_root;

  const synth_detail::Polyline path(world.sensor_path);
  std::vector<synth_detail::Polyline> lanes;
  for (const auto& lane : world.lanes) lanes.emplace_back(lane);

  char name[64];
  for (int li = 0; li < world.locations; ++li) {
    std::snprintf(name, sizeof(name), "loc%03d", li);
    const std::string loc_id = name;
    const double ox = world.location_spacing * li;  // location origin offset (x only)

    // --- dynamic object identities and per-traversal placements ---
    Rng place_rng = Rng::derive(world.seed, 0xB0D1E5, li);
    struct ObjectIdentity {
      ClassId cls;
      std::array<double, 3> size;
    };
    std::vector<ObjectIdentity> objects;
    for (int c = 0; c < kNumClasses; ++c) {
      const int n = place_rng.poisson(classes[c].frequency);
      for (int k = 0; k < n; ++k) {
        std::array<double, 3> size;
        for (int d = 0; d < 3; ++d) {
          size[d] = classes[c].size_mean[d] + place_rng.normal_clipped(classes[c].size_sigma[d]);
          size[d] = std::max(size[d], 0.25);
        }
        objects.push_back({class_from_index(c), size});
      }
    }

    std::vector<std::vector<synth_detail::Placement>> placements(world.traversals);
    for (int t = 0; t < world.traversals; ++t) {
      for (std::size_t obj = 0; obj < objects.size(); ++obj) {
        synth_detail::Placement cand;
        cand.object_id = static_cast<int>(obj);
        cand.cls = objects[obj].cls;
        cand.size = objects[obj].size;
        cand.base_z = world.object_base_height;
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
          const auto& lane = lanes[place_rng.uniform_index(lanes.size())];
          double x, y, heading;
          lane.at(place_rng.uniform(0.0, lane.total), x, y, heading);
          cand.x = x;
          cand.y = y;
          cand.yaw = normalize_yaw(heading + place_rng.uniform(-0.2, 0.2) +
                                   (place_rng.uniform() < 0.5 ? 0.0 : M_PI));
          if (synth_detail::placement_ok(cand, t, placements, world)) {
            placements[t].push_back(cand);
            placed = true;
          }
        }
        // An object that cannot be placed in this traversal is skipped there;
        // clearances stay guaranteed.
      }
    }

    // --- manifest skeleton for this location ---
    LocationRecord loc_rec;
    loc_rec.id = loc_id;

    std::filesystem::create_directories(out_root / loc_id);

    for (int t = 0; t < world.traversals; ++t) {
      std::snprintf(name, sizeof(name), "t%02d", t);
      const std::string trav_id = name;
      std::filesystem::create_directories(out_root / loc_id / trav_id);
      TraversalRecord trav_rec;
      trav_rec.id = trav_id;

      for (int sc = 0; sc < world.scans_per_traversal; ++sc) {
        std::snprintf(name, sizeof(name), "s%02d", sc);
        const std::string scan_id = name;
        Rng rng = Rng::derive(world.seed, li, t, sc);

        // Sensor pose: stations spread along the path, same for every traversal.
        const double frac = (sc + 0.5) / world.scans_per_traversal;
        double sx, sy, heading;
        path.at(frac * path.total, sx, sy, heading);

        PointCloud world_cloud;
        world_cloud.frame = Frame::world;
        PointMask mask;
        synth_detail::SurfaceSampler sampler{&world_cloud, &mask, &rng,
                                             world.sensor_noise_sigma,
                                             PointMask::Kind::ground, -1};

        // Ground: 1x1 m cells, density falling with the cube of range.
        sampler.kind = PointMask::Kind::ground;
        sampler.object_id = -1;
        const int cells = static_cast<int>(std::ceil(2.0 * world.extent));
        for (int gx = 0; gx < cells; ++gx) {
          for (int gy = 0; gy < cells; ++gy) {
            const double cx = -world.extent + gx + 0.5;
            const double cy = -world.extent + gy + 0.5;
            const double range = synth_detail::clamped_range(std::hypot(cx - sx, cy - sy),
                                                             world.min_sample_range);
            const double rho = world.density_at_10m * world.ground_density_scale *
                               std::pow(10.0 / range, 3.0);
            const int n = rng.poisson(rho);
            for (int i = 0; i < n; ++i) {
              const double px = cx + rng.uniform(-0.5, 0.5);
              const double py = cy + rng.uniform(-0.5, 0.5);
              const double pz = rng.normal_clipped(world.ground_noise_sigma);
              sampler.emit(px, py, pz);
            }
          }
        }

        // Static structures.
        sampler.kind = PointMask::Kind::static_structure;
        for (const auto& s : world.structures) {
          synth_detail::sample_box_surfaces(sampler, s.center.x, s.center.y, s.center.z,
                                            s.length, s.width, s.height, s.yaw, sx, sy,
                                            world.density_at_10m, world.min_sample_range,
                                            s.density_scale);
        }

        // Dynamic objects of this traversal.
        sampler.kind = PointMask::Kind::dynamic;
        std::vector<LabeledBox> gt;
        for (const auto& p : placements[t]) {
          sampler.object_id = p.object_id;
          synth_detail::sample_box_surfaces(sampler, p.x, p.y, p.base_z, p.size[0], p.size[1],
                                            p.size[2], p.yaw, sx, sy, world.density_at_10m,
                                            world.min_sample_range,
                                            classes[static_cast<int>(p.cls)].density_scale);
          gt.push_back(make_box({p.x + ox, p.y, p.base_z + 0.5 * p.size[2]},
                                p.size[0], p.size[1], p.size[2], p.yaw, p.cls, 1.0,
                                BoxProvenance::ground_truth));
        }
        sampler.object_id = -1;

        // Shift the local cloud into the location's world-frame slot.
        for (auto& p : world_cloud.points) p.x += ox;

        const Pose6DoF pose = yaw_pose(heading, sx + ox, sy, world.sensor_height);
        // Store the cloud in the sensor frame, as a real scan would be.
        PointCloud sensor_cloud;
        sensor_cloud.frame = Frame::sensor;
        const Pose6DoF inv = pose.inverse();
        sensor_cloud.points.reserve(world_cloud.points.size());
        for (const auto& p : world_cloud.points) sensor_cloud.points.push_back(inv.apply(p));

        const std::string rel_base = loc_id + "/" + trav_id + "/" + scan_id;
        write_xyz(out_root / (rel_base + ".xyz"), sensor_cloud);
        write_pose(out_root / (rel_base + ".pose.json"), pose);
        if (world.write_labels) write_boxes(out_root / (rel_base + ".boxes.json"), gt);

        // Mask sidecar for oracle tests.
        {
          nlohmann::json jm = nlohmann::json::array();
          for (std::size_t i = 0; i < mask.kinds.size(); ++i) {
            nlohmann::json entry;
            switch (mask.kinds[i]) {
              case PointMask::Kind::ground: entry["kind"] = "ground"; break;
              case PointMask::Kind::static_structure: entry["kind"] = "static"; break;
              case PointMask::Kind::dynamic:
                entry["kind"] = "dynamic";
                entry["object"] = mask.object_ids[i];
                break;
            }
            jm.push_back(std::move(entry));
          }
          detail::write_text_file(out_root / (rel_base + ".mask.json"), jm.dump());
        }

        trav_rec.scans.push_back({rel_base + ".xyz", rel_base + ".pose.json"});

        SceneRecord scene;
        scene.id = loc_id + "_" + trav_id + "_" + scan_id;
        scene.location_id = loc_id;
        scene.traversal_id = trav_id;
        scene.scan_index = static_cast<std::size_t>(sc);
        if (world.write_labels) scene.labels_path = rel_base + ".boxes.json";
        manifest.scenes.push_back(std::move(scene));
      }
      loc_rec.traversals.push_back(std::move(trav_rec));
    }
    manifest.locations.push_back(std::move(loc_rec));
  }

  write_manifest(out_root, manifest);
  return load_manifest(out_root);
}

// Reads the ground-truth provenance sidecar written next to a scene's cloud.
inline PointMask oracle_mask(const DatasetManifest& manifest, const SceneRecord& scene) {
  auto path = scene_cloud_path(manifest, scene);
  path.replace_extension();  // drop .xyz
  path += ".mask.json";
  const nlohmann::json j = detail::parse_json_file(path);
  PointMask mask;
  for (const auto& e : j) {
    const std::string kind = e.at("kind").get<std::string>();
    if (kind == "ground") {
      mask.kinds.push_back(PointMask::Kind::ground);
      mask.object_ids.push_back(-1);
    } else if (kind == "static") {
      mask.kinds.push_back(PointMask::Kind::static_structure);
      mask.object_ids.push_back(-1);
    } else if (kind == "dynamic") {
      mask.kinds.push_back(PointMask::Kind::dynamic);
      mask.object_ids.push_back(e.at("object").get<int>());
    } else {
      throw IoError("unknown mask kind " + kind + " in " + path.string());
    }
  }
  return mask;
}

inline std::vector<PointMask> oracle_masks(const DatasetManifest& manifest) {
  std::vector<PointMask> masks;
  masks.reserve(manifest.scenes.size());
  for (const auto& scene : manifest.scenes) masks.push_back(oracle_mask(manifest, scene));
  return masks;
}

}  // namespace tda
