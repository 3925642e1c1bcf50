#pragma once

// Desk-scale two-stage detector. Stage 1 scores every point with independent
// one-vs-all linear classifiers over hand-crafted geometric features; stage 2
// clusters foreground points (single linkage over a voxel index) and fits an
// oriented box per cluster from its principal axes, blended with per-class
// size priors. Detection never reads persistence data: at test time only the
// scene itself is available.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "tda/dataset.hpp"
#include "tda/geometry.hpp"
#include "tda/parallel.hpp"
#include "tda/supervision.hpp"
#include "tda/voxel_index.hpp"

namespace tda {

inline constexpr int kFeatureDim = 5;
inline constexpr double kFeatureRadius = 0.6;  // density / vertical extent neighborhood
inline constexpr double kGroundCellSize = 2.0; // local ground estimation cell

// Per-point features: height above local ground, neighbor count within 0.6 m
// (self-inclusive), horizontal sensor range, neighborhood vertical extent,
// and a constant bias.
struct PointFeatures {
  std::vector<std::array<double, kFeatureDim>> rows;
};

struct Stage1Model {
  std::array<std::array<double, kFeatureDim>, kNumClasses> weights{};
};

struct DetectorConfig {
  double fg_threshold = 0.5;
  double cluster_radius = 0.7;
  std::size_t min_cluster_points = 5;
  std::array<std::array<double, 3>, kNumClasses> size_priors = {{{4.2, 1.8, 1.5},
                                                                 {0.7, 0.7, 1.75},
                                                                 {1.8, 0.6, 1.7}}};
  double learning_rate = 1.5e-3;
  int epochs_per_round = 10;
};

inline void validate_detector(const DetectorConfig& c) {
  if (!(c.fg_threshold > 0.0 && c.fg_threshold < 1.0))
    throw ValidationError("fg_threshold must lie in (0,1)");
  if (!(c.cluster_radius > 0.0)) throw ValidationError("cluster_radius must be > 0");
}

inline PointFeatures extract_features(const PointCloud& world_cloud,
                                      const Pose6DoF& sensor_pose) {
  if (world_cloud.frame != Frame::world)
    throw ValidationError("extract_features expects a world-frame cloud");
  PointFeatures feats;
  const std::size_t n = world_cloud.points.size();
  feats.rows.resize(n);
  if (n == 0) return feats;

  // Local ground: min z per 2x2 m horizontal cell.
  struct CellHash {
    std::size_t operator()(const std::pair<std::int64_t, std::int64_t>& k) const {
      return std::hash<std::int64_t>()(k.first * 0x1f1f1f1f ^ k.second);
    }
  };
  std::unordered_map<std::pair<std::int64_t, std::int64_t>, double, CellHash> ground;
  const auto cell_of = [](const Point3& p) {
    return std::make_pair(static_cast<std::int64_t>(std::floor(p.x / kGroundCellSize)),
                          static_cast<std::int64_t>(std::floor(p.y / kGroundCellSize)));
  };
  for (const auto& p : world_cloud.points) {
    auto [it, inserted] = ground.try_emplace(cell_of(p), p.z);
    if (!inserted) it->second = std::min(it->second, p.z);
  }

  const VoxelIndex index(world_cloud, kFeatureRadius);
  const double sensor_x = sensor_pose.translation[0];
  const double sensor_y = sensor_pose.translation[1];

  for (std::size_t i = 0; i < n; ++i) {
    const Point3& p = world_cloud.points[i];
    double zmin = p.z, zmax = p.z;
    std::size_t count = 0;
    index.visit_neighborhood(p, [&](const Point3& q, std::uint32_t) {
      ++count;
      zmin = std::min(zmin, q.z);
      zmax = std::max(zmax, q.z);
    });
    feats.rows[i] = {p.z - ground.at(cell_of(p)), static_cast<double>(count),
                     std::hypot(p.x - sensor_x, p.y - sensor_y), zmax - zmin, 1.0};
  }
  return feats;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Independent one-vs-all probabilities, p_c = sigmoid(w_c . f).
inline std::vector<std::array<double, kNumClasses>> stage1_predict(
    const Stage1Model& model, const PointFeatures& feats) {
  std::vector<std::array<double, kNumClasses>> probs(feats.rows.size());
  for (std::size_t i = 0; i < feats.rows.size(); ++i) {
    for (int c = 0; c < kNumClasses; ++c) {
      double z = 0.0;
      for (int d = 0; d < kFeatureDim; ++d) z += model.weights[c][d] * feats.rows[i][d];
      probs[i][c] = sigmoid(z);
    }
  }
  return probs;
}

struct TrainStats {
  std::vector<double> epoch_losses;  // mean focal loss per epoch, pre-update
};

// Full-batch gradient descent on the mean focal loss. Sequential accumulation
// in point order keeps the result bit-reproducible.
inline TrainStats stage1_train(Stage1Model& model, const PointFeatures& feats,
                               const PointLabelSet& labels, const FocalConfig& focal,
                               const DetectorConfig& config) {
  validate_focal(focal);
  if (feats.rows.size() != labels.labels.size())
    throw ValidationError("stage1_train: feature/label length mismatch");
  TrainStats stats;
  const std::size_t n = feats.rows.size();
  if (n == 0) return stats;
  for (int epoch = 0; epoch < config.epochs_per_round; ++epoch) {
    std::array<std::array<double, kFeatureDim>, kNumClasses> grad{};
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::array<double, kNumClasses> p;
      for (int c = 0; c < kNumClasses; ++c) {
        double z = 0.0;
        for (int d = 0; d < kFeatureDim; ++d) z += model.weights[c][d] * feats.rows[i][d];
        p[c] = sigmoid(z);
      }
      loss += focal_loss(p, labels.labels[i], focal);
      const auto g = focal_loss_grad(p, labels.labels[i], focal);
      for (int c = 0; c < kNumClasses; ++c)
        for (int d = 0; d < kFeatureDim; ++d) grad[c][d] += g[c] * feats.rows[i][d];
    }
    stats.epoch_losses.push_back(loss / static_cast<double>(n));
    const double scale = config.learning_rate / static_cast<double>(n);
    for (int c = 0; c < kNumClasses; ++c)
      for (int d = 0; d < kFeatureDim; ++d) model.weights[c][d] -= scale * grad[c][d];
  }
  return stats;
}

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  std::size_t find(std::size_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void merge(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

// Stage 2: threshold, cluster, fit. Emits one box per cluster with at least
// min_cluster_points members; box class is the argmax of the cluster's mean
// class probabilities and its confidence that mean probability.
inline std::vector<LabeledBox> stage2_propose(
    const PointCloud& world_cloud, const std::vector<std::array<double, kNumClasses>>& probs,
    const DetectorConfig& config) {
  validate_detector(config);
  if (world_cloud.points.size() != probs.size())
    throw ValidationError("stage2_propose: cloud/probability length mismatch");

  // Foreground mask, strict threshold: an untrained all-0.5 model emits nothing.
  std::vector<std::uint32_t> fg;  // indices into the scene cloud
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double best = 0.0;
    for (int c = 0; c < kNumClasses; ++c) best = std::max(best, probs[i][c]);
    if (best > config.fg_threshold) fg.push_back(static_cast<std::uint32_t>(i));
  }
  if (fg.empty()) return {};

  PointCloud masked;
  masked.frame = Frame::world;
  masked.points.reserve(fg.size());
  for (std::uint32_t i : fg) masked.points.push_back(world_cloud.points[i]);

  // Single-linkage clustering via union-find over radius neighbors.
  const VoxelIndex index(masked, config.cluster_radius);
  detail::UnionFind uf(fg.size());
  for (std::size_t i = 0; i < masked.points.size(); ++i) {
    index.visit_neighborhood(masked.points[i], [&](const Point3&, std::uint32_t j) {
      if (j > i) uf.merge(i, j);
    });
  }
  std::unordered_map<std::size_t, std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < fg.size(); ++i) clusters[uf.find(i)].push_back(i);

  // Deterministic cluster order: by smallest member index.
  std::vector<std::vector<std::size_t>> ordered;
  for (auto& [root, members] : clusters) {
    if (members.size() >= config.min_cluster_points) ordered.push_back(std::move(members));
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });

  std::vector<LabeledBox> boxes;
  for (const auto& members : ordered) {
    // Cluster class: argmax of mean per-class probability.
    std::array<double, kNumClasses> mean_p{};
    for (std::size_t m : members)
      for (int c = 0; c < kNumClasses; ++c) mean_p[c] += probs[fg[m]][c];
    for (int c = 0; c < kNumClasses; ++c) mean_p[c] /= static_cast<double>(members.size());
    int cls = 0;
    for (int c = 1; c < kNumClasses; ++c)
      if (mean_p[c] > mean_p[cls]) cls = c;
    const double confidence = std::clamp(mean_p[cls], 0.0, 1.0);

    // Principal axis of the xy footprint.
    double mx = 0.0, my = 0.0;
    for (std::size_t m : members) {
      mx += masked.points[m].x;
      my += masked.points[m].y;
    }
    mx /= static_cast<double>(members.size());
    my /= static_cast<double>(members.size());
    double cxx = 0.0, cyy = 0.0, cxy = 0.0;
    for (std::size_t m : members) {
      const double dx = masked.points[m].x - mx;
      const double dy = masked.points[m].y - my;
      cxx += dx * dx;
      cyy += dy * dy;
      cxy += dx * dy;
    }
    double theta = 0.5 * std::atan2(2.0 * cxy, cxx - cyy);

    // Tight oriented rectangle along the principal axis.
    double c = 0, s = 0, smin = 0, smax = 0, tmin = 0, tmax = 0, zmin = 0, zmax = 0;
    const auto project = [&](double angle) {
      c = std::cos(angle);
      s = std::sin(angle);
      bool first = true;
      for (std::size_t m : members) {
        const double dx = masked.points[m].x - mx;
        const double dy = masked.points[m].y - my;
        const double u = c * dx + s * dy;
        const double v = -s * dx + c * dy;
        const double z = masked.points[m].z;
        if (first) {
          smin = smax = u;
          tmin = tmax = v;
          zmin = zmax = z;
          first = false;
        } else {
          smin = std::min(smin, u); smax = std::max(smax, u);
          tmin = std::min(tmin, v); tmax = std::max(tmax, v);
          zmin = std::min(zmin, z); zmax = std::max(zmax, z);
        }
      }
    };
    project(theta);
    if (tmax - tmin > smax - smin) {  // keep the length axis the longer one
      theta += M_PI / 2.0;
      project(theta);
    }
    const double len_meas = smax - smin;
    const double wid_meas = tmax - tmin;
    // Canonical heading in (-pi/2, pi/2]; footprints are yaw-ambiguous mod pi.
    double yaw = normalize_yaw(theta);
    if (yaw <= -M_PI / 2.0) yaw += M_PI;
    if (yaw > M_PI / 2.0) yaw -= M_PI;

    const double su = 0.5 * (smin + smax);
    const double sv = 0.5 * (tmin + tmax);
    const Point3 center{mx + c * su - s * sv, my + s * su + c * sv, 0.5 * (zmin + zmax)};

    const auto& prior = config.size_priors[cls];
    const double length = 0.5 * (len_meas + prior[0]);
    const double width = 0.5 * (wid_meas + prior[1]);
    const double height = std::max(zmax - zmin, 0.05);

    boxes.push_back(make_box(center, std::max(length, 0.05), std::max(width, 0.05), height,
                             yaw, class_from_index(cls), confidence,
                             BoxProvenance::detection));
  }
  return boxes;
}

// Full per-scene detection; persistence data is deliberately not an input.
inline std::vector<LabeledBox> detect(const Stage1Model& model, const Scene& scene,
                                      const DetectorConfig& config) {
  const PointCloud world = transform_cloud(scene.cloud, scene.sensor_pose);
  const PointFeatures feats = extract_features(world, scene.sensor_pose);
  const auto probs = stage1_predict(model, feats);
  return stage2_propose(world, probs, config);
}

// Detection over a cached world-frame cloud and features (self-training path).
inline std::vector<LabeledBox> detect_cached(const Stage1Model& model,
                                             const PointCloud& world_cloud,
                                             const PointFeatures& feats,
                                             const DetectorConfig& config) {
  const auto probs = stage1_predict(model, feats);
  return stage2_propose(world_cloud, probs, config);
}

// --- model files (.model.json) ------------------------------------------------

inline void save_model(const std::filesystem::path& path, const Stage1Model& model,
                       const DetectorConfig& config) {
  nlohmann::json j;
  j["weights"] = model.weights;
  j["class_names"] = {class_name(ClassId::car), class_name(ClassId::pedestrian),
                      class_name(ClassId::cyclist)};
  nlohmann::json priors;
  for (int c = 0; c < kNumClasses; ++c)
    priors[class_name(class_from_index(c))] = config.size_priors[c];
  j["size_priors"] = priors;
  detail::write_text_file(path, j.dump(2));
}

// Loads weights and restores the size priors into `config`.
inline Stage1Model load_model(const std::filesystem::path& path, DetectorConfig& config) {
  const nlohmann::json j = detail::parse_json_file(path);
  Stage1Model model;
  try {
    model.weights =
        j.at("weights").get<std::array<std::array<double, kFeatureDim>, kNumClasses>>();
    const auto names = j.at("class_names").get<std::vector<std::string>>();
    for (int c = 0; c < kNumClasses; ++c) {
      if (names.at(c) != class_name(class_from_index(c)))
        throw IoError("model file class order mismatch in " + path.string());
    }
    if (j.contains("size_priors")) {
      for (int c = 0; c < kNumClasses; ++c) {
        config.size_priors[c] =
            j.at("size_priors").at(class_name(class_from_index(c))).get<std::array<double, 3>>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed model file " + path.string() + ": " + e.what());
  }
  for (const auto& row : model.weights)
    for (double w : row)
      if (!std::isfinite(w)) throw ValidationError("model weights must be finite");
  return model;
}

}  // namespace tda
