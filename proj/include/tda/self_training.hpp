#pragma once

// Iterative adaptation on an unlabeled target split: detect, refine the
// detections into pseudo-labels (FB-F / PO-F), derive per-point labels,
// rewrite them with the persistence field (FB-S), fine-tune stage 1, repeat.
// Target ground truth is never an input to this code path.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tda/dataset.hpp"
#include "tda/detector.hpp"
#include "tda/geometry.hpp"
#include "tda/metrics.hpp"
#include "tda/parallel.hpp"
#include "tda/persistence.hpp"
#include "tda/pseudo_label_filter.hpp"
#include "tda/supervision.hpp"
#include "tda/traversal_store.hpp"

namespace tda {

struct AdaptationConfig {
  int rounds = 10;
  bool enable_pof = true;   // all three on: full adaptation
  bool enable_fbf = true;   // all three off: vanilla self-training
  bool enable_fbs = true;
  FilterConfig filter;
  FBSConfig fbs;
  FocalConfig focal;
  DetectorConfig detector;
  PPConfig pp;
  std::uint64_t seed = 0;
  int threads = 1;

  // One regeneration per round with a single fine-tuning epoch inside it;
  // R rounds then correspond to R epochs of the usual recipe.
  AdaptationConfig() { detector.epochs_per_round = 1; }
};

inline void validate_adaptation(const AdaptationConfig& c) {
  if (c.rounds < 1) throw ValidationError("adaptation rounds must be >= 1");
  validate_filter(c.filter);
  validate_fbs(c.fbs);
  validate_focal(c.focal);
  validate_detector(c.detector);
}

struct RoundLog {
  int round = 0;  // 0 = source model before any adaptation
  std::array<std::size_t, kNumClasses> pseudo_label_counts{};
  std::array<std::size_t, kNumClasses> removed_counts{};
  double mean_stage1_loss = 0.0;
  std::optional<MetricReport> eval;
};

struct AdaptationResult {
  Stage1Model model;
  std::vector<RoundLog> rounds;  // rounds.size() == config.rounds + 1 (round 0 first)
};

// Detects on a labeled split with the given model and evaluates the result.
inline MetricReport evaluate_round(const Stage1Model& model,
                                   const std::vector<Scene>& eval_scenes,
                                   const DetectorConfig& detector_config,
                                   const EvalConfig& eval_config, int threads = 1) {
  for (const Scene& scene : eval_scenes)
    if (!scene.gt_boxes)
      throw ValidationError("evaluate_round: scene " + scene.scene_id + " has no ground truth");
  std::vector<EvalScene> evals(eval_scenes.size());
  parallel_for(eval_scenes.size(), threads, [&](std::size_t i) {
    const Scene& scene = eval_scenes[i];
    evals[i] = EvalScene{scene.scene_id, scene.sensor_pose,
                         detect(model, scene, detector_config), *scene.gt_boxes};
  });
  return metric_report(evals, eval_config);
}

// Runs R rounds of self-training. `eval_scenes` (optional, labeled) is only
// used to fill RoundLog metrics; adaptation itself never sees labels.
inline AdaptationResult run_adaptation(const Stage1Model& source_model,
                                       const std::vector<Scene>& target_scenes,
                                       const TraversalStore& stores,
                                       const AdaptationConfig& config,
                                       const std::vector<Scene>* eval_scenes = nullptr,
                                       const EvalConfig* eval_config = nullptr) {
  validate_adaptation(config);
  if (target_scenes.empty()) throw ValidationError("run_adaptation: empty target split");

  // --- one-time per-scene caches: world cloud, features, persistence field ---
  struct SceneCache {
    PointCloud world;
    PointFeatures features;
    PPField field;
  };
  std::vector<SceneCache> cache(target_scenes.size());

  // Location indices are built once and shared across scenes.
  std::map<std::string, LocationIndices> locations;
  for (const auto& scene : target_scenes) {
    if (locations.count(scene.location_id)) continue;
    locations.emplace(scene.location_id,
                      build_location_indices(stores, scene.location_id, config.pp.radius));
  }

  PPConfig pp = config.pp;
  pp.threads = config.threads;
  for (std::size_t i = 0; i < target_scenes.size(); ++i) {
    const Scene& scene = target_scenes[i];
    cache[i].world = transform_cloud(scene.cloud, scene.sensor_pose);
    cache[i].features = extract_features(cache[i].world, scene.sensor_pose);
    cache[i].field = score_scene(scene, locations.at(scene.location_id), pp);
  }

  // Concatenated training inputs in scene order.
  PointFeatures all_features;
  std::vector<std::size_t> offsets(target_scenes.size() + 1, 0);
  for (std::size_t i = 0; i < target_scenes.size(); ++i) {
    offsets[i + 1] = offsets[i] + cache[i].features.rows.size();
    all_features.rows.insert(all_features.rows.end(), cache[i].features.rows.begin(),
                             cache[i].features.rows.end());
  }

  AdaptationResult result;
  result.model = source_model;

  const auto log_round = [&](int round, const FilterReport* report, double loss) {
    RoundLog log;
    log.round = round;
    if (report != nullptr) {
      log.pseudo_label_counts = report->kept_per_class();
      log.removed_counts = report->removed_per_class();
    }
    log.mean_stage1_loss = loss;
    if (eval_scenes != nullptr && eval_config != nullptr)
      log.eval = evaluate_round(result.model, *eval_scenes, config.detector, *eval_config,
                                config.threads);
    result.rounds.push_back(std::move(log));
  };

  log_round(0, nullptr, 0.0);

  for (int round = 1; round <= config.rounds; ++round) {
    // (1) detect on every target scene
    std::vector<SceneDetections> detections(target_scenes.size());
    parallel_for(target_scenes.size(), config.threads, [&](std::size_t i) {
      detections[i].scene_id = target_scenes[i].scene_id;
      detections[i].boxes =
          detect_cached(result.model, cache[i].world, cache[i].features, config.detector);
    });

    // (2) refine into pseudo-labels (disabled filters pass through)
    std::vector<SceneRefineContext> contexts(target_scenes.size());
    for (std::size_t i = 0; i < target_scenes.size(); ++i)
      contexts[i] = {&cache[i].world, &cache[i].field};
    RefineResult refined = refine_pseudo_labels(detections, contexts, config.filter,
                                                config.enable_fbf, config.enable_pof);

    // (3) per-point labels from surviving boxes, (4) persistence rewrite
    PointLabelSet all_labels;
    all_labels.labels.resize(all_features.rows.size());
    all_labels.source = config.enable_fbs ? PointLabelSet::Source::rewritten_fbs
                                          : PointLabelSet::Source::from_boxes;
    parallel_for(target_scenes.size(), config.threads, [&](std::size_t i) {
      PointLabelSet labels = labels_from_boxes(cache[i].world, refined.pseudo_labels[i].boxes);
      if (config.enable_fbs) labels = fbs_rewrite(labels, cache[i].field.tau, config.fbs);
      std::copy(labels.labels.begin(), labels.labels.end(),
                all_labels.labels.begin() + static_cast<std::ptrdiff_t>(offsets[i]));
    });

    // (5) fine-tune stage 1 on the concatenated target points
    const TrainStats stats = stage1_train(result.model, all_features, all_labels,
                                          config.focal, config.detector);
    log_round(round, &refined.report,
              stats.epoch_losses.empty() ? 0.0 : stats.epoch_losses.back());
  }
  return result;
}

// --- config (de)serialization: keys mirror the struct field names ------------

inline void to_json(nlohmann::json& j, const FilterConfig& c) {
  j = {{"alpha_fbf", c.alpha_fbf},
       {"gamma_fbf", c.gamma_fbf},
       {"beta", c.beta},
       {"source_class_counts", c.source_class_counts},
       {"source_scene_count", c.source_scene_count},
       {"min_points_fbf", c.min_points_fbf}};
}

inline void from_json(const nlohmann::json& j, FilterConfig& c) {
  FilterConfig d;
  c.alpha_fbf = j.value("alpha_fbf", d.alpha_fbf);
  c.gamma_fbf = j.value("gamma_fbf", d.gamma_fbf);
  c.beta = j.value("beta", d.beta);
  if (j.contains("source_class_counts"))
    c.source_class_counts = j.at("source_class_counts").get<std::array<double, kNumClasses>>();
  c.source_scene_count = j.value("source_scene_count", d.source_scene_count);
  c.min_points_fbf = j.value("min_points_fbf", d.min_points_fbf);
}

inline void to_json(nlohmann::json& j, const FBSConfig& c) {
  j = {{"tau_upper", c.tau_upper}, {"tau_lower", c.tau_lower}};
}

inline void from_json(const nlohmann::json& j, FBSConfig& c) {
  FBSConfig d;
  c.tau_upper = j.value("tau_upper", d.tau_upper);
  c.tau_lower = j.value("tau_lower", d.tau_lower);
}

inline void to_json(nlohmann::json& j, const FocalConfig& c) {
  j = {{"alpha", c.alpha}, {"gamma", c.gamma}};
}

inline void from_json(const nlohmann::json& j, FocalConfig& c) {
  FocalConfig d;
  c.alpha = j.value("alpha", d.alpha);
  c.gamma = j.value("gamma", d.gamma);
}

inline void to_json(nlohmann::json& j, const DetectorConfig& c) {
  j = {{"fg_threshold", c.fg_threshold},
       {"cluster_radius", c.cluster_radius},
       {"min_cluster_points", c.min_cluster_points},
       {"size_priors", c.size_priors},
       {"learning_rate", c.learning_rate},
       {"epochs_per_round", c.epochs_per_round}};
}

inline void from_json(const nlohmann::json& j, DetectorConfig& c) {
  DetectorConfig d;
  c.fg_threshold = j.value("fg_threshold", d.fg_threshold);
  c.cluster_radius = j.value("cluster_radius", d.cluster_radius);
  c.min_cluster_points = j.value("min_cluster_points", d.min_cluster_points);
  if (j.contains("size_priors"))
    c.size_priors = j.at("size_priors").get<std::array<std::array<double, 3>, kNumClasses>>();
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.epochs_per_round = j.value("epochs_per_round", d.epochs_per_round);
}

inline void to_json(nlohmann::json& j, const PPConfig& c) {
  j = {{"radius", c.radius},
       {"max_traversals", c.max_traversals},
       {"exclude_self", c.exclude_self}};
}

inline void from_json(const nlohmann::json& j, PPConfig& c) {
  PPConfig d;
  c.radius = j.value("radius", d.radius);
  c.max_traversals = j.value("max_traversals", d.max_traversals);
  c.exclude_self = j.value("exclude_self", d.exclude_self);
}

inline void to_json(nlohmann::json& j, const AdaptationConfig& c) {
  j = {{"rounds", c.rounds},
       {"enable_pof", c.enable_pof},
       {"enable_fbf", c.enable_fbf},
       {"enable_fbs", c.enable_fbs},
       {"filter", c.filter},
       {"fbs", c.fbs},
       {"focal", c.focal},
       {"detector", c.detector},
       {"pp", c.pp},
       {"seed", c.seed},
       {"threads", c.threads}};
}

inline void from_json(const nlohmann::json& j, AdaptationConfig& c) {
  AdaptationConfig d;
  c.rounds = j.value("rounds", d.rounds);
  c.enable_pof = j.value("enable_pof", d.enable_pof);
  c.enable_fbf = j.value("enable_fbf", d.enable_fbf);
  c.enable_fbs = j.value("enable_fbs", d.enable_fbs);
  if (j.contains("filter")) c.filter = j.at("filter").get<FilterConfig>();
  if (j.contains("fbs")) c.fbs = j.at("fbs").get<FBSConfig>();
  if (j.contains("focal")) c.focal = j.at("focal").get<FocalConfig>();
  if (j.contains("detector")) c.detector = j.at("detector").get<DetectorConfig>();
  if (j.contains("pp")) c.pp = j.at("pp").get<PPConfig>();
  c.seed = j.value("seed", d.seed);
  c.threads = j.value("threads", d.threads);
}

// --- rounds.csv ---------------------------------------------------------------

inline std::string depth_bin_label(const std::array<double, 2>& bin) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g-%g", bin[0], bin[1]);
  return buf;
}

// One row per (round, class, depth bin) with the AP columns.
inline std::string rounds_csv(const std::vector<RoundLog>& rounds) {
  std::string csv =
      "round,class,depth_bin,ap_bev_primary,ap_bev_loose,ap_3d_primary,ap_3d_loose,"
      "distance_map\n";
  char line[256];
  for (const auto& log : rounds) {
    if (!log.eval) continue;
    const MetricReport& report = *log.eval;
    for (int c = 0; c < kNumClasses; ++c) {
      for (std::size_t b = 0; b < report.depth_bins.size(); ++b) {
        const CellMetrics& cell = report.cells[c][b];
        std::snprintf(line, sizeof(line), "%d,%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f\n", log.round,
                      class_name(class_from_index(c)),
                      depth_bin_label(report.depth_bins[b]).c_str(), cell.ap_bev_primary,
                      cell.ap_bev_loose, cell.ap_3d_primary, cell.ap_3d_loose,
                      cell.distance_map);
        csv += line;
      }
    }
  }
  return csv;
}

}  // namespace tda
