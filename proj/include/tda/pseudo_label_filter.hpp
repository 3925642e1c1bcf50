#pragma once

// Pseudo-label quality control.
//
// FB-F (foreground/background filtering): a detection box is summarized by a
// low percentile of the persistence scores of the points it contains; boxes
// whose summary exceeds a threshold sit on persistent background and are
// removed.
//
// PO-F (posterior filtering): a dataset-wide, per-class cap on the number of
// pseudo-labels, derived from source-domain object frequency; only the
// highest-confidence boxes are kept.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tda/geometry.hpp"
#include "tda/persistence.hpp"

namespace tda {

struct FilterConfig {
  double alpha_fbf = 20.0;   // percentile in (0,100)
  double gamma_fbf = 0.5;    // tau threshold
  double beta = 0.333;       // cap tightness
  std::array<double, kNumClasses> source_class_counts = {14357.0, 2207.0, 734.0};
  double source_scene_count = 3712.0;
  std::size_t min_points_fbf = 1;
};

inline void validate_filter(const FilterConfig& c) {
  if (!(c.alpha_fbf > 0.0 && c.alpha_fbf < 100.0))
    throw ValidationError("alpha_fbf must lie in (0,100)");
  if (!(c.gamma_fbf >= 0.0 && c.gamma_fbf <= 1.0))
    throw ValidationError("gamma_fbf must lie in [0,1]");
  if (!(c.beta >= 0.0 && c.beta <= 1.0)) throw ValidationError("beta must lie in [0,1]");
  if (!(c.source_scene_count >= 1.0))
    throw ValidationError("source_scene_count must be >= 1");
}

enum class FilterOutcome { kept, removed_fbf, removed_pof, removed_empty_box };

inline const char* filter_outcome_name(FilterOutcome o) {
  switch (o) {
    case FilterOutcome::kept: return "kept";
    case FilterOutcome::removed_fbf: return "fbf";
    case FilterOutcome::removed_pof: return "pof";
    case FilterOutcome::removed_empty_box: return "empty_box";
  }
  return "?";
}

struct FilterReport {
  struct Record {
    std::string scene_id;
    std::size_t box_index = 0;  // index into the scene's raw detection list
    ClassId cls = ClassId::car;
    FilterOutcome outcome = FilterOutcome::kept;
  };
  std::vector<Record> records;

  std::array<std::size_t, kNumClasses> kept_per_class() const {
    std::array<std::size_t, kNumClasses> n{};
    for (const auto& r : records)
      if (r.outcome == FilterOutcome::kept) ++n[static_cast<int>(r.cls)];
    return n;
  }
  std::array<std::size_t, kNumClasses> removed_per_class() const {
    std::array<std::size_t, kNumClasses> n{};
    for (const auto& r : records)
      if (r.outcome != FilterOutcome::kept) ++n[static_cast<int>(r.cls)];
    return n;
  }
};

// Nearest-rank percentile: sort ascending, take the element at
// ceil(alpha/100 * n) - 1 (clamped). Deterministic, interpolation-free.
inline double percentile_nearest_rank(std::vector<double> values, double alpha) {
  if (values.empty()) throw ValidationError("percentile of empty value list");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  long rank = static_cast<long>(std::ceil(alpha / 100.0 * n)) - 1;
  rank = std::clamp<long>(rank, 0, static_cast<long>(values.size()) - 1);
  return values[static_cast<std::size_t>(rank)];
}

// Detections for one scene, ordered as produced by the detector.
struct SceneDetections {
  std::string scene_id;
  std::vector<LabeledBox> boxes;
};

// FB-F over one scene. Boxes with fewer than min_points_fbf contained points
// are removed (reason empty_box); otherwise a box is removed iff the
// alpha-percentile of its contained-point scores strictly exceeds gamma.
// Every input box gets a record, kept or removed.
inline std::pair<std::vector<LabeledBox>, std::vector<FilterReport::Record>> fbf_filter(
    const SceneDetections& dets, const PointCloud& world_cloud, const PPField& field,
    const FilterConfig& config) {
  validate_filter(config);
  if (world_cloud.points.size() != field.tau.size())
    throw ValidationError("fbf_filter: cloud/persistence field length mismatch");
  std::vector<LabeledBox> kept;
  std::vector<FilterReport::Record> records;
  records.reserve(dets.boxes.size());
  for (std::size_t b = 0; b < dets.boxes.size(); ++b) {
    const LabeledBox& box = dets.boxes[b];
    std::vector<double> taus;
    for (std::size_t i = 0; i < world_cloud.points.size(); ++i)
      if (box_contains(box, world_cloud.points[i])) taus.push_back(field.tau[i]);
    FilterOutcome outcome;
    if (taus.size() < config.min_points_fbf) {
      outcome = FilterOutcome::removed_empty_box;
    } else if (percentile_nearest_rank(std::move(taus), config.alpha_fbf) > config.gamma_fbf) {
      outcome = FilterOutcome::removed_fbf;
    } else {
      outcome = FilterOutcome::kept;
      kept.push_back(box);
    }
    records.push_back({dets.scene_id, b, box.cls, outcome});
  }
  return {std::move(kept), std::move(records)};
}

// Per-class pseudo-label budget over the whole target split:
//   floor(beta * (N_c^source / N_scenes^source) * N_scenes^target).
inline std::size_t pof_cap(ClassId cls, const FilterConfig& config,
                           std::size_t target_scene_count) {
  validate_filter(config);
  if (target_scene_count < 1) throw ValidationError("target_scene_count must be >= 1");
  const double expected = config.beta *
                          (config.source_class_counts[static_cast<int>(cls)] /
                           config.source_scene_count) *
                          static_cast<double>(target_scene_count);
  return static_cast<std::size_t>(std::floor(expected));
}

namespace detail {

// A box flowing through refinement, remembering where it came from.
struct TrackedBox {
  LabeledBox box;
  std::size_t raw_index;  // index in the scene's raw detection list
};

// PO-F core over tracked boxes. Keeps, per class, the `cap` most confident
// boxes across all scenes; ties break by scene_id then raw index (equivalent
// to a stable sort over the scene-ordered candidate list).
inline void pof_over_tracked(std::vector<std::vector<TrackedBox>>& scenes,
                             const std::vector<std::string>& scene_ids,
                             const FilterConfig& config, std::size_t target_scene_count,
                             std::vector<FilterReport::Record>& removal_records) {
  struct Candidate {
    std::size_t scene_slot;
    std::size_t box_slot;
    double confidence;
  };
  std::vector<std::vector<char>> keep(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) keep[s].assign(scenes[s].size(), 1);

  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<Candidate> candidates;
    for (std::size_t s = 0; s < scenes.size(); ++s)
      for (std::size_t b = 0; b < scenes[s].size(); ++b)
        if (static_cast<int>(scenes[s][b].box.cls) == c)
          candidates.push_back({s, b, scenes[s][b].box.confidence});
    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      if (scene_ids[a.scene_slot] != scene_ids[b.scene_slot])
        return scene_ids[a.scene_slot] < scene_ids[b.scene_slot];
      return scenes[a.scene_slot][a.box_slot].raw_index < scenes[b.scene_slot][b.box_slot].raw_index;
    });
    const std::size_t cap = pof_cap(class_from_index(c), config, target_scene_count);
    for (std::size_t k = cap; k < candidates.size(); ++k) {
      const Candidate& victim = candidates[k];
      keep[victim.scene_slot][victim.box_slot] = 0;
      removal_records.push_back({scene_ids[victim.scene_slot],
                                 scenes[victim.scene_slot][victim.box_slot].raw_index,
                                 class_from_index(c), FilterOutcome::removed_pof});
    }
  }
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    std::vector<TrackedBox> survivors;
    survivors.reserve(scenes[s].size());
    for (std::size_t b = 0; b < scenes[s].size(); ++b)
      if (keep[s][b]) survivors.push_back(std::move(scenes[s][b]));
    scenes[s] = std::move(survivors);
  }
}

}  // namespace detail

// Standalone PO-F over raw per-scene detections: returns the kept set.
inline std::vector<SceneDetections> pof_filter(const std::vector<SceneDetections>& scenes,
                                               const FilterConfig& config,
                                               std::size_t target_scene_count) {
  std::vector<std::vector<detail::TrackedBox>> tracked(scenes.size());
  std::vector<std::string> ids(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    ids[s] = scenes[s].scene_id;
    for (std::size_t b = 0; b < scenes[s].boxes.size(); ++b)
      tracked[s].push_back({scenes[s].boxes[b], b});
  }
  std::vector<FilterReport::Record> unused;
  detail::pof_over_tracked(tracked, ids, config, target_scene_count, unused);
  std::vector<SceneDetections> out(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    out[s].scene_id = ids[s];
    for (auto& tb : tracked[s]) out[s].boxes.push_back(tb.box);
  }
  return out;
}

// Everything a refinement pass needs to know about one scene.
struct SceneRefineContext {
  const PointCloud* world_cloud = nullptr;
  const PPField* field = nullptr;
};

struct RefineResult {
  std::vector<SceneDetections> pseudo_labels;  // provenance = pseudo_label
  FilterReport report;                         // one record per input box
};

// Full refinement: FB-F per scene first, then PO-F dataset-wide over the
// survivors. Disabled stages pass boxes through untouched. Output boxes carry
// pseudo_label provenance; the report covers every input box exactly once.
inline RefineResult refine_pseudo_labels(const std::vector<SceneDetections>& raw,
                                         const std::vector<SceneRefineContext>& contexts,
                                         const FilterConfig& config,
                                         bool enable_fbf = true, bool enable_pof = true) {
  if (enable_fbf && raw.size() != contexts.size())
    throw ValidationError("refine_pseudo_labels: scene/context count mismatch");
  RefineResult result;
  std::vector<std::vector<detail::TrackedBox>> tracked(raw.size());
  std::vector<std::string> ids(raw.size());
  std::vector<FilterReport::Record> removals;

  for (std::size_t s = 0; s < raw.size(); ++s) {
    ids[s] = raw[s].scene_id;
    if (enable_fbf) {
      auto [kept, records] = fbf_filter(raw[s], *contexts[s].world_cloud,
                                        *contexts[s].field, config);
      std::size_t kept_cursor = 0;
      for (const auto& r : records) {
        if (r.outcome == FilterOutcome::kept) {
          tracked[s].push_back({kept[kept_cursor++], r.box_index});
        } else {
          removals.push_back(r);
        }
      }
    } else {
      for (std::size_t b = 0; b < raw[s].boxes.size(); ++b)
        tracked[s].push_back({raw[s].boxes[b], b});
    }
  }

  if (enable_pof) {
    detail::pof_over_tracked(tracked, ids, config, raw.size(), removals);
  }

  result.pseudo_labels.resize(raw.size());
  for (std::size_t s = 0; s < raw.size(); ++s) {
    result.pseudo_labels[s].scene_id = ids[s];
    for (auto& tb : tracked[s]) {
      tb.box.provenance = BoxProvenance::pseudo_label;
      result.report.records.push_back({ids[s], tb.raw_index, tb.box.cls, FilterOutcome::kept});
      result.pseudo_labels[s].boxes.push_back(tb.box);
    }
  }
  result.report.records.insert(result.report.records.end(), removals.begin(), removals.end());
  std::sort(result.report.records.begin(), result.report.records.end(),
            [](const FilterReport::Record& a, const FilterReport::Record& b) {
              if (a.scene_id != b.scene_id) return a.scene_id < b.scene_id;
              return a.box_index < b.box_index;
            });
  return result;
}

}  // namespace tda
