#pragma once

// Persistence prior scoring. For a query point q and T aggregated traversal
// clouds, count the neighbors of q within radius r in each traversal, turn
// the counts into a categorical distribution over traversals, and score q by
// the normalized entropy of that distribution:
//
//   tau = 0                 if every count is zero,
//   tau = H(P) / log(T)     otherwise.
//
// tau is near 1 for points whose neighborhood is occupied evenly across
// traversals (persistent background) and 0 for points seen in a single
// traversal only (ephemeral foreground).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tda/geometry.hpp"
#include "tda/parallel.hpp"
#include "tda/traversal_store.hpp"
#include "tda/voxel_index.hpp"

namespace tda {

struct PPConfig {
  double radius = 0.3;        // meters
  int max_traversals = 5;     // stores used per location
  bool exclude_self = false;  // drop the query scene's own traversal
  int threads = 1;
};

struct PPField {
  std::vector<std::vector<std::uint32_t>> counts;   // [point][traversal]
  std::vector<std::vector<double>> probabilities;   // [point][traversal]
  std::vector<double> tau;                          // [point], in [0,1]
  std::size_t traversal_count = 0;
  double radius = 0.0;
  bool exclude_self = false;
};

namespace detail {
// score_scene invocation counter; lets tests verify fields are computed once.
inline std::atomic<std::uint64_t>& pp_scene_eval_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}
}  // namespace detail

inline std::uint64_t pp_scene_evaluations() { return detail::pp_scene_eval_counter().load(); }
inline void reset_pp_scene_evaluations() { detail::pp_scene_eval_counter().store(0); }

// Per-traversal neighbor counts for one query point, in traversal order.
// `exclude` names a traversal to skip (the query's own); at least two
// traversals must remain or entropy normalization is degenerate.
inline std::vector<std::uint32_t> count_vector(const LocationIndices& loc, const Point3& q,
                                               const std::string* exclude = nullptr) {
  std::vector<std::uint32_t> counts;
  counts.reserve(loc.indices.size());
  for (std::size_t t = 0; t < loc.indices.size(); ++t) {
    if (exclude != nullptr && loc.traversal_ids[t] == *exclude) continue;
    counts.push_back(static_cast<std::uint32_t>(loc.indices[t].count_within(q)));
  }
  if (counts.size() < 2)
    throw ValidationError("persistence scoring needs at least 2 traversals; location " +
                          loc.location_id + " has " + std::to_string(counts.size()));
  return counts;
}

// Counts normalized to a categorical distribution. All-zero counts map to an
// all-zero vector, the marker for the zero branch of the score.
inline std::vector<double> normalize_counts(const std::vector<std::uint32_t>& counts) {
  std::uint64_t total = 0;
  for (std::uint32_t c : counts) total += c;
  std::vector<double> p(counts.size(), 0.0);
  if (total == 0) return p;
  for (std::size_t i = 0; i < counts.size(); ++i)
    p[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  return p;
}

// Normalized entropy of the count distribution, in [0,1].
//
// Evaluated in base-2 logs (the ratio is base-invariant) with the counts
// brought to a canonical order first, so the result is exact on uniform and
// two-way-uniform inputs and invariant under traversal permutation and
// common integer scaling of the counts.
inline double pp_score(const std::vector<std::uint32_t>& counts) {
  if (counts.size() < 2) throw ValidationError("pp_score needs at least 2 counts");
  const std::size_t t_count = counts.size();
  std::uint64_t total = 0;
  std::size_t nonzero = 0;
  bool all_equal_nonzero = true;
  std::uint32_t first_nonzero = 0;
  for (std::uint32_t c : counts) {
    total += c;
    if (c > 0) {
      if (nonzero == 0) first_nonzero = c;
      else if (c != first_nonzero) all_equal_nonzero = false;
      ++nonzero;
    }
  }
  if (nonzero == 0) return 0.0;  // never observed
  if (nonzero == 1) return 0.0;  // point mass, zero entropy
  const double log_t = std::log2(static_cast<double>(t_count));
  if (all_equal_nonzero) {
    if (nonzero == t_count) return 1.0;  // uniform over all traversals
    return std::log2(static_cast<double>(nonzero)) / log_t;
  }
  std::vector<double> p(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    p[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  std::sort(p.begin(), p.end(), std::greater<double>());
  double entropy = 0.0;
  for (double v : p) {
    if (v <= 0.0) break;  // zeros sorted to the back; 0*log(0) := 0
    entropy -= v * std::log2(v);
  }
  return std::clamp(entropy / log_t, 0.0, 1.0);
}

// Scores every point of a world-frame cloud against the location's traversal
// indices. Deterministic for any thread count.
inline PPField score_points(const PointCloud& world_cloud, const LocationIndices& loc,
                            const PPConfig& config, const std::string* exclude_traversal = nullptr) {
  if (world_cloud.frame != Frame::world)
    throw ValidationError("persistence scoring expects a world-frame cloud");
  const std::size_t used =
      std::min<std::size_t>(loc.indices.size(), static_cast<std::size_t>(config.max_traversals));
  PPField field;
  field.radius = loc.radius;
  field.exclude_self = exclude_traversal != nullptr;
  const std::size_t n = world_cloud.points.size();
  field.counts.resize(n);
  field.probabilities.resize(n);
  field.tau.resize(n);

  // Restrict to the first `used` traversals in manifest order.
  std::vector<const VoxelIndex*> indices;
  for (std::size_t t = 0; t < used; ++t) {
    if (exclude_traversal != nullptr && loc.traversal_ids[t] == *exclude_traversal) continue;
    indices.push_back(&loc.indices[t]);
  }
  if (indices.size() < 2)
    throw ValidationError("persistence scoring needs at least 2 traversals after exclusion; location " +
                          loc.location_id + " has " + std::to_string(indices.size()));
  field.traversal_count = indices.size();

  parallel_for(n, config.threads, [&](std::size_t i) {
    const Point3& q = world_cloud.points[i];
    std::vector<std::uint32_t> counts;
    counts.reserve(indices.size());
    for (const VoxelIndex* index : indices)
      counts.push_back(static_cast<std::uint32_t>(index->count_within(q)));
    field.probabilities[i] = normalize_counts(counts);
    field.tau[i] = pp_score(counts);
    field.counts[i] = std::move(counts);
  });
  return field;
}

// Convenience path: transform the scene's cloud into the world frame and
// score it against its location.
inline PPField score_scene(const Scene& scene, const TraversalStore& store,
                           const PPConfig& config) {
  detail::pp_scene_eval_counter().fetch_add(1);
  const auto entries = store.location_entries(scene.location_id);
  if (entries.empty())
    throw ValidationError("no traversal store for location " + scene.location_id);
  const LocationIndices loc = build_location_indices(store, scene.location_id, config.radius);
  const PointCloud world = transform_cloud(scene.cloud, scene.sensor_pose);
  const std::string* exclude = config.exclude_self ? &scene.traversal_id : nullptr;
  return score_points(world, loc, config, exclude);
}

// Same, with prebuilt indices (the hot path used by self-training).
inline PPField score_scene(const Scene& scene, const LocationIndices& loc,
                           const PPConfig& config) {
  detail::pp_scene_eval_counter().fetch_add(1);
  const PointCloud world = transform_cloud(scene.cloud, scene.sensor_pose);
  const std::string* exclude = config.exclude_self ? &scene.traversal_id : nullptr;
  return score_points(world, loc, config, exclude);
}

}  // namespace tda
