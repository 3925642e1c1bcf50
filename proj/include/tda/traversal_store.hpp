#pragma once

// Aggregated world-frame point clouds per (location, traversal), the dense
// reference clouds that persistence scoring counts neighbors in.

#include <string>
#include <vector>

#include "tda/geometry.hpp"
#include "tda/voxel_index.hpp"

namespace tda {

struct TraversalStore {
  struct Entry {
    std::string location_id;
    std::string traversal_id;
    PointCloud cloud;  // world frame, nonempty
  };

  std::vector<Entry> entries;  // manifest order

  std::vector<const Entry*> location_entries(const std::string& location_id) const {
    std::vector<const Entry*> found;
    for (const auto& e : entries)
      if (e.location_id == location_id) found.push_back(&e);
    return found;
  }
};

// Per-location voxel indices, one per traversal, built once and shared by all
// scene queries at that location.
struct LocationIndices {
  std::string location_id;
  std::vector<std::string> traversal_ids;  // manifest order
  std::vector<VoxelIndex> indices;
  double radius = 0.0;
};

inline LocationIndices build_location_indices(const TraversalStore& store,
                                              const std::string& location_id,
                                              double radius) {
  const auto entries = store.location_entries(location_id);
  if (entries.empty())
    throw ValidationError("no traversal store entries for location " + location_id);
  LocationIndices out;
  out.location_id = location_id;
  out.radius = radius;
  for (const TraversalStore::Entry* e : entries) {
    out.traversal_ids.push_back(e->traversal_id);
    out.indices.emplace_back(e->cloud, radius);
  }
  return out;
}

}  // namespace tda
