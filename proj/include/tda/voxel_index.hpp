#pragma once

// Voxel-hash index over a world-frame cloud for exact fixed-radius queries.
// Cell size equals the query radius, so every query only has to examine the
// 3x3x3 cell neighborhood. Immutable after construction; concurrent queries
// are safe.

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "tda/geometry.hpp"

namespace tda {

class VoxelIndex {
 public:
  VoxelIndex() = default;

  VoxelIndex(const PointCloud& cloud, double radius) : radius_(radius) {
    if (!(radius > 0.0)) throw ValidationError("voxel index radius must be > 0");
    cells_.reserve(cloud.points.size() / 2 + 1);
    std::uint32_t idx = 0;
    for (const auto& p : cloud.points) {
      if (!is_finite(p)) throw ValidationError("voxel index input point not finite");
      Cell& cell = cells_[key_of(p)];
      cell.points.push_back(p);
      cell.indices.push_back(idx++);
    }
    total_ = cloud.points.size();
  }

  std::size_t size() const { return total_; }
  double radius() const { return radius_; }

  // Exact count of indexed points with strict distance < radius from q.
  std::size_t count_within(const Point3& q) const {
    std::size_t count = 0;
    visit_neighborhood(q, [&](const Point3&, std::uint32_t) { ++count; });
    return count;
  }

  // Calls fn(point, original_index) for every indexed point strictly within
  // the radius of q.
  template <typename Fn>
  void visit_neighborhood(const Point3& q, Fn&& fn) const {
    if (total_ == 0) return;
    const double r2 = radius_ * radius_;
    const std::int64_t ci = coord(q.x);
    const std::int64_t cj = coord(q.y);
    const std::int64_t ck = coord(q.z);
    for (std::int64_t di = -1; di <= 1; ++di) {
      for (std::int64_t dj = -1; dj <= 1; ++dj) {
        for (std::int64_t dk = -1; dk <= 1; ++dk) {
          const auto it = cells_.find(pack(ci + di, cj + dj, ck + dk));
          if (it == cells_.end()) continue;
          const Cell& cell = it->second;
          for (std::size_t n = 0; n < cell.points.size(); ++n) {
            if (squared_distance(cell.points[n], q) < r2) fn(cell.points[n], cell.indices[n]);
          }
        }
      }
    }
  }

 private:
  struct Cell {
    std::vector<Point3> points;
    std::vector<std::uint32_t> indices;
  };

  struct KeyHash {
    std::size_t operator()(const std::array<std::int64_t, 3>& k) const {
      std::uint64_t h = 0x9e3779b97f4a7c15ULL;
      for (std::int64_t v : k) {
        std::uint64_t z = static_cast<std::uint64_t>(v) + h;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        h = z ^ (z >> 31);
      }
      return static_cast<std::size_t>(h);
    }
  };

  std::int64_t coord(double v) const {
    return static_cast<std::int64_t>(std::floor(v / radius_));
  }

  static std::array<std::int64_t, 3> pack(std::int64_t i, std::int64_t j, std::int64_t k) {
    return {i, j, k};
  }

  std::array<std::int64_t, 3> key_of(const Point3& p) const {
    return {coord(p.x), coord(p.y), coord(p.z)};
  }

  std::unordered_map<std::array<std::int64_t, 3>, Cell, KeyHash> cells_;
  std::size_t total_ = 0;
  double radius_ = 0.0;
};

}  // namespace tda
