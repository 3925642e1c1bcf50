#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tda/geometry.hpp"
#include "tda/random.hpp"
#include "tda/voxel_index.hpp"

using namespace tda;

namespace {

// Exhaustive O(n) oracle, the reference for every count.
std::size_t brute_force_count(const PointCloud& cloud, const Point3& q, double r) {
  std::size_t count = 0;
  for (const auto& p : cloud.points)
    if (distance(p, q) < r) ++count;
  return count;
}

PointCloud random_world_cloud(Rng& rng, std::size_t n, double extent) {
  PointCloud cloud;
  cloud.frame = Frame::world;
  for (std::size_t i = 0; i < n; ++i)
    cloud.points.push_back({rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                            rng.uniform(-extent, extent)});
  return cloud;
}

}  // namespace

TEST_CASE("index preserves the point count") {
  Rng rng(1);
  const PointCloud cloud = random_world_cloud(rng, 1000, 5.0);
  const VoxelIndex index(cloud, 0.3);
  CHECK(index.size() == 1000);
}

TEST_CASE("cell assignment follows the floor rule") {
  PointCloud cloud;
  cloud.frame = Frame::world;
  cloud.points.push_back({0.1, 0.1, 0.1});
  cloud.points.push_back({0.35, 0.1, 0.1});
  const VoxelIndex index(cloud, 0.3);
  // Points 0.25 m apart: both within r of each other's position.
  CHECK(index.count_within({0.1, 0.1, 0.1}) == 2);
  // A query in cell (3,0,0) cannot see cell (0..1,0,0) content beyond r.
  CHECK(index.count_within({1.0, 0.1, 0.1}) == 0);
}

TEST_CASE("empty cloud gives a valid empty index") {
  PointCloud cloud;
  cloud.frame = Frame::world;
  const VoxelIndex index(cloud, 0.3);
  CHECK(index.size() == 0);
  CHECK(index.count_within({0, 0, 0}) == 0);
}

TEST_CASE("a point at the query itself is counted (distance zero)") {
  PointCloud cloud;
  cloud.frame = Frame::world;
  cloud.points.push_back({1, 2, 3});
  const VoxelIndex index(cloud, 0.3);
  CHECK(index.count_within({1, 2, 3}) == 1);
}

TEST_CASE("a point at exactly the radius is not counted (strict inequality)") {
  PointCloud cloud;
  cloud.frame = Frame::world;
  cloud.points.push_back({0.3, 0, 0});
  const VoxelIndex index(cloud, 0.3);
  CHECK(index.count_within({0, 0, 0}) == 0);
  // Just inside is counted.
  cloud.points[0].x = std::nextafter(0.3, 0.0);
  const VoxelIndex index2(cloud, 0.3);
  CHECK(index2.count_within({0, 0, 0}) == 1);
}

TEST_CASE("counts equal the brute-force oracle on random clouds") {
  Rng rng(77);
  const PointCloud cloud = random_world_cloud(rng, 5000, 5.0);
  const VoxelIndex index(cloud, 0.3);
  for (int k = 0; k < 100; ++k) {
    const Point3 q{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    CHECK(index.count_within(q) == brute_force_count(cloud, q, 0.3));
  }
}

TEST_CASE("property: brute-force agreement across cloud sizes and radii") {
  Rng rng(1234);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(2000);
    const double extent = rng.uniform(2.0, 20.0);
    const double radius = rng.uniform(0.1, 2.0);
    const PointCloud cloud = random_world_cloud(rng, n, extent);
    const VoxelIndex index(cloud, radius);
    for (int k = 0; k < 25; ++k) {
      const Point3 q{rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                     rng.uniform(-extent, extent)};
      REQUIRE(index.count_within(q) == brute_force_count(cloud, q, radius));
    }
  }
}

TEST_CASE("counts are translation invariant") {
  Rng rng(9);
  const PointCloud cloud = random_world_cloud(rng, 800, 4.0);
  const Point3 shift{101.5, -47.25, 13.125};
  PointCloud moved = cloud;
  for (auto& p : moved.points) {
    p.x += shift.x;
    p.y += shift.y;
    p.z += shift.z;
  }
  const VoxelIndex a(cloud, 0.5);
  const VoxelIndex b(moved, 0.5);
  for (int k = 0; k < 50; ++k) {
    const Point3 q{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
    const Point3 qs{q.x + shift.x, q.y + shift.y, q.z + shift.z};
    CHECK(a.count_within(q) == b.count_within(qs));
  }
}

TEST_CASE("adding a point never decreases any count") {
  Rng rng(31);
  PointCloud cloud = random_world_cloud(rng, 300, 3.0);
  const VoxelIndex before(cloud, 0.4);
  cloud.points.push_back({rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)});
  const VoxelIndex after(cloud, 0.4);
  for (int k = 0; k < 100; ++k) {
    const Point3 q{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    CHECK(after.count_within(q) >= before.count_within(q));
  }
}

TEST_CASE("index rejects non-positive radii") {
  PointCloud cloud;
  cloud.frame = Frame::world;
  CHECK_THROWS_AS(VoxelIndex(cloud, 0.0), ValidationError);
}
