#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tda/geometry.hpp"
#include "tda/random.hpp"

using namespace tda;

namespace {

// Independent affine oracle: plain row-by-row multiply, written separately
// from Pose6DoF::apply.
Point3 affine_oracle(const Mat3& r, const std::array<double, 3>& t, const Point3& p) {
  const double in[3] = {p.x, p.y, p.z};
  double out[3];
  for (int i = 0; i < 3; ++i) {
    out[i] = t[i];
    for (int j = 0; j < 3; ++j) out[i] += r[i][j] * in[j];
  }
  return {out[0], out[1], out[2]};
}

Pose6DoF random_pose(Rng& rng) {
  const double a = rng.uniform(-3.0, 3.0);
  const double b = rng.uniform(-1.5, 1.5);
  const double c = rng.uniform(-3.0, 3.0);
  const double ca = std::cos(a), sa = std::sin(a);
  const double cb = std::cos(b), sb = std::sin(b);
  const double cc = std::cos(c), sc = std::sin(c);
  // Rz(a) * Ry(b) * Rx(c)
  Pose6DoF pose;
  pose.rotation = {{{ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc},
                    {sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc},
                    {-sb, cb * sc, cb * cc}}};
  pose.translation = {rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
  return pose;
}

PointCloud random_cloud(Rng& rng, std::size_t n) {
  PointCloud cloud;
  cloud.frame = Frame::sensor;
  for (std::size_t i = 0; i < n; ++i)
    cloud.points.push_back({rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-5, 5)});
  return cloud;
}

}  // namespace

TEST_CASE("transform_cloud with identity pose returns the same points") {
  Rng rng(7);
  const PointCloud cloud = random_cloud(rng, 50);
  const PointCloud out = transform_cloud(cloud, Pose6DoF{});
  REQUIRE(out.frame == Frame::world);
  REQUIRE(out.points.size() == cloud.points.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    CHECK(out.points[i].x == cloud.points[i].x);
    CHECK(out.points[i].y == cloud.points[i].y);
    CHECK(out.points[i].z == cloud.points[i].z);
  }
}

TEST_CASE("quarter turn about z maps (1,0,0) to (0,1,0)") {
  PointCloud cloud;
  cloud.points.push_back({1, 0, 0});
  const PointCloud out = transform_cloud(cloud, yaw_pose(M_PI / 2));
  CHECK(out.points[0].x == Catch::Approx(0.0).margin(1e-15));
  CHECK(out.points[0].y == Catch::Approx(1.0).epsilon(1e-15));
  CHECK(out.points[0].z == 0.0);
}

TEST_CASE("transform_cloud matches the per-point affine oracle") {
  Rng rng(42);
  const Pose6DoF pose = random_pose(rng);
  const PointCloud cloud = random_cloud(rng, 100);
  const PointCloud out = transform_cloud(cloud, pose);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Point3 expect = affine_oracle(pose.rotation, pose.translation, cloud.points[i]);
    CHECK(out.points[i].x == Catch::Approx(expect.x).margin(1e-12));
    CHECK(out.points[i].y == Catch::Approx(expect.y).margin(1e-12));
    CHECK(out.points[i].z == Catch::Approx(expect.z).margin(1e-12));
  }
}

TEST_CASE("transform round trip through the inverse pose recovers the cloud") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose6DoF pose = random_pose(rng);
    const PointCloud cloud = random_cloud(rng, 30);
    PointCloud world = transform_cloud(cloud, pose);
    world.frame = Frame::sensor;  // retag to feed back through
    const PointCloud back = transform_cloud(world, pose.inverse());
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
      CHECK(back.points[i].x == Catch::Approx(cloud.points[i].x).margin(1e-9));
      CHECK(back.points[i].y == Catch::Approx(cloud.points[i].y).margin(1e-9));
      CHECK(back.points[i].z == Catch::Approx(cloud.points[i].z).margin(1e-9));
    }
  }
}

TEST_CASE("transform_cloud rejects non-orthonormal rotations") {
  Pose6DoF pose;
  pose.rotation[0][0] = 1.5;
  PointCloud cloud;
  cloud.points.push_back({0, 0, 0});
  CHECK_THROWS_AS(transform_cloud(cloud, pose), ValidationError);
}

TEST_CASE("transform_cloud rejects world-frame input") {
  PointCloud cloud;
  cloud.points.push_back({0, 0, 0});
  cloud.frame = Frame::world;
  CHECK_THROWS_AS(transform_cloud(cloud, Pose6DoF{}), ValidationError);
}

TEST_CASE("box_contains on the unit cube") {
  const LabeledBox box = make_box({0, 0, 0}, 1, 1, 1, 0, ClassId::car, 1.0,
                                  BoxProvenance::ground_truth);
  CHECK(box_contains(box, {0, 0, 0}));
  CHECK_FALSE(box_contains(box, {0.51, 0, 0}));
}

TEST_CASE("box_contains with yaw: point rotated into the box frame by hand") {
  const LabeledBox box = make_box({0, 0, 0}, 2, 1, 1, M_PI / 4, ClassId::car, 1.0,
                                  BoxProvenance::ground_truth);
  const double c = std::cos(M_PI / 4);
  CHECK(box_contains(box, {0.9 * c, 0.9 * c, 0}));
  // Same radius along the box's width axis is outside (width/2 = 0.5 < 0.9).
  CHECK_FALSE(box_contains(box, {-0.9 * c, 0.9 * c, 0}));
}

TEST_CASE("box corners: shrunk corners inside, expanded corners outside") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const LabeledBox box = make_box(
        {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-2, 2)}, rng.uniform(0.5, 4),
        rng.uniform(0.5, 3), rng.uniform(0.5, 2), rng.uniform(-3.1, 3.1), ClassId::car, 1.0,
        BoxProvenance::ground_truth);
    const double cy = std::cos(box.yaw), sy = std::sin(box.yaw);
    for (int sx = -1; sx <= 1; sx += 2) {
      for (int sy2 = -1; sy2 <= 1; sy2 += 2) {
        for (int sz = -1; sz <= 1; sz += 2) {
          for (double scale : {1.0 - 1e-9, 1.0 + 1e-9}) {
            const double lx = sx * scale * box.length / 2;
            const double ly = sy2 * scale * box.width / 2;
            const double lz = sz * scale * box.height / 2;
            const Point3 p{box.center.x + cy * lx - sy * ly,
                           box.center.y + sy * lx + cy * ly, box.center.z + lz};
            if (scale < 1.0) {
              CHECK(box_contains(box, p));
            } else {
              CHECK_FALSE(box_contains(box, p));
            }
          }
        }
      }
    }
  }
}

TEST_CASE("box_contains is invariant under a joint rigid transform") {
  Rng rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    const LabeledBox box = make_box(
        {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-2, 2)}, rng.uniform(0.5, 4),
        rng.uniform(0.5, 3), rng.uniform(0.5, 2), rng.uniform(-3.1, 3.1), ClassId::car, 1.0,
        BoxProvenance::ground_truth);
    const Point3 p{rng.uniform(-7, 7), rng.uniform(-7, 7), rng.uniform(-3, 3)};
    const bool before = box_contains(box, p);

    // Yaw-only rigid transform keeps the box axis-expressible.
    const Pose6DoF pose = yaw_pose(rng.uniform(-3, 3), rng.uniform(-10, 10),
                                   rng.uniform(-10, 10), rng.uniform(-2, 2));
    LabeledBox moved = box;
    moved.center = pose.apply(box.center);
    moved.yaw = normalize_yaw(box.yaw + std::atan2(pose.rotation[1][0], pose.rotation[0][0]));
    const bool after = box_contains(moved, pose.apply(p));
    // Boundary-exact points could flip; keep the sample away from faces.
    CHECK(before == after);
  }
}

TEST_CASE("make_box validates invariants") {
  CHECK_THROWS_AS(make_box({0, 0, 0}, 0.0, 1, 1, 0, ClassId::car, 1.0,
                           BoxProvenance::ground_truth),
                  ValidationError);
  CHECK_THROWS_AS(make_box({0, 0, 0}, 1, 1, 1, 0, ClassId::car, 1.5,
                           BoxProvenance::detection),
                  ValidationError);
  CHECK_THROWS_AS(make_box({0, 0, 0}, 1, 1, 1, 0, ClassId::car, 0.9,
                           BoxProvenance::ground_truth),
                  ValidationError);
  const LabeledBox b = make_box({0, 0, 0}, 1, 1, 1, 3 * M_PI, ClassId::car, 1.0,
                                BoxProvenance::ground_truth);
  CHECK(b.yaw == Catch::Approx(M_PI));
  CHECK(b.yaw <= M_PI);
  CHECK(b.yaw > -M_PI);
}

TEST_CASE("yaw normalization lands in (-pi, pi]") {
  CHECK(normalize_yaw(M_PI) == Catch::Approx(M_PI));
  CHECK(normalize_yaw(-M_PI) == Catch::Approx(M_PI));
  CHECK(normalize_yaw(2 * M_PI) == Catch::Approx(0.0).margin(1e-12));
  Rng rng(23);
  for (int i = 0; i < 200; ++i) {
    const double y = normalize_yaw(rng.uniform(-50, 50));
    CHECK(y > -M_PI - 1e-12);
    CHECK(y <= M_PI + 1e-12);
  }
}
