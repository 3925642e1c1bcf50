#pragma once

// Shared geometric and label domain types used by every stage of the
// pipeline: points, rigid poses, clouds, oriented boxes, per-point labels.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tda {

// Validation failures (bad inputs, broken invariants).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem/parsing failures.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline bool is_finite(const Point3& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

inline double distance(const Point3& a, const Point3& b) {
  return std::sqrt(squared_distance(a, b));
}

using Mat3 = std::array<std::array<double, 3>, 3>;

// Rigid transform (row-major rotation, translation in meters).
struct Pose6DoF {
  Mat3 rotation = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  std::array<double, 3> translation = {0, 0, 0};

  Point3 apply(const Point3& p) const {
    const auto& r = rotation;
    return Point3{r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z + translation[0],
                  r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z + translation[1],
                  r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z + translation[2]};
  }

  // Inverse of a rigid transform: R^T, -R^T t.
  Pose6DoF inverse() const {
    Pose6DoF inv;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) inv.rotation[i][j] = rotation[j][i];
    for (int i = 0; i < 3; ++i) {
      inv.translation[i] = -(inv.rotation[i][0] * translation[0] +
                             inv.rotation[i][1] * translation[1] +
                             inv.rotation[i][2] * translation[2]);
    }
    return inv;
  }
};

inline double rotation_determinant(const Mat3& r) {
  return r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
         r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
         r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
}

// max |R^T R - I| over all entries.
inline double orthonormality_defect(const Mat3& r) {
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += r[k][i] * r[k][j];
      const double target = (i == j) ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(dot - target));
    }
  }
  return worst;
}

inline constexpr double kPoseTolerance = 1e-9;

inline void validate_pose(const Pose6DoF& pose) {
  for (const auto& row : pose.rotation)
    for (double v : row)
      if (!std::isfinite(v)) throw ValidationError("pose rotation has non-finite entry");
  for (double v : pose.translation)
    if (!std::isfinite(v)) throw ValidationError("pose translation has non-finite entry");
  if (std::abs(rotation_determinant(pose.rotation) - 1.0) > kPoseTolerance)
    throw ValidationError("pose rotation determinant differs from 1");
  if (orthonormality_defect(pose.rotation) > kPoseTolerance)
    throw ValidationError("pose rotation is not orthonormal");
}

inline Pose6DoF yaw_pose(double yaw, double tx = 0, double ty = 0, double tz = 0) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Pose6DoF pose;
  pose.rotation = {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
  pose.translation = {tx, ty, tz};
  return pose;
}

enum class Frame { sensor, world };

struct PointCloud {
  std::vector<Point3> points;
  Frame frame = Frame::sensor;
};

// Foreground classes. Order is fixed and shared with every per-class array.
inline constexpr int kNumClasses = 3;

enum class ClassId : int { car = 0, pedestrian = 1, cyclist = 2 };

inline const char* class_name(ClassId c) {
  switch (c) {
    case ClassId::car: return "Car";
    case ClassId::pedestrian: return "Pedestrian";
    case ClassId::cyclist: return "Cyclist";
  }
  throw ValidationError("invalid class id");
}

inline ClassId class_from_name(const std::string& name) {
  if (name == "Car") return ClassId::car;
  if (name == "Pedestrian") return ClassId::pedestrian;
  if (name == "Cyclist") return ClassId::cyclist;
  throw ValidationError("unknown class name: " + name);
}

inline ClassId class_from_index(int i) {
  if (i < 0 || i >= kNumClasses) throw ValidationError("class index out of range");
  return static_cast<ClassId>(i);
}

enum class BoxProvenance { ground_truth, pseudo_label, detection };

// Normalizes an angle to (-pi, pi].
inline double normalize_yaw(double yaw) {
  constexpr double kTwoPi = 6.283185307179586477;
  double a = std::fmod(yaw, kTwoPi);
  if (a <= -3.14159265358979323846) a += kTwoPi;
  if (a > 3.14159265358979323846) a -= kTwoPi;
  return a;
}

// Oriented 3D box: center, size (length along yaw direction, width, height).
struct LabeledBox {
  Point3 center;
  double length = 1.0;
  double width = 1.0;
  double height = 1.0;
  double yaw = 0.0;  // radians in (-pi, pi]
  ClassId cls = ClassId::car;
  double confidence = 1.0;
  BoxProvenance provenance = BoxProvenance::ground_truth;
};

inline LabeledBox make_box(Point3 center, double length, double width, double height,
                           double yaw, ClassId cls, double confidence,
                           BoxProvenance provenance) {
  if (!is_finite(center)) throw ValidationError("box center not finite");
  if (!(length > 0) || !(width > 0) || !(height > 0))
    throw ValidationError("box size components must be strictly positive");
  if (!(confidence >= 0.0 && confidence <= 1.0))
    throw ValidationError("box confidence outside [0,1]");
  if (provenance == BoxProvenance::ground_truth && confidence != 1.0)
    throw ValidationError("ground-truth boxes must carry confidence 1");
  if (!std::isfinite(yaw)) throw ValidationError("box yaw not finite");
  return LabeledBox{center, length, width, height, normalize_yaw(yaw),
                    cls,    confidence, provenance};
}

// One-vs-all class labels per point, {0,1}^{N_c}.
struct PointLabelSet {
  enum class Source { from_boxes, rewritten_fbs };
  using Row = std::array<std::uint8_t, kNumClasses>;
  std::vector<Row> labels;
  Source source = Source::from_boxes;
};

struct Scene {
  std::string scene_id;
  std::string location_id;
  std::string traversal_id;
  PointCloud cloud;     // sensor frame as loaded
  Pose6DoF sensor_pose; // sensor -> world
  std::optional<std::vector<LabeledBox>> gt_boxes;  // world frame; eval-only
};

// Sensor -> world. Rejects clouds already in the world frame and invalid poses.
inline PointCloud transform_cloud(const PointCloud& cloud, const Pose6DoF& pose) {
  if (cloud.frame != Frame::sensor)
    throw ValidationError("transform_cloud expects a sensor-frame cloud");
  validate_pose(pose);
  PointCloud out;
  out.frame = Frame::world;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) out.points.push_back(pose.apply(p));
  return out;
}

// True iff p lies inside the box (faces inclusive), in the yaw-aligned frame.
inline bool box_contains(const LabeledBox& box, const Point3& p) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double dx = p.x - box.center.x;
  const double dy = p.y - box.center.y;
  const double dz = p.z - box.center.z;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * box.length && std::abs(ly) <= 0.5 * box.width &&
         std::abs(dz) <= 0.5 * box.height;
}

}  // namespace tda
