#pragma once

// Detection metrics: rotated-rectangle BEV IoU and 3D IoU, greedy
// confidence-ordered matching (IoU or BEV center distance), R40 average
// precision, depth-range breakdown and distance-matched mAP.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tda/geometry.hpp"

namespace tda {

struct EvalConfig {
  // {primary, loose} IoU thresholds per class.
  std::array<std::array<double, 2>, kNumClasses> iou_thresholds = {{{0.7, 0.5},
                                                                    {0.5, 0.25},
                                                                    {0.5, 0.25}}};
  std::vector<std::array<double, 2>> depth_bins = {{0, 30}, {30, 50}, {50, 80}, {0, 80}};
  std::vector<double> distance_thresholds = {0.5, 1.0, 2.0, 4.0};
  bool frontal_only = false;
  int recall_positions = 40;
};

namespace detail {

struct Vec2 {
  double x, y;
};

inline std::array<Vec2, 4> bev_corners(const LabeledBox& b) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double hl = 0.5 * b.length;
  const double hw = 0.5 * b.width;
  // Counter-clockwise.
  const std::array<Vec2, 4> local = {{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  std::array<Vec2, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {b.center.x + c * local[i].x - s * local[i].y,
              b.center.y + s * local[i].x + c * local[i].y};
  }
  return out;
}

inline double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    twice += a.x * b.y - a.y * b.x;
  }
  return 0.5 * std::abs(twice);
}

// Sutherland-Hodgman clip of a convex polygon by the half-plane left of a->b.
inline std::vector<Vec2> clip_halfplane(const std::vector<Vec2>& poly, Vec2 a, Vec2 b) {
  std::vector<Vec2> out;
  const auto side = [&](const Vec2& p) {
    return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
  };
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& cur = poly[i];
    const Vec2& nxt = poly[(i + 1) % n];
    const double sc = side(cur);
    const double sn = side(nxt);
    if (sc >= 0.0) out.push_back(cur);
    if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
      const double t = sc / (sc - sn);
      out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
    }
  }
  return out;
}

inline double rect_intersection_area(const LabeledBox& a, const LabeledBox& b) {
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  std::vector<Vec2> poly(ca.begin(), ca.end());
  for (int i = 0; i < 4 && !poly.empty(); ++i) {
    poly = clip_halfplane(poly, cb[i], cb[(i + 1) % 4]);
  }
  return polygon_area(poly);
}

}  // namespace detail

// BEV IoU of two yaw-rotated footprints. Degenerate footprints score 0.
inline double bev_iou(const LabeledBox& a, const LabeledBox& b) {
  const double area_a = a.length * a.width;
  const double area_b = b.length * b.width;
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double inter = detail::rect_intersection_area(a, b);
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// 3D IoU: BEV intersection times vertical overlap, over the volume union.
inline double iou_3d(const LabeledBox& a, const LabeledBox& b) {
  const double vol_a = a.length * a.width * a.height;
  const double vol_b = b.length * b.width * b.height;
  if (vol_a <= 0.0 || vol_b <= 0.0) return 0.0;
  const double zlo = std::max(a.center.z - 0.5 * a.height, b.center.z - 0.5 * b.height);
  const double zhi = std::min(a.center.z + 0.5 * a.height, b.center.z + 0.5 * b.height);
  const double dz = zhi - zlo;
  if (dz <= 0.0) return 0.0;
  const double inter = detail::rect_intersection_area(a, b) * dz;
  const double uni = vol_a + vol_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

struct MatchCriterion {
  enum class Kind { iou_bev, iou_3d, center_distance };
  Kind kind = Kind::iou_bev;
  double threshold = 0.5;  // IoU >= threshold, or BEV center distance <= threshold
};

struct MatchResult {
  // Aligned with the input detection list. Detections dropped by the frontal
  // filter are neither tp nor fp (included == false).
  std::vector<char> det_included;
  std::vector<char> det_tp;
  std::vector<int> det_matched_gt;  // -1 if unmatched
  std::vector<char> gt_included;
  std::vector<char> gt_matched;
};

inline double bev_center_distance(const LabeledBox& a, const LabeledBox& b) {
  const double dx = a.center.x - b.center.x;
  const double dy = a.center.y - b.center.y;
  return std::sqrt(dx * dx + dy * dy);
}

// Sensor-frame position of a world point.
inline Point3 to_sensor_frame(const Point3& world, const Pose6DoF& sensor_pose) {
  return sensor_pose.inverse().apply(world);
}

inline double horizontal_range(const Point3& world, const Pose6DoF& sensor_pose) {
  const Point3 s = to_sensor_frame(world, sensor_pose);
  return std::sqrt(s.x * s.x + s.y * s.y);
}

// Greedy matching within one scene and class: detections in confidence order
// each claim the best still-unmatched ground-truth box that satisfies the
// criterion; one match per ground truth.
inline MatchResult match_detections(const std::vector<LabeledBox>& dets,
                                    const std::vector<LabeledBox>& gts,
                                    const MatchCriterion& criterion, bool frontal_only,
                                    const Pose6DoF& sensor_pose) {
  MatchResult r;
  r.det_included.assign(dets.size(), 1);
  r.det_tp.assign(dets.size(), 0);
  r.det_matched_gt.assign(dets.size(), -1);
  r.gt_included.assign(gts.size(), 1);
  r.gt_matched.assign(gts.size(), 0);
  if (frontal_only) {
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (to_sensor_frame(dets[i].center, sensor_pose).x <= 0.0) r.det_included[i] = 0;
    for (std::size_t i = 0; i < gts.size(); ++i)
      if (to_sensor_frame(gts[i].center, sensor_pose).x <= 0.0) r.gt_included[i] = 0;
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i)
    if (r.det_included[i]) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].confidence != dets[b].confidence)
      return dets[a].confidence > dets[b].confidence;
    return a < b;
  });
  for (std::size_t d : order) {
    int best = -1;
    double best_score = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (!r.gt_included[g] || r.gt_matched[g]) continue;
      double score;
      bool ok;
      switch (criterion.kind) {
        case MatchCriterion::Kind::iou_bev:
          score = bev_iou(dets[d], gts[g]);
          ok = score >= criterion.threshold;
          break;
        case MatchCriterion::Kind::iou_3d:
          score = iou_3d(dets[d], gts[g]);
          ok = score >= criterion.threshold;
          break;
        case MatchCriterion::Kind::center_distance:
          score = -bev_center_distance(dets[d], gts[g]);
          ok = -score <= criterion.threshold;
          break;
      }
      if (!ok) continue;
      if (best < 0 || score > best_score) {
        best = static_cast<int>(g);
        best_score = score;
      }
    }
    if (best >= 0) {
      r.det_tp[d] = 1;
      r.det_matched_gt[d] = best;
      r.gt_matched[best] = 1;
    }
  }
  return r;
}

// R40 average precision: precision sampled at recall positions {1/N..N/N},
// each taken as the maximum precision among prefixes reaching at least that
// recall. Returns nullopt when there is no ground truth.
inline std::optional<double> average_precision(const std::vector<char>& tp_sequence,
                                               std::size_t gt_count,
                                               int recall_positions = 40) {
  if (gt_count == 0) return std::nullopt;
  const std::size_t n = tp_sequence.size();
  std::vector<double> recall(n), precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp_sequence[i]) ++tp;
    recall[i] = static_cast<double>(tp) / static_cast<double>(gt_count);
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // Right-to-left envelope: best precision at recall >= recall[i].
  std::vector<double> envelope(n);
  double run = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    run = std::max(run, precision[i]);
    envelope[i] = run;
  }
  double sum = 0.0;
  std::size_t cursor = 0;
  for (int k = 1; k <= recall_positions; ++k) {
    const double target = static_cast<double>(k) / static_cast<double>(recall_positions);
    while (cursor < n && recall[cursor] < target) ++cursor;
    if (cursor < n) sum += envelope[cursor];
    // Recall never reaches the target: precision contribution is zero.
  }
  return sum / static_cast<double>(recall_positions);
}

struct PRCurve {
  struct RawEntry {
    double confidence;
    bool tp;
  };
  std::vector<RawEntry> raw;                         // confidence-descending
  std::vector<std::array<double, 2>> samples;        // (recall, precision), cumulative
};

struct EvalScene {
  std::string scene_id;
  Pose6DoF sensor_pose;
  std::vector<LabeledBox> detections;
  std::vector<LabeledBox> ground_truth;
};

struct CellMetrics {
  double ap_bev_primary = 0.0;
  double ap_bev_loose = 0.0;
  double ap_3d_primary = 0.0;
  double ap_3d_loose = 0.0;
  double distance_map = 0.0;
  std::size_t gt_count = 0;
  bool defined = false;  // false when the bin holds no ground truth
};

struct MetricReport {
  std::vector<std::array<double, 2>> depth_bins;
  // cells[class][bin]
  std::array<std::vector<CellMetrics>, kNumClasses> cells;
  std::array<PRCurve, kNumClasses> pr_curves;  // full range, primary BEV IoU

  const CellMetrics& cell(ClassId cls, std::size_t bin) const {
    return cells[static_cast<int>(cls)][bin];
  }
};

namespace detail {

struct BinnedDet {
  double confidence;
  bool tp;
  double bin_range;  // matched gt range for tp, own range for fp
  std::size_t scene;
  std::size_t index;
};

// Matches every scene with one criterion and returns the dataset-wide
// confidence-sorted detection records for a class.
inline std::vector<BinnedDet> gather_matches(const std::vector<EvalScene>& scenes,
                                             ClassId cls, const MatchCriterion& criterion,
                                             bool frontal_only) {
  std::vector<BinnedDet> recs;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& scene = scenes[s];
    std::vector<LabeledBox> dets, gts;
    std::vector<std::size_t> det_ids;
    for (std::size_t i = 0; i < scene.detections.size(); ++i) {
      if (scene.detections[i].cls == cls) {
        dets.push_back(scene.detections[i]);
        det_ids.push_back(i);
      }
    }
    for (const auto& g : scene.ground_truth)
      if (g.cls == cls) gts.push_back(g);
    const MatchResult m = match_detections(dets, gts, criterion, frontal_only, scene.sensor_pose);
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (!m.det_included[d]) continue;
      const double range = m.det_tp[d]
          ? horizontal_range(gts[static_cast<std::size_t>(m.det_matched_gt[d])].center,
                             scene.sensor_pose)
          : horizontal_range(dets[d].center, scene.sensor_pose);
      recs.push_back({dets[d].confidence, m.det_tp[d] != 0, range, s, det_ids[d]});
    }
  }
  std::sort(recs.begin(), recs.end(), [](const BinnedDet& a, const BinnedDet& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.scene != b.scene) return a.scene < b.scene;
    return a.index < b.index;
  });
  return recs;
}

inline std::optional<double> binned_ap(const std::vector<BinnedDet>& recs,
                                       const std::array<double, 2>& bin,
                                       std::size_t gt_count, int recall_positions) {
  std::vector<char> seq;
  for (const auto& r : recs)
    if (r.bin_range >= bin[0] && r.bin_range < bin[1]) seq.push_back(r.tp ? 1 : 0);
  return average_precision(seq, gt_count, recall_positions);
}

}  // namespace detail

// Full evaluation table: class x depth-bin cells of AP_BEV / AP_3D at both
// IoU thresholds plus the distance-matched mAP, and per-class PR curves.
inline MetricReport metric_report(const std::vector<EvalScene>& scenes,
                                  const EvalConfig& config) {
  MetricReport report;
  report.depth_bins = config.depth_bins;
  for (int c = 0; c < kNumClasses; ++c) {
    const ClassId cls = class_from_index(c);

    // Ground-truth counts per bin (by sensor-frame horizontal range).
    std::vector<std::size_t> gt_counts(config.depth_bins.size(), 0);
    for (const auto& scene : scenes) {
      for (const auto& g : scene.ground_truth) {
        if (g.cls != cls) continue;
        if (config.frontal_only && to_sensor_frame(g.center, scene.sensor_pose).x <= 0.0)
          continue;
        const double range = horizontal_range(g.center, scene.sensor_pose);
        for (std::size_t b = 0; b < config.depth_bins.size(); ++b)
          if (range >= config.depth_bins[b][0] && range < config.depth_bins[b][1])
            ++gt_counts[b];
      }
    }

    const auto& thr = config.iou_thresholds[c];
    const auto bev_p = detail::gather_matches(
        scenes, cls, {MatchCriterion::Kind::iou_bev, thr[0]}, config.frontal_only);
    const auto bev_l = detail::gather_matches(
        scenes, cls, {MatchCriterion::Kind::iou_bev, thr[1]}, config.frontal_only);
    const auto iou3d_p = detail::gather_matches(
        scenes, cls, {MatchCriterion::Kind::iou_3d, thr[0]}, config.frontal_only);
    const auto iou3d_l = detail::gather_matches(
        scenes, cls, {MatchCriterion::Kind::iou_3d, thr[1]}, config.frontal_only);
    std::vector<std::vector<detail::BinnedDet>> dist_recs;
    for (double t : config.distance_thresholds)
      dist_recs.push_back(detail::gather_matches(
          scenes, cls, {MatchCriterion::Kind::center_distance, t}, config.frontal_only));

    auto& cells = report.cells[c];
    cells.resize(config.depth_bins.size());
    for (std::size_t b = 0; b < config.depth_bins.size(); ++b) {
      CellMetrics& cell = cells[b];
      cell.gt_count = gt_counts[b];
      cell.defined = gt_counts[b] > 0;
      const auto& bin = config.depth_bins[b];
      const int rp = config.recall_positions;
      cell.ap_bev_primary = detail::binned_ap(bev_p, bin, gt_counts[b], rp).value_or(0.0);
      cell.ap_bev_loose = detail::binned_ap(bev_l, bin, gt_counts[b], rp).value_or(0.0);
      cell.ap_3d_primary = detail::binned_ap(iou3d_p, bin, gt_counts[b], rp).value_or(0.0);
      cell.ap_3d_loose = detail::binned_ap(iou3d_l, bin, gt_counts[b], rp).value_or(0.0);
      if (cell.defined) {
        double sum = 0.0;
        for (const auto& recs : dist_recs)
          sum += detail::binned_ap(recs, bin, gt_counts[b], rp).value_or(0.0);
        cell.distance_map = sum / static_cast<double>(config.distance_thresholds.size());
      }
    }

    // PR curve from the primary-threshold full-range matching.
    PRCurve& curve = report.pr_curves[c];
    std::size_t full_gt = 0;
    if (!config.depth_bins.empty()) full_gt = gt_counts.back();
    std::size_t tp = 0, seen = 0;
    const auto& full_bin = config.depth_bins.back();
    for (const auto& r : bev_p) {
      if (!(r.bin_range >= full_bin[0] && r.bin_range < full_bin[1])) continue;
      curve.raw.push_back({r.confidence, r.tp});
      ++seen;
      if (r.tp) ++tp;
      const double recall = full_gt == 0 ? 0.0
                                         : static_cast<double>(tp) / static_cast<double>(full_gt);
      curve.samples.push_back({recall, static_cast<double>(tp) / static_cast<double>(seen)});
    }
  }
  return report;
}

}  // namespace tda
