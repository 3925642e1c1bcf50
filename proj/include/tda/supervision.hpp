#pragma once

// Point-level supervision: persistence-guided label rewriting and the
// one-vs-all focal classification loss with analytic logit gradients.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "tda/geometry.hpp"

namespace tda {

struct FBSConfig {
  double tau_upper = 0.7;
  double tau_lower = 0.3;
};

inline void validate_fbs(const FBSConfig& c) {
  if (!(c.tau_lower < c.tau_upper))
    throw ValidationError("fbs config requires tau_lower < tau_upper");
}

struct FocalConfig {
  double alpha = 0.25;
  double gamma = 2.0;
};

inline void validate_focal(const FocalConfig& c) {
  if (!(c.alpha > 0.0 && c.alpha <= 1.0)) throw ValidationError("focal alpha outside (0,1]");
  if (!(c.gamma >= 0.0)) throw ValidationError("focal gamma must be >= 0");
}

// Rewrites per-point pseudo-labels with the persistence score:
//   tau > tau_upper                      -> all zeros (persistent background)
//   tau < tau_lower and label all-zero   -> all ones  (ephemeral, unlabeled)
//   otherwise                            -> unchanged
// Boundary values fall to the unchanged branch. Idempotent for a fixed field.
inline PointLabelSet fbs_rewrite(const PointLabelSet& labels, const std::vector<double>& tau,
                                 const FBSConfig& config) {
  validate_fbs(config);
  if (labels.labels.size() != tau.size())
    throw ValidationError("fbs_rewrite: label/tau length mismatch");
  PointLabelSet out;
  out.source = PointLabelSet::Source::rewritten_fbs;
  out.labels.resize(labels.labels.size());
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const auto& y = labels.labels[i];
    if (tau[i] > config.tau_upper) {
      out.labels[i] = {0, 0, 0};
      continue;
    }
    const bool all_zero = y[0] == 0 && y[1] == 0 && y[2] == 0;
    if (tau[i] < config.tau_lower && all_zero) {
      out.labels[i] = {1, 1, 1};
      continue;
    }
    out.labels[i] = y;
  }
  return out;
}

inline constexpr double kProbClip = 1e-7;

inline double clip_probability(double p) {
  return std::clamp(p, kProbClip, 1.0 - kProbClip);
}

// Focal loss over independent one-vs-all class probabilities,
//   L = -alpha * sum_c [ y_c (1-p_c)^g log p_c + (1-y_c) p_c^g log(1-p_c) ],
// nonnegative, zero only at (clipped) perfect predictions.
inline double focal_loss(const std::array<double, kNumClasses>& p,
                         const PointLabelSet::Row& y, const FocalConfig& config) {
  double sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    const double pc = clip_probability(p[c]);
    if (y[c]) {
      sum += std::pow(1.0 - pc, config.gamma) * std::log(pc);
    } else {
      sum += std::pow(pc, config.gamma) * std::log(1.0 - pc);
    }
  }
  return -config.alpha * sum;
}

// d(focal_loss)/d(logit_c) with p = sigmoid(logit), composed analytically.
inline std::array<double, kNumClasses> focal_loss_grad(
    const std::array<double, kNumClasses>& p, const PointLabelSet::Row& y,
    const FocalConfig& config) {
  std::array<double, kNumClasses> grad{};
  const double g = config.gamma;
  for (int c = 0; c < kNumClasses; ++c) {
    const double pc = clip_probability(p[c]);
    const double q = 1.0 - pc;
    double term;
    if (y[c]) {
      // d/dz of (1-p)^g log p, times the sigmoid derivative p(1-p).
      term = -g * pc * std::pow(q, g) * std::log(pc) + std::pow(q, g) * q;
    } else {
      term = g * std::pow(pc, g) * q * std::log(q) - std::pow(pc, g) * pc;
    }
    grad[c] = -config.alpha * term;
  }
  return grad;
}

// One-hot labels from boxes: each point takes the class of the
// highest-confidence box containing it; points in no box stay all-zero.
// Confidence ties break toward the earlier box, so the result is stable.
inline PointLabelSet labels_from_boxes(const PointCloud& cloud,
                                       const std::vector<LabeledBox>& boxes) {
  PointLabelSet out;
  out.source = PointLabelSet::Source::from_boxes;
  out.labels.assign(cloud.points.size(), {0, 0, 0});
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    double best_confidence = -1.0;
    int best_class = -1;
    for (const auto& box : boxes) {
      if (box.confidence > best_confidence && box_contains(box, cloud.points[i])) {
        best_confidence = box.confidence;
        best_class = static_cast<int>(box.cls);
      }
    }
    if (best_class >= 0) out.labels[i][best_class] = 1;
  }
  return out;
}

}  // namespace tda
