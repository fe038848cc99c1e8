#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "coopsim/eval.hpp"
#include "coopsim/geom.hpp"

// Independent reference implementations used only to cross-check the
// library. They share no code with the primary paths: containment is
// re-derived from scratch and the average-precision formula uses the
// per-true-positive form instead of the envelope integral.
namespace oracle {

// Monte-Carlo-free rasterization IoU: overlay a fine grid on the joint
// bounding box and classify cell centers against each box independently.
inline double raster_iou(const coopsim::OrientedBox& a,
                         const coopsim::OrientedBox& b, int resolution = 1000) {
  struct Rect {
    double cx, cy, hl, hw, cos_r, sin_r;
    bool contains(double x, double y) const {
      const double dx = x - cx, dy = y - cy;
      const double u = dx * cos_r + dy * sin_r;
      const double v = -dx * sin_r + dy * cos_r;
      return std::abs(u) <= hl && std::abs(v) <= hw;
    }
  };
  const Rect ra{a.center.x, a.center.y, 0.5 * a.length, 0.5 * a.width,
                std::cos(a.yaw), std::sin(a.yaw)};
  const Rect rb{b.center.x, b.center.y, 0.5 * b.length, 0.5 * b.width,
                std::cos(b.yaw), std::sin(b.yaw)};

  const double reach_a = 0.5 * std::hypot(a.length, a.width);
  const double reach_b = 0.5 * std::hypot(b.length, b.width);
  const double x_lo = std::min(a.center.x - reach_a, b.center.x - reach_b);
  const double x_hi = std::max(a.center.x + reach_a, b.center.x + reach_b);
  const double y_lo = std::min(a.center.y - reach_a, b.center.y - reach_b);
  const double y_hi = std::max(a.center.y + reach_a, b.center.y + reach_b);

  const double sx = (x_hi - x_lo) / resolution;
  const double sy = (y_hi - y_lo) / resolution;
  long long in_a = 0, in_b = 0, in_both = 0;
  for (int i = 0; i < resolution; ++i) {
    const double y = y_lo + (i + 0.5) * sy;
    for (int j = 0; j < resolution; ++j) {
      const double x = x_lo + (j + 0.5) * sx;
      const bool ia = ra.contains(x, y);
      const bool ib = rb.contains(x, y);
      in_a += ia;
      in_b += ib;
      in_both += ia && ib;
    }
  }
  const long long uni = in_a + in_b - in_both;
  return uni > 0 ? static_cast<double>(in_both) / static_cast<double>(uni) : 0.0;
}

// Greedy matcher written as plain quadratic scans over the same definition:
// confidence order with lexicographic center tie-break, each detection takes
// the best remaining ground-truth box.
inline coopsim::FrameMatch naive_match(
    const std::vector<coopsim::Detection>& dets,
    const std::vector<coopsim::OrientedBox>& gts, double iou_threshold) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i) order.push_back(i);
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const auto& a = dets[order[i]];
      const auto& b = dets[order[j]];
      bool swap = false;
      if (a.confidence != b.confidence) {
        swap = b.confidence > a.confidence;
      } else if (a.box.center.x != b.box.center.x) {
        swap = b.box.center.x < a.box.center.x;
      } else if (a.box.center.y != b.box.center.y) {
        swap = b.box.center.y < a.box.center.y;
      } else {
        swap = b.box.center.z < a.box.center.z;
      }
      if (swap) std::swap(order[i], order[j]);
    }
  }

  coopsim::FrameMatch m;
  m.n_gt = static_cast<long long>(gts.size());
  std::vector<bool> used(gts.size(), false);
  for (std::size_t oi : order) {
    double best = 0.0;
    std::size_t pick = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double iou = coopsim::rotated_iou_bev(dets[oi].box, gts[g]);
      if (iou > best) {
        best = iou;
        pick = g;
      }
    }
    const bool tp = pick < gts.size() && best >= iou_threshold;
    if (tp) used[pick] = true;
    m.scored.push_back({dets[oi].confidence, tp});
  }
  return m;
}

// All-point average precision through the identity
//   AP = sum over true positives k of max_{j >= k} precision_j / n_gt,
// evaluated literally with a quadratic suffix scan.
inline double naive_ap(std::vector<coopsim::ScoredDetection> scored,
                       long long n_gt) {
  if (n_gt <= 0) return 0.0;
  std::stable_sort(scored.begin(), scored.end(),
                   [](const coopsim::ScoredDetection& a,
                      const coopsim::ScoredDetection& b) {
                     return a.confidence > b.confidence;
                   });
  std::vector<double> precision;
  long long tp = 0;
  for (std::size_t k = 0; k < scored.size(); ++k) {
    if (scored[k].tp) ++tp;
    precision.push_back(static_cast<double>(tp) /
                        static_cast<double>(k + 1));
  }
  double ap = 0.0;
  for (std::size_t k = 0; k < scored.size(); ++k) {
    if (!scored[k].tp) continue;
    double pmax = 0.0;
    for (std::size_t j = k; j < scored.size(); ++j)
      pmax = std::max(pmax, precision[j]);
    ap += pmax / static_cast<double>(n_gt);
  }
  return ap;
}

}  // namespace oracle
