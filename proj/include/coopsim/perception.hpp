#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coopsim/codec.hpp"
#include "coopsim/comm.hpp"
#include "coopsim/errors.hpp"
#include "coopsim/feature_map.hpp"
#include "coopsim/geom.hpp"
#include "coopsim/scenario.hpp"

namespace coopsim {

// Numerically safe softmax: shifts by the max before exponentiating.
inline std::vector<double> softmax_stable(std::span<const double> scores) {
  std::vector<double> out(scores.size());
  if (scores.empty()) return out;
  const double m = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// Per-cell scaled dot-product attention over the contributing maps. The
// default projections are identity and the temperature is sqrt(channels).
struct AttentionParams {
  int dim = 0;
  std::vector<double> wq, wk, wv;  // row-major dim x dim
  double temperature = 1.0;

  static AttentionParams identity(int dim) {
    AttentionParams p;
    p.dim = dim;
    p.wq.assign(static_cast<std::size_t>(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i) p.wq[static_cast<std::size_t>(i) * dim + i] = 1.0;
    p.wk = p.wq;
    p.wv = p.wq;
    p.temperature = std::sqrt(static_cast<double>(dim));
    return p;
  }

  void validate() const {
    const auto n = static_cast<std::size_t>(dim) * dim;
    if (dim <= 0 || wq.size() != n || wk.size() != n || wv.size() != n)
      throw InternalError("attention: projection shape mismatch");
    if (!(temperature > 0.0))
      throw InternalError("attention: temperature must be > 0");
  }
};

struct FuseOptions {
  // When set, vehicles contributing an all-zero feature vector at a cell
  // are left out of that cell's softmax, so lone observers pass through
  // unscaled instead of being averaged toward zero.
  bool mask_empty = false;
};

namespace detail {

inline void matvec(std::span<const double> w, std::span<const double> x,
                   std::span<double> out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += w[i * n + j] * x[j];
    out[i] = s;
  }
}

struct CellAttention {
  std::vector<int> contributors;   // cav ids included at this cell
  std::vector<double> weights;     // softmax weights, same order
  std::vector<double> fused;       // fused feature vector
};

inline CellAttention attend_cell(
    const std::vector<std::pair<int, const BevFeatureMap*>>& maps,
    std::size_t ego_index, int i, int j, const AttentionParams& params,
    const FuseOptions& opts) {
  const int dim = params.dim;
  CellAttention cell;
  cell.fused.assign(static_cast<std::size_t>(dim), 0.0);

  std::vector<std::vector<double>> features;
  for (const auto& [id, map] : maps) {
    std::vector<double> x(static_cast<std::size_t>(dim));
    bool any = false;
    for (int c = 0; c < dim; ++c) {
      x[static_cast<std::size_t>(c)] = map->at(i, j, c);
      any = any || x[static_cast<std::size_t>(c)] != 0.0;
    }
    if (opts.mask_empty && !any) continue;
    cell.contributors.push_back(id);
    features.push_back(std::move(x));
  }
  if (cell.contributors.empty()) return cell;

  std::vector<double> ego_x(static_cast<std::size_t>(dim));
  for (int c = 0; c < dim; ++c)
    ego_x[static_cast<std::size_t>(c)] = maps[ego_index].second->at(i, j, c);
  std::vector<double> q(static_cast<std::size_t>(dim));
  matvec(params.wq, ego_x, q);

  std::vector<double> scores(features.size());
  std::vector<double> key(static_cast<std::size_t>(dim));
  for (std::size_t n = 0; n < features.size(); ++n) {
    matvec(params.wk, features[n], key);
    double dot = 0.0;
    for (int c = 0; c < dim; ++c)
      dot += q[static_cast<std::size_t>(c)] * key[static_cast<std::size_t>(c)];
    scores[n] = dot / params.temperature;
  }
  cell.weights = softmax_stable(scores);

  std::vector<double> value(static_cast<std::size_t>(dim));
  for (std::size_t n = 0; n < features.size(); ++n) {
    matvec(params.wv, features[n], value);
    for (int c = 0; c < dim; ++c)
      cell.fused[static_cast<std::size_t>(c)] +=
          cell.weights[n] * value[static_cast<std::size_t>(c)];
  }
  return cell;
}

inline std::vector<std::pair<int, const BevFeatureMap*>> ordered_maps(
    const std::map<int, BevFeatureMap>& maps, int ego_id,
    std::size_t& ego_index) {
  if (maps.empty()) throw InternalError("attentive_fuse: no maps");
  std::vector<std::pair<int, const BevFeatureMap*>> out;
  out.reserve(maps.size());
  const BevFeatureMap* first = &maps.begin()->second;
  bool found = false;
  for (const auto& [id, map] : maps) {
    if (!map.same_shape(*first) || map.frame_id != first->frame_id)
      throw InternalError("attentive_fuse: map shape or frame mismatch");
    if (id == ego_id) {
      ego_index = out.size();
      found = true;
    }
    out.emplace_back(id, &map);
  }
  if (!found) throw InternalError("attentive_fuse: ego map missing");
  return out;
}

}  // namespace detail

// Fuses per-vehicle maps (already aligned to the ego grid) cell by cell.
// The ego's feature vector forms the query; every contributing map supplies
// a key and value. Maps iterate in id order, so the result is independent
// of how the caller assembled them.
inline BevFeatureMap attentive_fuse(const std::map<int, BevFeatureMap>& maps,
                                    int ego_id, const AttentionParams& params,
                                    const FuseOptions& opts = {}) {
  params.validate();
  std::size_t ego_index = 0;
  const auto ordered = detail::ordered_maps(maps, ego_id, ego_index);
  const BevFeatureMap& ego_map = *ordered[ego_index].second;
  if (params.dim != ego_map.grid.channels())
    throw InternalError("attentive_fuse: params dim != channels");

  BevFeatureMap fused(ego_map.grid, ego_map.frame_id);
  const int h = ego_map.grid.height(), w = ego_map.grid.width();
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const auto cell = detail::attend_cell(ordered, ego_index, i, j, params, opts);
      for (int c = 0; c < params.dim; ++c)
        fused.at(i, j, c) =
            static_cast<float>(cell.fused[static_cast<std::size_t>(c)]);
    }
  }
  return fused;
}

// Diagnostic view of one cell's attention: (cav id, weight) pairs for the
// contributors actually included there.
inline std::vector<std::pair<int, double>> attention_weights_at(
    const std::map<int, BevFeatureMap>& maps, int ego_id,
    const AttentionParams& params, int i, int j, const FuseOptions& opts = {}) {
  params.validate();
  std::size_t ego_index = 0;
  const auto ordered = detail::ordered_maps(maps, ego_id, ego_index);
  const auto cell = detail::attend_cell(ordered, ego_index, i, j, params, opts);
  std::vector<std::pair<int, double>> out;
  for (std::size_t n = 0; n < cell.contributors.size(); ++n)
    out.emplace_back(cell.contributors[n], cell.weights[n]);
  return out;
}

struct Detection {
  OrientedBox box;
  double confidence = 0.0;
  int source = -1;  // producing vehicle, -1 for fused output
};

enum class FitMode { kAuto, kMoments, kPoints, kCellCenters };

struct DetectorConfig {
  double occupied_threshold = 0.0;  // on the log-count channel, strict
  double min_mass = 1.0;            // minimum summed log-count
  double kappa = 5.0;               // confidence saturation scale
  FitMode fit = FitMode::kAuto;
  // A lidar only returns the faces turned toward it, so a raw fit describes
  // the visible surface, not the vehicle. The fitter completes each box
  // toward these fleet-prior dimensions, anchored at the observed near side.
  double prior_length = 4.5;
  double prior_width = 2.0;
  // An axis extent at least this fraction of its prior counts as fully
  // observed and keeps its measured center.
  double observed_fraction = 0.8;
  double min_dim = 0.8;
  double max_dim = 18.0;
  double ground_z = -1.9;   // ground height in the map frame
  double min_height = 0.5;
  double max_height = 3.2;
  // The sensor rides above every vehicle roof, so returns above its own
  // horizontal plane can only come from buildings and other structures.
  // Cells with such returns never join a vehicle cluster.
  double structure_z = 0.0;
};

namespace detail {

// Orientation score for assigning the candidate length axis: deficits are
// expected under partial visibility, but an extent beyond its prior means
// the assignment is wrong, so excess is penalized harder.
inline double axis_fit_score(double extent, double prior) {
  const double deficit = std::max(0.0, prior - extent) / prior;
  const double excess = std::max(0.0, extent - 1.15 * prior) / prior;
  return deficit + 4.0 * excess;
}

// One axis of the amodal completion. The visible span [lo, hi] is trusted;
// when it falls short of the prior the box grows away from the sensor,
// whose coordinate on this axis is s. Between frac and full coverage the
// center slides from the anchored estimate to the span midpoint, so a view
// truncated just past the threshold keeps its near edge pinned.
inline void complete_axis(double lo, double hi, double prior, double frac,
                          double s, double& center, double& dim) {
  const double extent = hi - lo;
  dim = std::max(extent, prior);
  const double mid = 0.5 * (lo + hi);
  if (s > lo && s < hi) {
    center = mid;
    return;
  }
  const double anchored = s <= lo ? lo + 0.5 * dim : hi - 0.5 * dim;
  const double t =
      std::clamp((extent / prior - frac) / (1.0 - frac), 0.0, 1.0);
  center = t * mid + (1.0 - t) * anchored;
}

// Surface points hug the boundary of the footprint, so the right frame is
// the one where each point sits near an edge. For every candidate angle the
// points are split by whichever axis they are closer to an edge on, and the
// variance of those edge distances is minimized. A minimum-area rectangle
// cannot do this: the enclosing rectangles of an L-shaped two-face view tie
// in area across all side alignments, and the diagonal one often wins.
inline double edge_variance(const std::vector<Vec2>& pts, double theta) {
  const double cs = std::cos(theta), sn = std::sin(theta);
  double u_min = std::numeric_limits<double>::infinity(), u_max = -u_min;
  double v_min = u_min, v_max = -u_min;
  for (const auto& p : pts) {
    const double u = p.x * cs + p.y * sn;
    const double v = -p.x * sn + p.y * cs;
    u_min = std::min(u_min, u);
    u_max = std::max(u_max, u);
    v_min = std::min(v_min, v);
    v_max = std::max(v_max, v);
  }
  double s1 = 0.0, q1 = 0.0, n1 = 0.0;
  double s2 = 0.0, q2 = 0.0, n2 = 0.0;
  for (const auto& p : pts) {
    const double u = p.x * cs + p.y * sn;
    const double v = -p.x * sn + p.y * cs;
    const double du = std::min(u - u_min, u_max - u);
    const double dv = std::min(v - v_min, v_max - v);
    if (du < dv) {
      s1 += du;
      q1 += du * du;
      n1 += 1.0;
    } else {
      s2 += dv;
      q2 += dv * dv;
      n2 += 1.0;
    }
  }
  const double var1 = n1 > 0.0 ? std::max(0.0, q1 / n1 - (s1 / n1) * (s1 / n1)) : 0.0;
  const double var2 = n2 > 0.0 ? std::max(0.0, q2 / n2 - (s2 / n2) * (s2 / n2)) : 0.0;
  return var1 + var2;
}

inline double lshape_orientation(const std::vector<Vec2>& pts) {
  std::vector<Vec2> sub;
  const std::vector<Vec2>* search = &pts;
  if (pts.size() > 400) {
    const std::size_t stride = (pts.size() + 399) / 400;
    for (std::size_t i = 0; i < pts.size(); i += stride) sub.push_back(pts[i]);
    search = &sub;
  }
  const double step = kPi / 180.0;
  double best = 0.0, best_score = edge_variance(*search, 0.0);
  for (int k = 1; k < 90; ++k) {
    const double theta = k * step;
    const double s = edge_variance(*search, theta);
    if (s < best_score) {
      best_score = s;
      best = theta;
    }
  }
  const double fine = kPi / 1800.0;
  double refined = best;
  for (int k = -10; k <= 10; ++k) {
    if (k == 0) continue;
    const double theta = best + k * fine;
    const double s = edge_variance(*search, theta);
    if (s < best_score) {
      best_score = s;
      refined = theta;
    }
  }
  return refined;
}

// A cell's moment stick: principal direction plus a vote weight favoring
// well-populated, elongated cells, whose direction is a clean face reading.
struct CellStick {
  double theta = 0.0;
  double weight = 0.0;
};

// Fits an oriented box to surface observations. The axis pair comes from a
// weighted circular vote of the cells' stick directions when the cluster is
// mostly reconstructed from moments, and from the edge-variance search
// otherwise; the prior decides which axis is the length and how far the
// hidden sides extend. Hidden sides grow away from the observing sensor;
// with several candidate viewpoints the nearest one to the cluster is
// taken, since return density falls off with range and the nearest sensor
// contributed most of the surface.
inline FittedRect amodal_fit(const std::vector<Vec2>& pts,
                             const DetectorConfig& cfg,
                             std::span<const Vec2> sensors,
                             std::span<const CellStick> sticks = {},
                             std::size_t n_real = std::size_t(-1)) {
  Vec2 anchor{0.0, 0.0};
  if (!sensors.empty()) {
    Vec2 centroid{0.0, 0.0};
    for (const auto& p : pts) {
      centroid.x += p.x;
      centroid.y += p.y;
    }
    centroid.x /= static_cast<double>(pts.size());
    centroid.y /= static_cast<double>(pts.size());
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : sensors) {
      const double d = std::hypot(s.x - centroid.x, s.y - centroid.y);
      if (d < best) {
        best = d;
        anchor = s;
      }
    }
  }
  // Clusters rebuilt mostly from moment sticks carry too few and too
  // synthetic points for the edge-variance search; the stick directions
  // themselves are the better signal there. Directions live mod pi/2 (a
  // face stick may read the length or the width axis), so the vote runs on
  // the 4x angle and is only trusted when it comes out coherent.
  double yaw;
  double vote_c = 0.0, vote_s = 0.0, vote_w = 0.0;
  for (const auto& st : sticks) {
    vote_c += st.weight * std::cos(4.0 * st.theta);
    vote_s += st.weight * std::sin(4.0 * st.theta);
    vote_w += st.weight;
  }
  if (n_real < 20 && vote_w > 1e-9 &&
      std::hypot(vote_c, vote_s) > 0.5 * vote_w) {
    yaw = 0.25 * std::atan2(vote_s, vote_c);
  } else {
    yaw = lshape_orientation(pts);
  }
  double cs = std::cos(yaw), sn = std::sin(yaw);
  double u_min = std::numeric_limits<double>::infinity(), u_max = -u_min;
  double v_min = u_min, v_max = -u_min;
  for (const auto& p : pts) {
    const double u = p.x * cs + p.y * sn;
    const double v = -p.x * sn + p.y * cs;
    u_min = std::min(u_min, u);
    u_max = std::max(u_max, u);
    v_min = std::min(v_min, v);
    v_max = std::max(v_max, v);
  }
  const double score_a = axis_fit_score(u_max - u_min, cfg.prior_length) +
                         axis_fit_score(v_max - v_min, cfg.prior_width);
  const double score_b = axis_fit_score(v_max - v_min, cfg.prior_length) +
                         axis_fit_score(u_max - u_min, cfg.prior_width);
  if (score_b < score_a - 1e-12) {
    yaw += 0.5 * kPi;
    cs = std::cos(yaw);
    sn = std::sin(yaw);
    const double nv_min = -u_max, nv_max = -u_min;
    u_min = v_min;
    u_max = v_max;
    v_min = nv_min;
    v_max = nv_max;
  }
  const double su = anchor.x * cs + anchor.y * sn;
  const double sv = -anchor.x * sn + anchor.y * cs;
  double out_u, out_v, len, wid;
  complete_axis(u_min, u_max, cfg.prior_length, cfg.observed_fraction, su,
                out_u, len);
  complete_axis(v_min, v_max, cfg.prior_width, cfg.observed_fraction, sv,
                out_v, wid);
  if (n_real < 20) {
    // Stick endpoints overshoot around corner cells, where face points from
    // two walls mix in one cell; with mostly synthetic evidence an extent
    // beyond the prior is more overshoot than vehicle.
    len = cfg.prior_length + 0.4 * std::max(0.0, len - cfg.prior_length);
    wid = cfg.prior_width + 0.4 * std::max(0.0, wid - cfg.prior_width);
  }
  FittedRect fit;
  fit.center = {out_u * cs - out_v * sn, out_u * sn + out_v * cs};
  fit.length = len;
  fit.width = wid;
  fit.yaw = rect_yaw_mod_pi(yaw);
  return fit;
}

}  // namespace detail

// Clusters occupied cells (8-connected) and fits one amodal box per
// component. Observations per cell are the member points when a cloud
// covers the cell; cells the cloud does not reach fall back to the stored
// moments, expanded into a principal-axis stick of virtual points (a
// uniform stick of variance v spans 2*sqrt(3v)). Without moment channels
// the cell centers stand in. So a fused map is fitted from the ego's own
// raw points where it has coverage and from transmitted moments elsewhere.
// sensors lists the viewpoints that produced the map, in map coordinates;
// empty means a single sensor at the origin. Confidence saturates with
// component mass: 1 - exp(-mass / kappa).
inline std::vector<Detection> detect(const BevFeatureMap& map,
                                     const DetectorConfig& cfg,
                                     const PointCloud* points = nullptr,
                                     std::span<const Vec2> sensors = {}) {
  const int h = map.grid.height(), w = map.grid.width();
  FitMode mode = cfg.fit;
  if (mode == FitMode::kAuto) {
    if (map.grid.moment_channels) mode = FitMode::kMoments;
    else if (points) mode = FitMode::kPoints;
    else mode = FitMode::kCellCenters;
  }
  if (mode == FitMode::kMoments && !map.grid.moment_channels)
    throw InternalError("detect: moment fit needs moment channels");
  if (mode == FitMode::kPoints && !points)
    throw InternalError("detect: point fit needs points");

  std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
  auto occupied = [&](int i, int j) {
    return map.at(i, j, kChLogCount) > cfg.occupied_threshold &&
           map.at(i, j, kChMaxZ) <= cfg.structure_z;
  };

  std::vector<std::vector<std::pair<int, int>>> components;
  std::vector<std::pair<int, int>> stack;
  for (int si = 0; si < h; ++si) {
    for (int sj = 0; sj < w; ++sj) {
      const std::size_t sk = static_cast<std::size_t>(si) * w + sj;
      if (label[sk] >= 0 || !occupied(si, sj)) continue;
      const int id = static_cast<int>(components.size());
      components.emplace_back();
      label[sk] = id;
      stack.clear();
      stack.emplace_back(si, sj);
      while (!stack.empty()) {
        const auto [ci, cj] = stack.back();
        stack.pop_back();
        components[static_cast<std::size_t>(id)].emplace_back(ci, cj);
        for (int di = -1; di <= 1; ++di) {
          for (int dj = -1; dj <= 1; ++dj) {
            if (di == 0 && dj == 0) continue;
            const int ni = ci + di, nj = cj + dj;
            if (ni < 0 || ni >= h || nj < 0 || nj >= w) continue;
            const std::size_t nk = static_cast<std::size_t>(ni) * w + nj;
            if (label[nk] >= 0 || !occupied(ni, nj)) continue;
            label[nk] = id;
            stack.emplace_back(ni, nj);
          }
        }
      }
    }
  }

  // Points binned by component for the point-based fits, plus a per-cell
  // tally so moment cells already covered by real points skip their sticks.
  std::vector<std::vector<Vec2>> member_points;
  std::vector<double> member_max_z;
  std::vector<int> cell_points(static_cast<std::size_t>(h) * w, 0);
  if (points && mode != FitMode::kCellCenters) {
    member_points.resize(components.size());
    member_max_z.assign(components.size(),
                        -std::numeric_limits<double>::infinity());
    for (const auto& p : points->points) {
      int i, j;
      if (!map.grid.cell_of(p.x, p.y, i, j)) continue;
      const std::size_t k = static_cast<std::size_t>(i) * w + j;
      const int id = label[k];
      if (id < 0) continue;
      ++cell_points[k];
      member_points[static_cast<std::size_t>(id)].push_back({p.x, p.y});
      member_max_z[static_cast<std::size_t>(id)] =
          std::max(member_max_z[static_cast<std::size_t>(id)], p.z);
    }
  }

  std::vector<Detection> out;
  for (std::size_t id = 0; id < components.size(); ++id) {
    const auto& cells = components[id];
    double mass = 0.0;
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& [i, j] : cells) {
      mass += map.at(i, j, kChLogCount);
      top = std::max(top, static_cast<double>(map.at(i, j, kChMaxZ)));
    }
    if (mass < cfg.min_mass) continue;

    std::vector<Vec2> obs;
    std::vector<detail::CellStick> sticks;
    std::size_t n_real = std::size_t(-1);
    if (mode == FitMode::kMoments) {
      if (points) {
        obs = member_points[id];
        top = std::max(top, member_max_z[id]);
      }
      n_real = obs.size();
      // Each uncovered cell becomes its centroid plus the endpoints of its
      // principal sticks, reconstructing the visible surface from stored
      // moments.
      for (const auto& [i, j] : cells) {
        if (cell_points[static_cast<std::size_t>(i) * w + j] > 0) continue;
        const double n = std::expm1(
            std::min<double>(map.at(i, j, kChLogCount), 20.0));
        if (n <= 0.0) continue;
        const Vec2 cc = map.grid.cell_center(i, j);
        const double px = cc.x + map.at(i, j, kChMeanDx);
        const double py = cc.y + map.at(i, j, kChMeanDy);
        const double sxx = std::max(0.0, double(map.at(i, j, kChVarXx)));
        const double syy = std::max(0.0, double(map.at(i, j, kChVarYy)));
        const double sxy = map.at(i, j, kChVarXy);
        const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
        const double half_sum = 0.5 * (sxx + syy);
        const double half_diff =
            std::sqrt(0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy);
        // The uniform-stick inversion overshoots on clumped in-cell
        // distributions, so thin evidence is shrunk toward zero and the
        // prior completion makes up the difference.
        const double shrink = n / (n + 3.0);
        const double major =
            shrink * std::sqrt(3.0 * std::max(0.0, half_sum + half_diff));
        const double minor =
            shrink * std::sqrt(3.0 * std::max(0.0, half_sum - half_diff));
        const double cs = std::cos(theta), sn = std::sin(theta);
        // The generating points all lay inside this cell, so the stick may
        // not leave it; near-empty cells carry too little for a stick at all.
        const double half = 0.5 * map.grid.cell_m;
        auto push_clamped = [&](double x, double y) {
          obs.push_back({std::clamp(x, cc.x - half, cc.x + half),
                         std::clamp(y, cc.y - half, cc.y + half)});
        };
        push_clamped(px, py);
        if (n >= 3.0) {
          push_clamped(px + cs * major, py + sn * major);
          push_clamped(px - cs * major, py - sn * major);
          push_clamped(px - sn * minor, py + cs * minor);
          push_clamped(px + sn * minor, py - cs * minor);
          if (major > 0.05)
            sticks.push_back({theta, n * major * (1.0 - minor / major)});
        }
      }
      if (obs.empty()) continue;
    } else if (mode == FitMode::kPoints) {
      obs = member_points[id];
      if (obs.empty()) continue;
      top = std::max(top, member_max_z[id]);
    } else {
      obs.reserve(cells.size());
      for (const auto& [i, j] : cells)
        obs.push_back(map.grid.cell_center(i, j));
    }
    const FittedRect rect = detail::amodal_fit(obs, cfg, sensors, sticks, n_real);

    const double length = std::clamp(rect.length, cfg.min_dim, cfg.max_dim);
    const double width = std::clamp(rect.width, cfg.min_dim, cfg.max_dim);
    const double height =
        std::clamp(top - cfg.ground_z, cfg.min_height, cfg.max_height);
    Detection det;
    det.box = OrientedBox({rect.center.x, rect.center.y,
                           cfg.ground_z + 0.5 * height},
                          length, width, height, rect.yaw);
    det.confidence = 1.0 - std::exp(-mass / cfg.kappa);
    out.push_back(det);
  }
  return out;
}

// Greedy non-maximum suppression in descending confidence order; ties break
// toward the lexicographically smaller center so the result is a pure
// function of the input set.
inline std::vector<Detection> nms(std::vector<Detection> dets,
                                  double iou_threshold) {
  std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    const auto& ca = a.box.center;
    const auto& cb = b.box.center;
    if (ca.x != cb.x) return ca.x < cb.x;
    if (ca.y != cb.y) return ca.y < cb.y;
    return ca.z < cb.z;
  });
  std::vector<Detection> kept;
  for (const auto& det : dets) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (rotated_iou_bev(det.box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(det);
  }
  return kept;
}

enum class Strategy { kNoFusion, kEarly, kLate, kIntermediate };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kNoFusion: return "no_fusion";
    case Strategy::kEarly: return "early";
    case Strategy::kLate: return "late";
    case Strategy::kIntermediate: return "intermediate";
  }
  throw InternalError("strategy_name: bad enum value");
}

inline Strategy strategy_from_name(const std::string& name) {
  for (int i = 0; i < 4; ++i) {
    const auto s = static_cast<Strategy>(i);
    if (name == strategy_name(s)) return s;
  }
  throw UsageError("unknown strategy '" + name + "'");
}

struct Message {
  int from = -1;
  int to = -1;
  std::size_t bytes = 0;
};

struct CommReport {
  std::vector<Message> messages;

  std::size_t total_bytes() const {
    std::size_t sum = 0;
    for (const auto& m : messages) sum += m.bytes;
    return sum;
  }
  double total_transmit_time_s(const LinkModel& link) const {
    double t = 0.0;
    for (const auto& m : messages)
      t += transmit_time_s(static_cast<double>(m.bytes), link);
    return t;
  }
};

struct PipelineConfig {
  GridSpec grid{-140.0, 140.0, -40.0, 40.0, 4.0, true};
  DetectorConfig detector;
  CodecSpec codec{1, 1, 8, 0};
  double nms_iou = 0.15;
  double broadcast_range_m = 70.0;
  // Received clouds include returns off the ego's own body; anything fitted
  // this close to the origin is the ego itself, which is not a target.
  double self_exclusion_m = 3.0;
  LinkModel link;
  bool mask_empty = true;
  double temperature = 0.0;  // 0 selects sqrt(channels)
  std::size_t early_bytes_per_point = 16;   // f32 x, y, z, intensity
  std::size_t late_bytes_per_detection = 40;  // box, confidence, id

  AttentionParams attention_params() const {
    AttentionParams p = AttentionParams::identity(grid.channels());
    if (temperature > 0.0) p.temperature = temperature;
    return p;
  }
};

struct PipelineResult {
  std::vector<Detection> detections;  // in the ego sensor frame
  CommReport comm;
};

namespace detail {

inline void audit_messages(const CommReport& report, const CommGraph& graph) {
  for (const auto& m : report.messages) {
    if (!graph.connected(m.from, m.to))
      throw InternalError("pipeline produced a message outside the comm graph: " +
                          std::to_string(m.from) + " -> " + std::to_string(m.to));
  }
}

}  // namespace detail

// Runs one perception strategy for the ego on one frame. Only vehicles
// within broadcast range of the ego contribute, and every transmitted byte is
// accounted against the graph. cav_subset, when given, restricts which
// connected vehicles exist at all (the first entry of frame.cav_ids must
// still be the ego's id for subset runs that include the ego).
inline PipelineResult run_pipeline(const Frame& frame, int ego_id, Strategy strategy,
                                   const PipelineConfig& cfg,
                                   const std::vector<int>* cav_subset = nullptr) {
  const std::vector<int>& cavs = cav_subset ? *cav_subset : frame.cav_ids;
  if (std::find(cavs.begin(), cavs.end(), ego_id) == cavs.end())
    throw InternalError("run_pipeline: ego not in the active set");
  std::map<int, Pose> cav_poses;
  for (int id : cavs) {
    auto it = frame.true_poses.find(id);
    if (it == frame.true_poses.end())
      throw InternalError("run_pipeline: missing pose for vehicle " +
                          std::to_string(id));
    cav_poses[id] = it->second;
    if (!frame.clouds.count(id))
      throw InternalError("run_pipeline: missing cloud for vehicle " +
                          std::to_string(id));
  }
  const CommGraph graph = build_comm_graph(cav_poses, cfg.broadcast_range_m);
  std::vector<int> senders;
  for (int id : graph.neighbors(ego_id))
    if (id != ego_id) senders.push_back(id);

  const PointCloud& ego_cloud = frame.clouds.at(ego_id);
  const std::string ego_frame = cav_frame_name(ego_id);
  const Pose ego_noisy = frame.noisy_poses.at(ego_id);

  auto sender_transform = [&](int id) {
    return compose(invert(ego_noisy), frame.noisy_poses.at(id));
  };

  // Viewpoints contributing to a shared map, in the ego frame: the ego at
  // the origin plus every sender at its communicated pose.
  std::vector<Vec2> viewpoints{{0.0, 0.0}};
  for (int id : senders) {
    const Pose t = sender_transform(id);
    viewpoints.push_back({t.translation.x, t.translation.y});
  }

  PipelineResult result;

  switch (strategy) {
    case Strategy::kNoFusion: {
      const BevFeatureMap map = extract_bev_features(ego_cloud, cfg.grid);
      result.detections = nms(detect(map, cfg.detector, &ego_cloud), cfg.nms_iou);
      break;
    }
    case Strategy::kEarly: {
      PointCloud merged;
      merged.frame_id = ego_frame;
      merged.points = ego_cloud.points;
      for (int id : senders) {
        const PointCloud& cloud = frame.clouds.at(id);
        const PointCloud moved = transform_points(
            sender_transform(id), cloud, cav_frame_name(id), ego_frame);
        merged.points.insert(merged.points.end(), moved.points.begin(),
                             moved.points.end());
        result.comm.messages.push_back(
            {id, ego_id, cfg.early_bytes_per_point * cloud.points.size()});
      }
      const BevFeatureMap map = extract_bev_features(merged, cfg.grid);
      result.detections =
          nms(detect(map, cfg.detector, &merged, viewpoints), cfg.nms_iou);
      break;
    }
    case Strategy::kLate: {
      auto local_detections = [&](int id) {
        const PointCloud& cloud = frame.clouds.at(id);
        const BevFeatureMap map = extract_bev_features(cloud, cfg.grid);
        auto dets = nms(detect(map, cfg.detector, &cloud), cfg.nms_iou);
        for (auto& d : dets) d.source = id;
        return dets;
      };
      std::vector<Detection> merged = local_detections(ego_id);
      for (int id : senders) {
        auto dets = local_detections(id);
        const Pose t = sender_transform(id);
        for (auto& d : dets) {
          const Vec3 c = t.apply(d.box.center);
          d.box = OrientedBox(c, d.box.length, d.box.width, d.box.height,
                              d.box.yaw + t.yaw);
          merged.push_back(d);
        }
        result.comm.messages.push_back(
            {id, ego_id, cfg.late_bytes_per_detection * dets.size()});
      }
      result.detections = nms(std::move(merged), cfg.nms_iou);
      break;
    }
    case Strategy::kIntermediate: {
      std::map<int, BevFeatureMap> contributions;
      contributions.emplace(ego_id,
                            extract_bev_features(ego_cloud, cfg.grid));
      for (int id : senders) {
        const PointCloud moved =
            transform_points(sender_transform(id), frame.clouds.at(id),
                             cav_frame_name(id), ego_frame);
        const BevFeatureMap map = extract_bev_features(moved, cfg.grid);
        const CompressedBlob blob = encode_features(map, cfg.codec);
        const std::vector<std::uint8_t> wire = blob.serialize();
        result.comm.messages.push_back({id, ego_id, wire.size()});
        const CompressedBlob received = CompressedBlob::parse(wire);
        contributions.emplace(
            id, decode_features(received, cfg.grid, ego_frame));
      }
      const BevFeatureMap fused =
          attentive_fuse(contributions, ego_id, cfg.attention_params(),
                         {cfg.mask_empty});
      result.detections =
          nms(detect(fused, cfg.detector, &ego_cloud, viewpoints), cfg.nms_iou);
      break;
    }
  }

  std::erase_if(result.detections, [&](const Detection& d) {
    return std::hypot(d.box.center.x, d.box.center.y) < cfg.self_exclusion_m;
  });
  detail::audit_messages(result.comm, graph);
  return result;
}

}  // namespace coopsim
