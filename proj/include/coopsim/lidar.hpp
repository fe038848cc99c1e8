#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coopsim/errors.hpp"
#include "coopsim/geom.hpp"
#include "coopsim/rng.hpp"

namespace coopsim {

// Spinning-lidar geometry. Defaults follow a 64-channel unit spinning at
// 10 Hz with a [-25, 5] degree vertical field of view, 120 m range and a
// nominal 1.3M points per second.
struct LidarSpec {
  int channels = 64;
  double vertical_fov_min_deg = -25.0;
  double vertical_fov_max_deg = 5.0;
  double max_range_m = 120.0;
  double points_per_second = 1.3e6;
  double rotation_hz = 10.0;
  double range_noise_sigma_m = 0.02;

  void validate() const {
    if (channels < 1) throw UsageError("lidar: channels must be >= 1");
    if (!(vertical_fov_max_deg >= vertical_fov_min_deg))
      throw UsageError("lidar: inverted vertical field of view");
    if (!(max_range_m > 0.0)) throw UsageError("lidar: max range must be > 0");
    if (!(points_per_second > 0.0) || !(rotation_hz > 0.0))
      throw UsageError("lidar: rate parameters must be > 0");
    if (range_noise_sigma_m < 0.0)
      throw UsageError("lidar: negative range noise");
  }

  // Azimuth positions per revolution so that channels * steps * hz matches
  // the nominal point rate.
  int azimuth_steps() const {
    const double steps = points_per_second / (rotation_hz * channels);
    const int n = static_cast<int>(std::llround(steps));
    return n > 0 ? n : 1;
  }
};

struct LocalizationNoise {
  double position_sigma_m = 0.02;
  double heading_sigma_deg = 2.0;
};

// Unit direction for every (channel, azimuth) pair in sensor frame, channel
// major. Elevations are evenly spaced across the field of view including
// both endpoints; a single channel sits at the midpoint.
inline std::vector<Vec3> generate_rays(const LidarSpec& spec) {
  spec.validate();
  const int steps = spec.azimuth_steps();
  std::vector<Vec3> rays;
  rays.reserve(static_cast<std::size_t>(spec.channels) * steps);
  for (int c = 0; c < spec.channels; ++c) {
    double elev_deg;
    if (spec.channels == 1) {
      elev_deg = 0.5 * (spec.vertical_fov_min_deg + spec.vertical_fov_max_deg);
    } else {
      const double f =
          static_cast<double>(c) / static_cast<double>(spec.channels - 1);
      elev_deg = spec.vertical_fov_min_deg +
                 f * (spec.vertical_fov_max_deg - spec.vertical_fov_min_deg);
    }
    const double elev = deg2rad(elev_deg);
    const double ce = std::cos(elev), se = std::sin(elev);
    for (int a = 0; a < steps; ++a) {
      const double az = 2.0 * kPi * a / steps;
      rays.push_back({ce * std::cos(az), ce * std::sin(az), se});
    }
  }
  return rays;
}

namespace detail {

// Slab test against a yaw-oriented box. Returns the entry distance or +inf.
// Rays starting inside a box are treated as misses; sensors never sit inside
// another vehicle and the carrier excludes its own body.
inline double ray_box_distance(const Vec3& origin, const Vec3& dir,
                               const OrientedBox& b) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double px = origin.x - b.center.x;
  const double py = origin.y - b.center.y;
  const double pz = origin.z - b.center.z;
  const double o[3] = {c * px + s * py, -s * px + c * py, pz};
  const double d[3] = {c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z};
  const double h[3] = {0.5 * b.length, 0.5 * b.width, 0.5 * b.height};
  double tmin = -kInf, tmax = kInf;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-15) {
      if (std::abs(o[i]) > h[i]) return kInf;
      continue;
    }
    double t1 = (-h[i] - o[i]) / d[i];
    double t2 = (h[i] - o[i]) / d[i];
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return kInf;
  }
  if (tmax < 1e-9) return kInf;     // box fully behind the origin
  if (tmin < 1e-9) return kInf;     // origin inside the box
  return tmin;
}

}  // namespace detail

struct RaycastConfig {
  bool ground_plane = false;  // off by default; scenes are obstacle-only
  double ground_z = 0.0;      // world height of the optional plane
};

// Casts every ray from sensor_pose against the boxes and returns the nearest
// hit per ray as a point in the *sensor* frame, points ordered by ray index.
// Intensity falls off linearly with distance: 1 - d / max_range. When
// hit_box is given it receives one entry per returned point: the index of
// the box hit, or -1 for the ground plane.
inline PointCloud raycast_frame(const Pose& sensor_pose,
                                std::span<const Vec3> rays,
                                std::span<const OrientedBox> boxes,
                                const LidarSpec& spec,
                                const RaycastConfig& cfg = {},
                                std::string frame_id = "sensor",
                                std::vector<int>* hit_box = nullptr) {
  spec.validate();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  PointCloud cloud;
  cloud.frame_id = std::move(frame_id);
  if (hit_box) hit_box->clear();

  // Cheap per-box prefilter: horizontal distance bound.
  std::vector<double> reach(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const double radius =
        0.5 * std::hypot(boxes[i].length, boxes[i].width);
    const double dist =
        (boxes[i].center.xy() - sensor_pose.translation.xy()).norm();
    reach[i] = dist - radius;
  }

  const Vec3& origin = sensor_pose.translation;
  for (const Vec3& local : rays) {
    const Vec3 dir = sensor_pose.rotation * local;
    double best = kInf;
    int best_box = -2;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (reach[i] > spec.max_range_m || reach[i] > best) continue;
      const double t = detail::ray_box_distance(origin, dir, boxes[i]);
      if (t < best) {
        best = t;
        best_box = static_cast<int>(i);
      }
    }
    if (cfg.ground_plane && dir.z < -1e-12) {
      const double t = (cfg.ground_z - origin.z) / dir.z;
      if (t > 1e-9 && t < best) {
        best = t;
        best_box = -1;
      }
    }
    if (best <= spec.max_range_m) {
      cloud.points.push_back({local.x * best, local.y * best, local.z * best,
                              1.0 - best / spec.max_range_m});
      if (hit_box) hit_box->push_back(best_box);
    }
  }
  return cloud;
}

// Displaces each point along its own ray by a Gaussian range error. One draw
// per point in point order, so a given (cloud, seed) pair always reproduces
// the same output.
inline PointCloud apply_range_noise(const PointCloud& cloud, double sigma,
                                    std::uint64_t seed) {
  if (sigma < 0.0) throw UsageError("range noise: negative sigma");
  SplitRng rng(seed);
  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) {
    const double r = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    const double g = rng.gaussian(0.0, sigma);
    double scale = 1.0;
    if (r > 1e-12) scale = std::max(0.0, (r + g) / r);
    out.points.push_back({p.x * scale, p.y * scale, p.z * scale, p.intensity});
  }
  return out;
}

// Planar localization error: Gaussian x/y offset plus a Gaussian heading
// error. Models the difference between where a vehicle is and where its
// positioning system claims it is.
inline Pose perturb_pose(const Pose& pose, const LocalizationNoise& noise,
                         std::uint64_t seed) {
  SplitRng rng(seed);
  const double dx = rng.gaussian(0.0, noise.position_sigma_m);
  const double dy = rng.gaussian(0.0, noise.position_sigma_m);
  const double dyaw = deg2rad(rng.gaussian(0.0, noise.heading_sigma_deg));
  return Pose({pose.translation.x + dx, pose.translation.y + dy,
               pose.translation.z},
              pose.yaw + dyaw, pose.pitch, pose.roll);
}

}  // namespace coopsim
