#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coopsim/errors.hpp"
#include "coopsim/geom.hpp"
#include "coopsim/lidar.hpp"
#include "coopsim/parallel.hpp"
#include "coopsim/rng.hpp"

namespace coopsim {

enum class RoadType : int {
  kFourWay = 0,
  kTIntersection = 1,
  kStraight = 2,
  kCurvy = 3,
  kMidblock = 4,
  kEntranceRamp = 5,
};

inline const char* road_type_name(RoadType t) {
  switch (t) {
    case RoadType::kFourWay: return "four_way";
    case RoadType::kTIntersection: return "t_intersection";
    case RoadType::kStraight: return "straight";
    case RoadType::kCurvy: return "curvy";
    case RoadType::kMidblock: return "midblock";
    case RoadType::kEntranceRamp: return "entrance_ramp";
  }
  throw InternalError("road_type_name: bad enum value");
}

inline RoadType road_type_from_name(const std::string& name) {
  for (int i = 0; i < 6; ++i) {
    const auto t = static_cast<RoadType>(i);
    if (name == road_type_name(t)) return t;
  }
  throw UsageError("unknown road type '" + name + "'");
}

struct ScenarioConfig {
  RoadType road_type = RoadType::kStraight;
  int n_vehicles = 24;
  int n_cavs = 3;
  int duration_frames = 10;
  double traffic_speed_kmh = 40.0;
  double aggressiveness = 0.5;  // reserved dial, carried through unused
  std::uint64_t seed = 1;
  LidarSpec lidar;
  LocalizationNoise localization;
  bool ground_plane = false;
  double sensor_mount_z = 1.9;

  void validate() const {
    if (n_cavs < 2 || n_cavs > 7)
      throw UsageError("scenario: n_cavs must be in [2, 7]");
    if (n_vehicles < n_cavs)
      throw UsageError("scenario: n_vehicles must be >= n_cavs");
    if (duration_frames < 1)
      throw UsageError("scenario: duration must be >= 1 frame");
    if (!(traffic_speed_kmh > 0.0))
      throw UsageError("scenario: traffic speed must be > 0");
    lidar.validate();
  }

  std::string describe() const {
    return std::string(road_type_name(road_type)) +
           " seed=" + std::to_string(seed) +
           " vehicles=" + std::to_string(n_vehicles) +
           " cavs=" + std::to_string(n_cavs);
  }
};

struct VehicleState {
  int id = 0;
  OrientedBox box;
  Vec3 velocity;
};

// One simulation step: every vehicle's true state, plus per connected
// vehicle its true sensor pose, its noisy (claimed) sensor pose and the
// cloud it captured, expressed in its own sensor frame.
struct Frame {
  double timestamp_s = 0.0;
  std::vector<VehicleState> vehicles;
  std::vector<int> cav_ids;  // selection order; first entry is the ego
  std::map<int, Pose> true_poses;
  std::map<int, Pose> noisy_poses;
  std::map<int, PointCloud> clouds;
};

struct Scenario {
  ScenarioConfig config;
  int ego_id = -1;
  std::vector<OrientedBox> buildings;  // static occluders, never targets
  std::vector<Frame> frames;
};

inline std::string cav_frame_name(int cav_id) {
  return "cav" + std::to_string(cav_id);
}

namespace detail {

// Per-road-type population statistics the sampler reproduces: share of
// scenarios, traffic speed (km/h), vehicle density per scenario and
// scenario length in seconds, each as mean/std.
struct RoadStats {
  double percent;
  double speed_mean, speed_std;
  double density_mean, density_std;
  double length_mean, length_std;
};

inline constexpr std::array<RoadStats, 6> kRoadStats{{
    {24.5, 19.3, 8.8, 29.6, 26.1, 12.5, 4.2},
    {24.1, 26.3, 7.5, 27.9, 18.65, 14.3, 12.8},
    {20.7, 45.7, 14.8, 38.0, 36.3, 20.2, 12.7},
    {23.3, 45.8, 15.1, 19.1, 9.2, 17.8, 6.8},
    {4.7, 45.1, 8.3, 21.8, 8.2, 10.0, 1.3},
    {2.7, 54.8, 1.7, 20.3, 2.8, 9.3, 0.9},
}};

inline constexpr double kCavMeanTarget = 2.89;
inline constexpr double kCavStd = 1.06;
// Rounding to integers and clamping into [2, 7] censors the low tail and
// would push the mean to ~3.0; drawing around this shifted center restores
// the target mean of the discrete distribution.
inline constexpr double kCavMuCalibrated = 2.7631;

inline int sample_cav_count(SplitRng& rng) {
  const double g = rng.gaussian(kCavMuCalibrated, kCavStd);
  return static_cast<int>(std::clamp<long long>(std::llround(g), 2, 7));
}

// Scene construction constants. Lateral positions keep every pair of
// occupied corridors at least 8 m of clear space apart, and slots within a
// corridor keep at least kGapMin clear longitudinally. Detection grids use
// 4 m cells, so separations above 8 m guarantee an empty cell row between
// any two vehicles regardless of grid alignment.
inline constexpr double kLaneY = 5.25;       // driving lane centerline offset
inline constexpr double kRow1 = 15.75;       // first parked row offset
inline constexpr double kRow2 = 26.25;       // second parked row offset
inline constexpr double kSceneHalf = 150.0;  // scene half extent
inline constexpr double kStopLine = 17.5;    // queue head distance from center
inline constexpr double kCornerStart = 17.5; // corner rows begin here
inline constexpr double kGapMin = 8.5;       // min clear gap along a corridor
inline constexpr double kGapJitter = 4.5;    // extra random spacing
// Building strips sit between the parked rows and the back corridors. The
// faces stay more than a grid cell clear of every vehicle corridor so no
// cell ever mixes wall and vehicle returns, and the height stops the
// steepest upward ray a sensor can fire at it.
inline constexpr double kWallY = 24.0;       // building strip centerline offset
inline constexpr double kWallDepth = 5.5;    // building strip depth
inline constexpr double kWallHeight = 7.0;   // clears the sensor elevation fan
inline constexpr double kBackLaneY = 32.25;  // corridor behind the buildings

struct LaneSpec {
  std::vector<Vec2> pts;
  bool ring = false;
  double speed_mps = 0.0;  // 0 = parked
  double fill = 0.5;       // desired occupancy fraction of capacity
  double end_margin = 0.0; // non-ring lanes: clearance left at the tail
};

struct Layout {
  std::vector<LaneSpec> lanes;
  std::vector<OrientedBox> buildings;  // static occluders, never targets
  std::vector<Vec2> anchors;           // anchor 0 seeds the ego pick
};

inline std::vector<Vec2> line_pts(Vec2 a, Vec2 b, double step = 5.0) {
  const double len = (b - a).norm();
  const int n = std::max(2, static_cast<int>(std::ceil(len / step)) + 1);
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / (n - 1);
    pts.push_back(a + (b - a) * t);
  }
  return pts;
}

inline std::vector<Vec2> circle_pts(Vec2 center, double radius, double step = 2.0) {
  const double circumference = 2.0 * kPi * radius;
  const int n = std::max(8, static_cast<int>(std::ceil(circumference / step)));
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(n) + 1);
  // Starts at the south pole so arclength 0 sits nearest the ego area. The
  // first point repeats at the end: closure is part of the geometry, while
  // the ring flag only wraps arclength.
  for (int i = 0; i < n; ++i) {
    const double phi = 2.0 * kPi * i / n;
    pts.push_back({center.x + radius * std::sin(phi),
                   center.y - radius * std::cos(phi)});
  }
  pts.push_back(pts.front());
  return pts;
}

struct Polyline {
  std::vector<Vec2> pts;
  std::vector<double> cum;
  bool ring = false;
  double total = 0.0;

  // ring wraps arclength modulo the path length; it never adds geometry.
  // Closed shapes repeat their first point explicitly.
  explicit Polyline(const LaneSpec& lane) : pts(lane.pts), ring(lane.ring) {
    if (pts.size() < 2) throw InternalError("polyline: too few points");
    cum.resize(pts.size(), 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i)
      cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
    total = cum.back();
    if (!(total > 0.0)) throw InternalError("polyline: zero length");
  }

  void sample(double s, Vec2& pos, double& heading) const {
    if (ring) {
      s = std::fmod(s, total);
      if (s < 0.0) s += total;
    } else {
      s = std::clamp(s, 0.0, total);
    }
    std::size_t hi = static_cast<std::size_t>(
        std::upper_bound(cum.begin(), cum.end(), s) - cum.begin());
    hi = std::clamp<std::size_t>(hi, 1, pts.size() - 1);
    const Vec2 a = pts[hi - 1];
    const Vec2 b = pts[hi];
    const double seg_len = (b - a).norm();
    const double t = seg_len > 0.0 ? (s - cum[hi - 1]) / seg_len : 0.0;
    pos = a + (b - a) * t;
    heading = std::atan2(b.y - a.y, b.x - a.x);
  }
};

inline Layout build_layout(const ScenarioConfig& cfg, SplitRng& rng) {
  Layout out;
  const double speed_base = cfg.traffic_speed_kmh / 3.6;
  auto lane_speed = [&](double factor) {
    const double v = rng.gaussian(speed_base * factor, 0.12 * speed_base);
    return canon9(std::clamp(v, 1.5, 26.0));
  };
  const double h = kSceneHalf;

  auto add_line = [&](Vec2 a, Vec2 b, double speed, double fill,
                      bool ring = true, double end_margin = 0.0) {
    LaneSpec lane;
    lane.pts = line_pts(a, b);
    lane.ring = ring;
    lane.speed_mps = speed;
    lane.fill = fill;
    lane.end_margin = end_margin;
    out.lanes.push_back(std::move(lane));
  };

  switch (cfg.road_type) {
    case RoadType::kStraight: {
      add_line({-h, -kLaneY}, {h, -kLaneY}, lane_speed(1.0), 0.55);
      add_line({h, kLaneY}, {-h, kLaneY}, lane_speed(1.0), 0.55);
      add_line({-130, -kRow1}, {130, -kRow1}, 0.0, 0.35, false);
      add_line({130, kRow1}, {-130, kRow1}, 0.0, 0.35, false);
      out.anchors = {{0, -kLaneY},   {35, kLaneY},  {-70, -kLaneY},
                     {70, kLaneY},   {-35, kLaneY}, {105, -kLaneY},
                     {-105, kLaneY}};
      break;
    }
    case RoadType::kMidblock: {
      // Street canyon: building strips wall the main road off from slow
      // back corridors. Back-corridor traffic is invisible from anywhere on
      // the main road, and vice versa; the connected vehicles riding each
      // corridor are the only eyes on it.
      add_line({-h, -kLaneY}, {h, -kLaneY}, lane_speed(1.0), 0.7);
      add_line({h, kLaneY}, {-h, kLaneY}, lane_speed(1.0), 0.7);
      add_line({-130, -kRow1}, {130, -kRow1}, 0.0, 0.85, false);
      add_line({130, kRow1}, {-130, kRow1}, 0.0, 0.85, false);
      add_line({-h, -kBackLaneY}, {h, -kBackLaneY}, lane_speed(0.55), 0.8);
      add_line({h, kBackLaneY}, {-h, kBackLaneY}, lane_speed(0.55), 0.8);
      out.buildings.push_back(OrientedBox({0.0, -kWallY, kWallHeight / 2.0},
                                          270.0, kWallDepth, kWallHeight, 0.0));
      out.buildings.push_back(OrientedBox({0.0, kWallY, kWallHeight / 2.0},
                                          270.0, kWallDepth, kWallHeight, 0.0));
      out.anchors = {{-30, -kLaneY},      {-50, -kBackLaneY},
                     {15, kBackLaneY},    {20, kLaneY},
                     {-70, -kLaneY},      {0, -kRow1},
                     {60, kLaneY}};
      break;
    }
    case RoadType::kFourWay: {
      // Main road moves; the crossing road holds red-light queues. Corner
      // parked rows shield the queues from traffic approaching on the main
      // road, which is what cross-arm connected vehicles recover.
      add_line({-h, -kLaneY}, {h, -kLaneY}, lane_speed(1.0), 0.6);
      add_line({h, kLaneY}, {-h, kLaneY}, lane_speed(1.0), 0.6);
      add_line({kLaneY, -130}, {kLaneY, -kStopLine}, 0.0, 0.65, false);
      add_line({-kLaneY, 130}, {-kLaneY, kStopLine}, 0.0, 0.65, false);
      add_line({-130, -kRow1}, {-kCornerStart, -kRow1}, 0.0, 0.55, false);
      add_line({kCornerStart, -kRow1}, {130, -kRow1}, 0.0, 0.55, false);
      add_line({-130, kRow1}, {-kCornerStart, kRow1}, 0.0, 0.55, false);
      add_line({kCornerStart, kRow1}, {130, kRow1}, 0.0, 0.55, false);
      out.anchors = {{-45, -kLaneY},        {45, kLaneY},
                     {-kLaneY, kStopLine},  {kLaneY, -kStopLine},
                     {-110, -kLaneY},       {110, kLaneY},
                     {kLaneY, -45}};
      break;
    }
    case RoadType::kTIntersection: {
      // Main road plus a south stem. Corner blocks flank the stem, so the
      // queue is visible only from the short stretch of main road directly
      // in front of it; the departing stem lane carries the connected
      // vehicle that covers it. Across the main road a long building hides
      // a service alley behind the parked row.
      add_line({-h, -kLaneY}, {h, -kLaneY}, lane_speed(1.0), 0.6);
      add_line({h, kLaneY}, {-h, kLaneY}, lane_speed(1.0), 0.6);
      add_line({kLaneY, -130}, {kLaneY, -kStopLine}, 0.0, 0.95, false);
      add_line({-kLaneY, -kStopLine}, {-kLaneY, -130}, lane_speed(0.45), 0.45,
               false, 0.1 * cfg.duration_frames * speed_base * 0.45 + 2.0);
      add_line({-130, -kRow1}, {-48, -kRow1}, 0.0, 0.7, false);
      add_line({48, -kRow1}, {130, -kRow1}, 0.0, 0.7, false);
      add_line({130, kRow1}, {-130, kRow1}, 0.0, 0.8, false);
      add_line({-h, kBackLaneY}, {h, kBackLaneY}, 0.0, 0.7, false);
      out.buildings.push_back(OrientedBox({-23.5, -18.0, kWallHeight / 2.0},
                                          23.0, 14.0, kWallHeight, 0.0));
      out.buildings.push_back(OrientedBox({25.5, -18.0, kWallHeight / 2.0},
                                          29.0, 14.0, kWallHeight, 0.0));
      out.buildings.push_back(OrientedBox({0.0, kWallY, kWallHeight / 2.0},
                                          270.0, kWallDepth, kWallHeight, 0.0));
      out.anchors = {{-45, -kLaneY},  {-kLaneY, -40}, {0, kBackLaneY},
                     {20, kLaneY},    {kLaneY, -35},  {-100, -kLaneY},
                     {30, -kRow1}};
      break;
    }
    case RoadType::kCurvy: {
      const Vec2 center{0.0, 150.0};
      LaneSpec inner;
      inner.pts = circle_pts(center, 150.0 - kLaneY);
      inner.ring = true;
      inner.speed_mps = lane_speed(1.0);
      inner.fill = 0.6;
      out.lanes.push_back(std::move(inner));
      LaneSpec outer;
      outer.pts = circle_pts(center, 150.0 + kLaneY);
      std::reverse(outer.pts.begin(), outer.pts.end());
      outer.ring = true;
      outer.speed_mps = lane_speed(1.0);
      outer.fill = 0.6;
      out.lanes.push_back(std::move(outer));
      out.anchors = {{0, kLaneY},  {30, kLaneY + 3}, {-30, kLaneY + 3},
                     {60, 15},     {-60, 15},        {90, 30},
                     {-90, 30}};
      break;
    }
    case RoadType::kEntranceRamp: {
      add_line({-h, -kLaneY}, {h, -kLaneY}, lane_speed(1.0), 0.6);
      add_line({h, kLaneY}, {-h, kLaneY}, lane_speed(1.0), 0.6);
      // Yielding traffic queued on the ramp. The tilted boxes need extra
      // lateral room, hence the lower merge point.
      add_line({-140, -40}, {-30, -kRow1 - 1.0}, 0.0, 0.7, false);
      add_line({-10, -kRow1}, {130, -kRow1}, 0.0, 0.45, false);
      add_line({130, kRow1}, {-130, kRow1}, 0.0, 0.45, false);
      out.anchors = {{-50, -kLaneY}, {20, kLaneY},  {-33, -kRow1 - 1},
                     {60, -kLaneY},  {-90, kLaneY}, {110, -kLaneY},
                     {-110, -kLaneY}};
      break;
    }
  }
  return out;
}

struct VehiclePlan {
  int id = 0;
  int lane = 0;
  double s0 = 0.0;
  double speed = 0.0;
  double length = 4.5, width = 2.0, height = 1.6;
};

struct Slot {
  int lane = 0;
  double s = 0.0;
  double length = 4.5, width = 2.0, height = 1.6;
  Vec2 pos;
  bool taken = false;
};

inline void sample_dims(SplitRng& rng, double& len, double& wid, double& hgt) {
  len = canon9(rng.truncated_gaussian(4.5, 0.27, 0.675));
  wid = canon9(rng.truncated_gaussian(2.0, 0.12, 0.30));
  hgt = canon9(rng.truncated_gaussian(1.6, 0.096, 0.24));
}

}  // namespace detail

// Draws a scenario configuration from the road-type, speed, density, length
// and connected-vehicle-count statistics. index selects an independent draw
// from the same master seed.
inline ScenarioConfig sample_config(std::uint64_t master_seed,
                                    std::uint64_t index = 0) {
  SplitRng rng(derive_seed(master_seed, kStreamConfigSample, index));
  ScenarioConfig cfg;

  const double u = rng.uniform() * 100.0;
  double acc = 0.0;
  int type = 5;
  for (int i = 0; i < 6; ++i) {
    acc += detail::kRoadStats[static_cast<std::size_t>(i)].percent;
    if (u < acc) {
      type = i;
      break;
    }
  }
  cfg.road_type = static_cast<RoadType>(type);
  const auto& row = detail::kRoadStats[static_cast<std::size_t>(type)];

  cfg.n_cavs = detail::sample_cav_count(rng);
  cfg.traffic_speed_kmh =
      canon9(std::clamp(rng.gaussian(row.speed_mean, row.speed_std), 8.0, 90.0));
  const long long density =
      std::llround(rng.gaussian(row.density_mean, row.density_std));
  cfg.n_vehicles = static_cast<int>(
      std::clamp<long long>(density, std::max(cfg.n_cavs, 8), 52));
  const long long frames =
      std::llround(10.0 * rng.gaussian(row.length_mean, row.length_std));
  cfg.duration_frames =
      static_cast<int>(std::clamp<long long>(frames, 20, 300));
  cfg.aggressiveness = canon9(rng.uniform(0.2, 0.8));
  cfg.seed = derive_seed(master_seed, kStreamScenarioSeed, index);
  return cfg;
}

// Builds the full scenario for a configuration: lays out the road, places
// vehicles with guaranteed clearances, picks the connected subset, then
// simulates every frame including each connected vehicle's point cloud.
// Generation is deterministic in the config alone; workers only split the
// ray casting.
inline Scenario generate_scenario(const ScenarioConfig& cfg, int workers = 1) {
  cfg.validate();
  using namespace detail;

  SplitRng layout_rng(derive_seed(cfg.seed, kStreamLayout));
  Layout layout = build_layout(cfg, layout_rng);

  // Build every available slot, lane by lane. Dimensions are sampled per
  // slot up front so occupancy choices cannot shift later draws.
  std::vector<Polyline> shapes;
  shapes.reserve(layout.lanes.size());
  for (const auto& lane : layout.lanes) shapes.emplace_back(lane);

  std::vector<Slot> slots;
  std::vector<std::vector<int>> lane_slots(layout.lanes.size());
  for (std::size_t li = 0; li < layout.lanes.size(); ++li) {
    const auto& lane = layout.lanes[li];
    const auto& shape = shapes[li];
    const double usable =
        lane.ring ? shape.total : std::max(0.0, shape.total - lane.end_margin);
    double s = 1.0;
    for (;;) {
      double len, wid, hgt;
      sample_dims(layout_rng, len, wid, hgt);
      const double center = s + 0.5 * len;
      const double end = center + 0.5 * len;
      if (lane.ring) {
        if (end > shape.total - (kGapMin + 4.0)) break;
      } else {
        if (center > usable - 0.5 * len) break;
      }
      Slot slot;
      slot.lane = static_cast<int>(li);
      slot.s = center;
      slot.length = len;
      slot.width = wid;
      slot.height = hgt;
      double heading;
      shape.sample(center, slot.pos, heading);
      lane_slots[li].push_back(static_cast<int>(slots.size()));
      slots.push_back(slot);
      s = end + kGapMin + kGapJitter * layout_rng.uniform();
    }
  }
  if (static_cast<int>(slots.size()) < cfg.n_vehicles)
    throw UsageError("scenario placement infeasible: " + cfg.describe() +
                     " needs " + std::to_string(cfg.n_vehicles) +
                     " vehicles but the road fits " +
                     std::to_string(slots.size()));

  // Force one occupied slot near each of the first n_cavs anchors so the
  // connected vehicles end up where the template intends.
  SplitRng place_rng(derive_seed(cfg.seed, kStreamPlacement));
  int placed = 0;
  const int forced =
      std::min<int>(cfg.n_cavs, static_cast<int>(layout.anchors.size()));
  for (int a = 0; a < forced && placed < cfg.n_vehicles; ++a) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < slots.size(); ++k) {
      if (slots[k].taken) continue;
      const double d = (slots[k].pos - layout.anchors[static_cast<std::size_t>(a)]).squared_norm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    if (best >= 0) {
      slots[static_cast<std::size_t>(best)].taken = true;
      ++placed;
    }
  }

  // Distribute the remaining count over lanes by fill-weighted capacity,
  // then pick evenly spread slots with a seeded phase.
  while (placed < cfg.n_vehicles) {
    int progress = 0;
    for (std::size_t li = 0; li < layout.lanes.size() && placed < cfg.n_vehicles;
         ++li) {
      const auto& indices = lane_slots[li];
      if (indices.empty()) continue;
      int free = 0;
      for (int k : indices) free += slots[static_cast<std::size_t>(k)].taken ? 0 : 1;
      if (free == 0) continue;
      const int want = std::max(
          1, static_cast<int>(std::lround(layout.lanes[li].fill * free * 0.5)));
      for (int n = 0; n < want && placed < cfg.n_vehicles; ++n) {
        const auto start = static_cast<std::size_t>(
            place_rng.uniform_int(0, static_cast<std::int64_t>(indices.size()) - 1));
        for (std::size_t off = 0; off < indices.size(); ++off) {
          auto& slot =
              slots[static_cast<std::size_t>(indices[(start + off) % indices.size()])];
          if (!slot.taken) {
            slot.taken = true;
            ++placed;
            ++progress;
            break;
          }
        }
      }
    }
    if (progress == 0) break;
  }
  if (placed < cfg.n_vehicles)
    throw UsageError("scenario placement infeasible: " + cfg.describe());

  std::vector<VehiclePlan> plans;
  plans.reserve(static_cast<std::size_t>(cfg.n_vehicles));
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const auto& slot = slots[k];
    if (!slot.taken) continue;
    VehiclePlan plan;
    plan.id = static_cast<int>(plans.size());
    plan.lane = slot.lane;
    plan.s0 = slot.s;
    plan.speed = layout.lanes[static_cast<std::size_t>(slot.lane)].speed_mps;
    plan.length = slot.length;
    plan.width = slot.width;
    plan.height = slot.height;
    plans.push_back(plan);
  }

  // Connected-vehicle selection: anchor order first, then a seeded shuffle
  // of the rest. The selection order is preserved so nested subsets of the
  // list are meaningful.
  SplitRng cav_rng(derive_seed(cfg.seed, kStreamCavSelect));
  auto plan_pos = [&](const VehiclePlan& p) {
    Vec2 pos;
    double heading;
    shapes[static_cast<std::size_t>(p.lane)].sample(p.s0, pos, heading);
    return pos;
  };
  std::vector<int> cav_ids;
  std::vector<char> chosen(plans.size(), 0);
  for (int a = 0; a < forced && static_cast<int>(cav_ids.size()) < cfg.n_cavs;
       ++a) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < plans.size(); ++k) {
      if (chosen[k]) continue;
      const double d =
          (plan_pos(plans[k]) - layout.anchors[static_cast<std::size_t>(a)]).squared_norm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    if (best >= 0) {
      chosen[static_cast<std::size_t>(best)] = 1;
      cav_ids.push_back(plans[static_cast<std::size_t>(best)].id);
    }
  }
  if (static_cast<int>(cav_ids.size()) < cfg.n_cavs) {
    std::vector<int> rest;
    for (std::size_t k = 0; k < plans.size(); ++k)
      if (!chosen[k]) rest.push_back(static_cast<int>(k));
    // Moving vehicles make better sensor carriers; put them first.
    std::stable_sort(rest.begin(), rest.end(), [&](int a, int b) {
      return (plans[static_cast<std::size_t>(a)].speed > 0.0) >
             (plans[static_cast<std::size_t>(b)].speed > 0.0);
    });
    std::vector<int> moving, parked;
    for (int k : rest)
      (plans[static_cast<std::size_t>(k)].speed > 0.0 ? moving : parked).push_back(k);
    cav_rng.shuffle(moving);
    cav_rng.shuffle(parked);
    moving.insert(moving.end(), parked.begin(), parked.end());
    for (int k : moving) {
      if (static_cast<int>(cav_ids.size()) >= cfg.n_cavs) break;
      cav_ids.push_back(plans[static_cast<std::size_t>(k)].id);
    }
  }

  Scenario scenario;
  scenario.config = cfg;
  scenario.ego_id = cav_ids.front();
  scenario.buildings = layout.buildings;

  const std::vector<Vec3> rays = generate_rays(cfg.lidar);

  // Vehicle states for every frame first; clouds are filled in below.
  scenario.frames.resize(static_cast<std::size_t>(cfg.duration_frames));
  for (int t = 0; t < cfg.duration_frames; ++t) {
    Frame& frame = scenario.frames[static_cast<std::size_t>(t)];
    frame.timestamp_s = canon9(0.1 * t);
    frame.cav_ids = cav_ids;
    for (const auto& plan : plans) {
      const auto& shape = shapes[static_cast<std::size_t>(plan.lane)];
      Vec2 pos;
      double heading;
      shape.sample(plan.s0 + plan.speed * 0.1 * t, pos, heading);
      VehicleState st;
      st.id = plan.id;
      const double yaw = canon9(normalize_angle(heading));
      st.box = OrientedBox({canon9(pos.x), canon9(pos.y), canon9(plan.height / 2.0)},
                           plan.length, plan.width, plan.height, yaw);
      st.velocity = {canon9(plan.speed * std::cos(heading)),
                     canon9(plan.speed * std::sin(heading)), 0.0};
      frame.vehicles.push_back(st);
    }

    // Clearance audit: box footprints must never touch.
    for (std::size_t i = 0; i < frame.vehicles.size(); ++i) {
      for (std::size_t j = i + 1; j < frame.vehicles.size(); ++j) {
        const auto& a = frame.vehicles[i].box;
        const auto& b = frame.vehicles[j].box;
        const double d = (a.center.xy() - b.center.xy()).norm();
        if (d > 0.5 * std::hypot(a.length, a.width) +
                    0.5 * std::hypot(b.length, b.width) + 0.5)
          continue;
        if (rotated_iou_bev(a, b) > 1e-12)
          throw InternalError("vehicle overlap in " + cfg.describe() +
                              " frame " + std::to_string(t));
      }
    }
    for (const auto& v : frame.vehicles)
      for (const auto& b : scenario.buildings)
        if (rotated_iou_bev(v.box, b) > 1e-12)
          throw InternalError("vehicle inside building in " + cfg.describe() +
                              " frame " + std::to_string(t));

    for (int cav : cav_ids) {
      const auto& st = frame.vehicles[static_cast<std::size_t>(cav)];
      const Pose truth({st.box.center.x, st.box.center.y, cfg.sensor_mount_z},
                       st.box.yaw);
      frame.true_poses[cav] = truth;
      const Pose noisy = perturb_pose(
          truth, cfg.localization,
          derive_seed(cfg.seed, kStreamPoseNoise, static_cast<std::uint64_t>(cav),
                      static_cast<std::uint64_t>(t)));
      frame.noisy_poses[cav] =
          Pose({canon9(noisy.translation.x), canon9(noisy.translation.y),
                canon9(noisy.translation.z)},
               canon9(noisy.yaw));
      frame.clouds[cav] = PointCloud{};  // slot for the parallel fill
    }
  }

  // Ray casting across (frame, cav) jobs; each job writes only its own slot.
  struct Job {
    int t;
    int cav;
  };
  std::vector<Job> jobs;
  for (int t = 0; t < cfg.duration_frames; ++t)
    for (int cav : cav_ids) jobs.push_back({t, cav});

  RaycastConfig rc;
  rc.ground_plane = cfg.ground_plane;
  parallel_for(jobs.size(), workers, [&](std::size_t k) {
    const Job job = jobs[k];
    Frame& frame = scenario.frames[static_cast<std::size_t>(job.t)];
    std::vector<OrientedBox> others;
    others.reserve(frame.vehicles.size() - 1 + scenario.buildings.size());
    for (const auto& v : frame.vehicles)
      if (v.id != job.cav) others.push_back(v.box);
    for (const auto& b : scenario.buildings) others.push_back(b);
    PointCloud cloud =
        raycast_frame(frame.true_poses.at(job.cav), rays, others, cfg.lidar,
                      rc, cav_frame_name(job.cav));
    cloud = apply_range_noise(
        cloud, cfg.lidar.range_noise_sigma_m,
        derive_seed(cfg.seed, kStreamRangeNoise,
                    static_cast<std::uint64_t>(job.cav),
                    static_cast<std::uint64_t>(job.t)));
    // Storage is 32-bit; quantize now so memory and disk say the same thing.
    for (auto& p : cloud.points) {
      p.x = static_cast<double>(static_cast<float>(p.x));
      p.y = static_cast<double>(static_cast<float>(p.y));
      p.z = static_cast<double>(static_cast<float>(p.z));
      p.intensity = static_cast<double>(static_cast<float>(p.intensity));
    }
    frame.clouds.find(job.cav)->second = std::move(cloud);
  });

  return scenario;
}

struct DatasetStats {
  int n_scenarios = 0;
  std::array<int, 6> per_type{};
  double cav_mean = 0.0;
  double cav_std = 0.0;
  double speed_mean_kmh = 0.0;
  long long total_frames = 0;
  long long total_vehicles = 0;

  std::string to_string() const {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-16s %8s %8s\n", "road type", "count",
                  "share%");
    out += line;
    for (int i = 0; i < 6; ++i) {
      const double pct =
          n_scenarios > 0 ? 100.0 * per_type[static_cast<std::size_t>(i)] / n_scenarios : 0.0;
      std::snprintf(line, sizeof(line), "%-16s %8d %8.1f\n",
                    road_type_name(static_cast<RoadType>(i)),
                    per_type[static_cast<std::size_t>(i)], pct);
      out += line;
    }
    std::snprintf(line, sizeof(line),
                  "scenarios %d, frames %lld, vehicles %lld\n", n_scenarios,
                  total_frames, total_vehicles);
    out += line;
    std::snprintf(line, sizeof(line),
                  "cavs %.2f +/- %.2f, speed %.1f km/h\n", cav_mean, cav_std,
                  speed_mean_kmh);
    out += line;
    return out;
  }
};

inline DatasetStats dataset_stats(std::span<const ScenarioConfig> configs) {
  DatasetStats stats;
  stats.n_scenarios = static_cast<int>(configs.size());
  double cav_sum = 0.0, cav_sq = 0.0, speed_sum = 0.0;
  for (const auto& cfg : configs) {
    stats.per_type[static_cast<std::size_t>(cfg.road_type)] += 1;
    cav_sum += cfg.n_cavs;
    cav_sq += static_cast<double>(cfg.n_cavs) * cfg.n_cavs;
    speed_sum += cfg.traffic_speed_kmh;
    stats.total_frames += cfg.duration_frames;
    stats.total_vehicles += cfg.n_vehicles;
  }
  if (stats.n_scenarios > 0) {
    stats.cav_mean = cav_sum / stats.n_scenarios;
    const double var =
        std::max(0.0, cav_sq / stats.n_scenarios - stats.cav_mean * stats.cav_mean);
    stats.cav_std = std::sqrt(var);
    stats.speed_mean_kmh = speed_sum / stats.n_scenarios;
  }
  return stats;
}

inline DatasetStats dataset_stats(std::span<const Scenario> scenarios) {
  std::vector<ScenarioConfig> configs;
  configs.reserve(scenarios.size());
  for (const auto& s : scenarios) configs.push_back(s.config);
  return dataset_stats(std::span<const ScenarioConfig>(configs));
}

// Occlusion-heavy benchmark set: intersections whose cross traffic hides
// behind corner rows, and parked-up corridors with long same-lane chains.
// Localization noise is kept at survey grade so pose error degrades but
// does not dominate the comparison.
inline std::vector<ScenarioConfig> make_benchmark_suite(std::uint64_t seed,
                                                        int count = 20,
                                                        int frames = 10) {
  std::vector<ScenarioConfig> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    ScenarioConfig cfg;
    cfg.road_type =
        (i % 2 == 0) ? RoadType::kTIntersection : RoadType::kMidblock;
    cfg.n_vehicles = 40 + 4 * ((i / 2) % 3);
    cfg.n_cavs = 3 + i % 3;
    cfg.duration_frames = frames;
    cfg.traffic_speed_kmh = (cfg.road_type == RoadType::kTIntersection) ? 38.0 : 34.0;
    cfg.localization.position_sigma_m = 0.02;
    cfg.localization.heading_sigma_deg = 0.15;
    cfg.seed = derive_seed(seed, kStreamScenarioSeed, static_cast<std::uint64_t>(i));
    out.push_back(cfg);
  }
  return out;
}

// Intersection with the full complement of seven connected vehicles placed
// on distinct arms, for coverage-vs-count sweeps over nested subsets.
inline ScenarioConfig make_cav_sweep_config(std::uint64_t seed, int frames = 6) {
  ScenarioConfig cfg;
  cfg.road_type = RoadType::kFourWay;
  cfg.n_vehicles = 42;
  cfg.n_cavs = 7;
  cfg.duration_frames = frames;
  cfg.traffic_speed_kmh = 36.0;
  cfg.localization.position_sigma_m = 0.02;
  cfg.localization.heading_sigma_deg = 0.4;
  cfg.seed = seed;
  return cfg;
}

}  // namespace coopsim
