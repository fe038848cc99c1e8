#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coopsim/errors.hpp"

namespace coopsim {

constexpr double kPi = 3.14159265358979323846;

constexpr double deg2rad(double d) { return d * kPi / 180.0; }
constexpr double rad2deg(double r) { return r * 180.0 / kPi; }

// Normalizes an angle to (-pi, pi].
inline double normalize_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

// Round-trips a value through "%.9g" so the stored decimal form and the
// in-memory form are the same number. Applied once when values are sampled;
// serialization then never loses precision.
inline double canon9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::strtod(buf, nullptr);
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  Vec2 xy() const { return {x, y}; }
};

// Row-major 3x3 matrix; just enough linear algebra for rigid transforms.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  double operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 3 + c)]; }
  double& operator()(int r, int c) { return m[static_cast<std::size_t>(r * 3 + c)]; }

  static Mat3 identity() { return {}; }

  // Intrinsic z-y-x convention: R = Rz(yaw) * Ry(pitch) * Rx(roll).
  static Mat3 rotation_zyx(double yaw, double pitch, double roll) {
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    const double cp = std::cos(pitch), sp = std::sin(pitch);
    const double cr = std::cos(roll), sr = std::sin(roll);
    Mat3 r;
    r(0, 0) = cy * cp;
    r(0, 1) = cy * sp * sr - sy * cr;
    r(0, 2) = cy * sp * cr + sy * sr;
    r(1, 0) = sy * cp;
    r(1, 1) = sy * sp * sr + cy * cr;
    r(1, 2) = sy * sp * cr - cy * sr;
    r(2, 0) = -sp;
    r(2, 1) = cp * sr;
    r(2, 2) = cp * cr;
    return r;
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }

  Vec3 operator*(const Vec3& v) const {
    return {(*this)(0, 0) * v.x + (*this)(0, 1) * v.y + (*this)(0, 2) * v.z,
            (*this)(1, 0) * v.x + (*this)(1, 1) * v.y + (*this)(1, 2) * v.z,
            (*this)(2, 0) * v.x + (*this)(2, 1) * v.y + (*this)(2, 2) * v.z};
  }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
};

// Recovers z-y-x angles from a rotation matrix. Near the pitch singularity
// (|cos pitch| ~ 0) roll is folded into yaw; our scenes never get there.
inline void euler_zyx(const Mat3& r, double& yaw, double& pitch, double& roll) {
  const double sy = std::hypot(r(0, 0), r(1, 0));
  if (sy > 1e-12) {
    yaw = std::atan2(r(1, 0), r(0, 0));
    pitch = std::atan2(-r(2, 0), sy);
    roll = std::atan2(r(2, 1), r(2, 2));
  } else {
    yaw = std::atan2(-r(0, 1), r(1, 1));
    pitch = r(2, 0) < 0.0 ? kPi / 2.0 : -kPi / 2.0;
    roll = 0.0;
  }
}

// Rigid transform. Angles are the source of truth; the matrix is rebuilt
// from them on construction so the two never drift apart.
struct Pose {
  Vec3 translation;
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  Mat3 rotation;

  Pose() = default;
  Pose(const Vec3& t, double yaw_, double pitch_ = 0.0, double roll_ = 0.0)
      : translation(t),
        yaw(normalize_angle(yaw_)),
        pitch(normalize_angle(pitch_)),
        roll(normalize_angle(roll_)),
        rotation(Mat3::rotation_zyx(yaw, pitch, roll)) {}

  Vec3 apply(const Vec3& v) const { return rotation * v + translation; }
};

// a then b applied in a's frame: world_from_b = world_from_a * a_from_b.
inline Pose compose(const Pose& a, const Pose& b) {
  const Mat3 r = a.rotation * b.rotation;
  double yaw, pitch, roll;
  euler_zyx(r, yaw, pitch, roll);
  return Pose(a.rotation * b.translation + a.translation, yaw, pitch, roll);
}

inline Pose invert(const Pose& p) {
  const Mat3 rt = p.rotation.transposed();
  double yaw, pitch, roll;
  euler_zyx(rt, yaw, pitch, roll);
  const Vec3 t = rt * p.translation;
  return Pose({-t.x, -t.y, -t.z}, yaw, pitch, roll);
}

struct PointXYZI {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
};

struct PointCloud {
  std::vector<PointXYZI> points;
  std::string frame_id;

  std::size_t size() const { return points.size(); }
};

// Applies target_from_source to every point. The frame tags exist to catch
// projection-chain bugs: transforming a cloud that is not in source_frame is
// an internal error, not a recoverable condition.
inline PointCloud transform_points(const Pose& target_from_source,
                                   const PointCloud& cloud,
                                   std::string_view source_frame,
                                   std::string_view target_frame) {
  if (cloud.frame_id != source_frame) {
    throw InternalError("transform_points: cloud is in frame '" +
                        cloud.frame_id + "', expected '" +
                        std::string(source_frame) + "'");
  }
  PointCloud out;
  out.frame_id = std::string(target_frame);
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) {
    const Vec3 q = target_from_source.apply({p.x, p.y, p.z});
    out.points.push_back({q.x, q.y, q.z, p.intensity});
  }
  return out;
}

// Axis-aligned in its own frame, rotated by yaw about +z in the parent
// frame. Extents are full lengths, not halves.
struct OrientedBox {
  Vec3 center;
  double length = 1.0;
  double width = 1.0;
  double height = 1.0;
  double yaw = 0.0;

  OrientedBox() = default;
  OrientedBox(const Vec3& c, double l, double w, double h, double yaw_)
      : center(c), length(l), width(w), height(h), yaw(normalize_angle(yaw_)) {
    if (!(l > 0.0) || !(w > 0.0) || !(h > 0.0))
      throw InternalError("OrientedBox: non-positive extent");
  }
};

struct ConvexPolygon {
  std::vector<Vec2> vertices;  // counter-clockwise

  double area() const {
    if (vertices.size() < 3) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      const Vec2& a = vertices[i];
      const Vec2& b = vertices[(i + 1) % vertices.size()];
      s += a.cross(b);
    }
    return 0.5 * s;
  }
};

// Footprint corners in the parent frame, counter-clockwise.
inline ConvexPolygon box_corners_bev(const OrientedBox& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = 0.5 * b.length, hw = 0.5 * b.width;
  ConvexPolygon poly;
  poly.vertices.reserve(4);
  const std::array<Vec2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  for (const Vec2& p : local) {
    poly.vertices.push_back(
        {b.center.x + c * p.x - s * p.y, b.center.y + s * p.x + c * p.y});
  }
  return poly;
}

// Epsilon used by the clipper's half-plane sign tests; absorbs collinear
// edges so shared boundaries do not flip in and out of the output.
inline constexpr double kClipEps = 1e-12;

// Sutherland-Hodgman: clips subject (convex, CCW) against clip (convex, CCW).
inline ConvexPolygon clip_convex(const ConvexPolygon& subject,
                                 const ConvexPolygon& clip) {
  std::vector<Vec2> out = subject.vertices;
  const std::size_t nc = clip.vertices.size();
  for (std::size_t e = 0; e < nc && !out.empty(); ++e) {
    const Vec2 a = clip.vertices[e];
    const Vec2 b = clip.vertices[(e + 1) % nc];
    const Vec2 dir = b - a;
    std::vector<Vec2> in;
    in.swap(out);
    const std::size_t n = in.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2& cur = in[i];
      const Vec2& nxt = in[(i + 1) % n];
      const double dc = dir.cross(cur - a);
      const double dn = dir.cross(nxt - a);
      const bool cur_in = dc >= -kClipEps;
      const bool nxt_in = dn >= -kClipEps;
      if (cur_in) out.push_back(cur);
      if (cur_in != nxt_in) {
        const double t = dc / (dc - dn);
        out.push_back(cur + (nxt - cur) * t);
      }
    }
  }
  ConvexPolygon result;
  if (out.size() >= 3) result.vertices = std::move(out);
  return result;
}

// Area of the intersection of two convex polygons. Degenerate input gives 0;
// the result never exceeds either input area.
inline double polygon_intersection_area(const ConvexPolygon& a,
                                        const ConvexPolygon& b) {
  const double area_a = a.area();
  const double area_b = b.area();
  if (!(area_a > 0.0) || !(area_b > 0.0)) return 0.0;
  const double inter = clip_convex(a, b).area();
  return std::clamp(inter, 0.0, std::min(area_a, area_b));
}

namespace detail {
inline bool box_less(const OrientedBox& a, const OrientedBox& b) {
  const std::array<double, 7> ka{a.center.x, a.center.y, a.center.z,
                                 a.length,   a.width,    a.height,
                                 a.yaw};
  const std::array<double, 7> kb{b.center.x, b.center.y, b.center.z,
                                 b.length,   b.width,    b.height,
                                 b.yaw};
  return ka < kb;
}
}  // namespace detail

// Intersection-over-union of the two footprints in the x-y plane. Arguments
// are ordered canonically first, which makes the result exactly symmetric.
inline double rotated_iou_bev(const OrientedBox& a, const OrientedBox& b) {
  const OrientedBox& lo = detail::box_less(b, a) ? b : a;
  const OrientedBox& hi = detail::box_less(b, a) ? a : b;
  const ConvexPolygon pa = box_corners_bev(lo);
  const ConvexPolygon pb = box_corners_bev(hi);
  const double inter = polygon_intersection_area(pa, pb);
  const double uni = pa.area() + pb.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// Boundary-inclusive containment test in the box frame.
inline bool point_in_box(const Vec3& p, const OrientedBox& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = p.x - b.center.x, dy = p.y - b.center.y,
               dz = p.z - b.center.z;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.length && std::abs(ly) <= 0.5 * b.width &&
         std::abs(dz) <= 0.5 * b.height;
}

// Andrew's monotone chain; returns the hull counter-clockwise.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Vec2& a, const Vec2& b) {
                          return a.x == b.x && a.y == b.y;
                        }),
            pts.end());
  const std::size_t n = pts.size();
  if (n < 3) return pts;
  std::vector<Vec2> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 &&
           (hull[k - 1] - hull[k - 2]).cross(pts[i] - hull[k - 2]) <= 0.0)
      --k;
    hull[k++] = pts[i];
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = n - 1; i-- > 0;) {
    while (k >= lower &&
           (hull[k - 1] - hull[k - 2]).cross(pts[i] - hull[k - 2]) <= 0.0)
      --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

// Oriented rectangle in the x-y plane. length >= width and yaw, the heading
// of the length axis, lies in (-pi/2, pi/2]; a rectangle's heading is only
// defined modulo pi.
struct FittedRect {
  Vec2 center;
  double length = 0.0;
  double width = 0.0;
  double yaw = 0.0;
};

namespace detail {
inline double rect_yaw_mod_pi(double a) {
  a = normalize_angle(a);
  if (a > kPi / 2.0) a -= kPi;
  if (a <= -kPi / 2.0) a += kPi;
  return a;
}
}  // namespace detail

// Minimum-area enclosing rectangle via rotating calipers over the convex
// hull. Ties in area go to the candidate with the smallest |yaw|. Collinear
// and single-point inputs degenerate to zero-width and zero-size rectangles.
inline FittedRect min_area_rect(std::span<const Vec2> points) {
  std::vector<Vec2> hull = convex_hull({points.begin(), points.end()});
  FittedRect best;
  if (hull.empty()) return best;
  if (hull.size() == 1) {
    best.center = hull[0];
    return best;
  }
  if (hull.size() == 2) {
    const Vec2 d = hull[1] - hull[0];
    best.center = (hull[0] + hull[1]) * 0.5;
    best.length = d.norm();
    best.width = 0.0;
    best.yaw = detail::rect_yaw_mod_pi(std::atan2(d.y, d.x));
    return best;
  }
  double best_area = std::numeric_limits<double>::infinity();
  const std::size_t n = hull.size();
  for (std::size_t e = 0; e < n; ++e) {
    const Vec2 edge = hull[(e + 1) % n] - hull[e];
    const double len = edge.norm();
    if (len < 1e-15) continue;
    const Vec2 u{edge.x / len, edge.y / len};
    const Vec2 v{-u.y, u.x};
    double umin = std::numeric_limits<double>::infinity(), umax = -umin;
    double vmin = umin, vmax = -umin;
    for (const Vec2& p : hull) {
      const double pu = p.dot(u);
      const double pv = p.dot(v);
      umin = std::min(umin, pu);
      umax = std::max(umax, pu);
      vmin = std::min(vmin, pv);
      vmax = std::max(vmax, pv);
    }
    const double du = umax - umin, dv = vmax - vmin;
    const double area = du * dv;
    FittedRect cand;
    const double cu = 0.5 * (umin + umax), cv = 0.5 * (vmin + vmax);
    cand.center = {u.x * cu + v.x * cv, u.y * cu + v.y * cv};
    if (du >= dv) {
      cand.length = du;
      cand.width = dv;
      cand.yaw = detail::rect_yaw_mod_pi(std::atan2(u.y, u.x));
    } else {
      cand.length = dv;
      cand.width = du;
      cand.yaw = detail::rect_yaw_mod_pi(std::atan2(v.y, v.x));
    }
    if (area < best_area - 1e-12 ||
        (area < best_area + 1e-12 && std::abs(cand.yaw) < std::abs(best.yaw))) {
      best_area = area;
      best = cand;
    }
  }
  return best;
}

}  // namespace coopsim
