#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <vector>

#include "coopsim/geom.hpp"
#include "coopsim/rng.hpp"
#include "oracles.hpp"

using namespace coopsim;

TEST_CASE("canon9 is a stable round trip") {
  CHECK(canon9(0.0) == 0.0);
  CHECK(canon9(1.0) == 1.0);
  CHECK(canon9(-42.5) == -42.5);
  SplitRng rng(11);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(-1e4, 1e4);
    const double c = canon9(x);
    CHECK(canon9(c) == c);
    CHECK(std::abs(c - x) <= 1e-6 * std::max(1.0, std::abs(x)));
  }
}

TEST_CASE("normalize_angle maps into (-pi, pi]") {
  CHECK(normalize_angle(0.0) == 0.0);
  CHECK(normalize_angle(kPi) == Catch::Approx(kPi));
  CHECK(normalize_angle(-kPi) == Catch::Approx(kPi));
  CHECK(normalize_angle(3.0 * kPi) == Catch::Approx(kPi));
  CHECK(normalize_angle(2.0 * kPi) == Catch::Approx(0.0).margin(1e-12));
  SplitRng rng(12);
  for (int i = 0; i < 200; ++i) {
    const double a = normalize_angle(rng.uniform(-50.0, 50.0));
    CHECK(a > -kPi - 1e-12);
    CHECK(a <= kPi + 1e-12);
  }
}

TEST_CASE("rotation matrices act as expected") {
  const Mat3 r = Mat3::rotation_zyx(deg2rad(90.0), 0.0, 0.0);
  const Vec3 v = r * Vec3{1.0, 0.0, 0.0};
  CHECK(v.x == Catch::Approx(0.0).margin(1e-12));
  CHECK(v.y == Catch::Approx(1.0));
  CHECK(v.z == Catch::Approx(0.0).margin(1e-12));

  SplitRng rng(13);
  for (int i = 0; i < 50; ++i) {
    const double yaw = rng.uniform(-3.0, 3.0);
    const double pitch = rng.uniform(-1.4, 1.4);
    const double roll = rng.uniform(-3.0, 3.0);
    const Mat3 m = Mat3::rotation_zyx(yaw, pitch, roll);
    double y2, p2, r2;
    euler_zyx(m, y2, p2, r2);
    const Mat3 m2 = Mat3::rotation_zyx(y2, p2, r2);
    for (int k = 0; k < 9; ++k) CHECK(m.m[k] == Catch::Approx(m2.m[k]).margin(1e-9));
  }
}

TEST_CASE("pose compose and invert round trip") {
  SplitRng rng(14);
  for (int i = 0; i < 50; ++i) {
    const Pose p({rng.uniform(-100.0, 100.0), rng.uniform(-100.0, 100.0),
                  rng.uniform(-5.0, 5.0)},
                 rng.uniform(-3.0, 3.0), 0.0, 0.0);
    const Pose q({rng.uniform(-100.0, 100.0), rng.uniform(-100.0, 100.0),
                  rng.uniform(-5.0, 5.0)},
                 rng.uniform(-3.0, 3.0), 0.0, 0.0);
    const Pose ident = compose(p, invert(p));
    CHECK(ident.translation.norm() < 1e-9);
    CHECK(std::abs(normalize_angle(ident.yaw)) < 1e-9);

    const Vec3 v{rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0), 0.0};
    const Vec3 via = compose(p, q).apply(v);
    const Vec3 direct = p.apply(q.apply(v));
    CHECK((via - direct).norm() < 1e-9);
  }
}

TEST_CASE("oriented box validation") {
  CHECK_THROWS_AS(OrientedBox({0, 0, 0}, 0.0, 1.0, 1.0, 0.0), InternalError);
  CHECK_THROWS_AS(OrientedBox({0, 0, 0}, 1.0, -1.0, 1.0, 0.0), InternalError);
  const OrientedBox b({0, 0, 0}, 4.0, 2.0, 1.5, 4.0);
  CHECK(b.yaw > -kPi);
  CHECK(b.yaw <= kPi);
}

TEST_CASE("iou of identical and disjoint boxes") {
  const OrientedBox a({3.0, -2.0, 0.0}, 4.5, 2.0, 1.6, 0.7);
  CHECK(rotated_iou_bev(a, a) == Catch::Approx(1.0).margin(1e-12));
  const OrientedBox far({300.0, 0.0, 0.0}, 4.5, 2.0, 1.6, 0.7);
  CHECK(rotated_iou_bev(a, far) == 0.0);
  const OrientedBox touch({3.0 + 4.5, -2.0, 0.0}, 4.5, 2.0, 1.6, 0.0);
  CHECK(rotated_iou_bev(OrientedBox({3.0, -2.0, 0.0}, 4.5, 2.0, 1.6, 0.0),
                        touch) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("iou matches closed forms") {
  // Unit squares offset by half a side overlap one third of their union.
  const OrientedBox a({0.0, 0.0, 0.0}, 1.0, 1.0, 1.0, 0.0);
  const OrientedBox b({0.5, 0.0, 0.0}, 1.0, 1.0, 1.0, 0.0);
  CHECK(rotated_iou_bev(a, b) == Catch::Approx(1.0 / 3.0).margin(1e-12));

  // A square against its own 45-degree rotation: iou = 1/sqrt(2).
  const OrientedBox sq({2.0, 3.0, 0.0}, 2.0, 2.0, 1.0, 0.0);
  const OrientedBox sq45({2.0, 3.0, 0.0}, 2.0, 2.0, 1.0, deg2rad(45.0));
  CHECK(rotated_iou_bev(sq, sq45) ==
        Catch::Approx(0.7071067811865475).margin(1e-9));
}

static OrientedBox random_box(SplitRng& rng) {
  return OrientedBox({rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0), 0.0},
                     rng.uniform(0.5, 9.0), rng.uniform(0.5, 9.0), 1.5,
                     rng.uniform(-kPi, kPi));
}

TEST_CASE("iou is symmetric to the bit") {
  SplitRng rng(15);
  for (int i = 0; i < 300; ++i) {
    const OrientedBox a = random_box(rng);
    const OrientedBox b = random_box(rng);
    const double ab = rotated_iou_bev(a, b);
    const double ba = rotated_iou_bev(b, a);
    CHECK(std::memcmp(&ab, &ba, sizeof(double)) == 0);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
  }
}

TEST_CASE("iou agrees with the rasterization oracle") {
  SplitRng rng(16);
  for (int i = 0; i < 200; ++i) {
    const OrientedBox a = random_box(rng);
    const OrientedBox b = random_box(rng);
    const double exact = rotated_iou_bev(a, b);
    const double approx = oracle::raster_iou(a, b, 500);
    CHECK(std::abs(exact - approx) < 7e-3);
  }
}

TEST_CASE("point_in_box includes the boundary") {
  const OrientedBox b({1.0, 2.0, 0.0}, 4.0, 2.0, 1.5, 0.0);
  CHECK(point_in_box({1.0, 2.0}, b));
  CHECK(point_in_box({3.0, 2.0}, b));   // right edge midpoint
  CHECK(point_in_box({3.0, 3.0}, b));   // corner
  CHECK(!point_in_box({3.001, 2.0}, b));
  CHECK(!point_in_box({1.0, 3.001}, b));
  const OrientedBox r({0.0, 0.0, 0.0}, 2.0, 2.0, 1.0, deg2rad(45.0));
  CHECK(point_in_box({std::sqrt(2.0) - 1e-9, 0.0}, r));
  CHECK(!point_in_box({std::sqrt(2.0) + 1e-9, 0.0}, r));
}

TEST_CASE("polygon clipping and area") {
  const ConvexPolygon sq{{{0, 0}, {2, 0}, {2, 2}, {0, 2}}};
  CHECK(sq.area() == Catch::Approx(4.0));
  const ConvexPolygon off{{{1, 1}, {3, 1}, {3, 3}, {1, 3}}};
  CHECK(polygon_intersection_area(sq, off) == Catch::Approx(1.0).margin(1e-12));
  const ConvexPolygon inside{{{0.5, 0.5}, {1.5, 0.5}, {1.5, 1.5}, {0.5, 1.5}}};
  CHECK(polygon_intersection_area(sq, inside) ==
        Catch::Approx(1.0).margin(1e-12));
  const ConvexPolygon outside{{{5, 5}, {6, 5}, {6, 6}, {5, 6}}};
  CHECK(polygon_intersection_area(sq, outside) == 0.0);
}

TEST_CASE("convex hull") {
  std::vector<Vec2> pts{{0, 0}, {2, 0}, {2, 2}, {0, 2}, {1, 1}, {0.5, 0.5}};
  const auto hull = convex_hull(pts);
  REQUIRE(hull.size() == 4);
  double area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& p = hull[i];
    const auto& q = hull[(i + 1) % hull.size()];
    area += p.x * q.y - q.x * p.y;
  }
  CHECK(0.5 * area == Catch::Approx(4.0));

  std::vector<Vec2> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  CHECK(convex_hull(line).size() == 2);
}

TEST_CASE("min_area_rect recovers rectangles") {
  SplitRng rng(17);
  for (int i = 0; i < 60; ++i) {
    const double cx = rng.uniform(-20.0, 20.0);
    const double cy = rng.uniform(-20.0, 20.0);
    const double len = rng.uniform(2.0, 8.0);
    const double wid = rng.uniform(0.5, len);
    const double yaw = rng.uniform(-1.5, 1.5);
    const double c = std::cos(yaw), s = std::sin(yaw);
    std::vector<Vec2> pts;
    for (int u = -1; u <= 1; u += 2) {
      for (int v = -1; v <= 1; v += 2) {
        const double lx = 0.5 * len * u, ly = 0.5 * wid * v;
        pts.push_back({cx + lx * c - ly * s, cy + lx * s + ly * c});
      }
    }
    pts.push_back({cx, cy});
    const FittedRect r = min_area_rect(pts);
    CHECK(r.center.x == Catch::Approx(cx).margin(1e-6));
    CHECK(r.center.y == Catch::Approx(cy).margin(1e-6));
    CHECK(r.length == Catch::Approx(len).margin(1e-6));
    CHECK(r.width == Catch::Approx(wid).margin(1e-6));
    CHECK(r.length >= r.width);
    if (wid < len - 1e-6) {
      const double delta = std::abs(normalize_angle(2.0 * (r.yaw - yaw))) / 2.0;
      CHECK(delta < 1e-6);
    }
    CHECK(r.yaw > -kPi / 2.0 - 1e-12);
    CHECK(r.yaw <= kPi / 2.0 + 1e-12);
  }
}

TEST_CASE("min_area_rect degenerate inputs") {
  const FittedRect single = min_area_rect(std::vector<Vec2>{{3.0, 4.0}});
  CHECK(single.center.x == Catch::Approx(3.0));
  CHECK(single.length == Catch::Approx(0.0).margin(1e-12));
  const FittedRect pair = min_area_rect(std::vector<Vec2>{{0.0, 0.0}, {2.0, 0.0}});
  CHECK(pair.length == Catch::Approx(2.0));
  CHECK(pair.width == Catch::Approx(0.0).margin(1e-12));
  CHECK(pair.center.x == Catch::Approx(1.0));
}

TEST_CASE("box corners wind counterclockwise") {
  const OrientedBox b({0.0, 0.0, 0.0}, 4.0, 2.0, 1.5, 0.3);
  const auto corners = box_corners_bev(b);
  REQUIRE(corners.vertices.size() == 4);
  CHECK(corners.area() == Catch::Approx(8.0));
}
