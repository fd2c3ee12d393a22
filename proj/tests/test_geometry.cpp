#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "textdet/errors.hpp"
#include "textdet/geometry.hpp"

using namespace textdet;

namespace {
const Quadrilateral kUnitSquare = Quadrilateral::rect(0, 0, 1, 1);
}

TEST_CASE("polygon_area basics") {
  CHECK(polygon_area(kUnitSquare) == doctest::Approx(1.0));
  Quadrilateral collinear{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  CHECK(polygon_area(collinear) == doctest::Approx(0.0));
  Quadrilateral diamond{{0, -1}, {1, 0}, {0, 1}, {-1, 0}};
  CHECK(polygon_area(diamond) == doctest::Approx(2.0));
}

TEST_CASE("intersection_area on squares") {
  CHECK(intersection_area(kUnitSquare, kUnitSquare) == doctest::Approx(1.0));
  Quadrilateral shifted = Quadrilateral::rect(0.5, 0, 1.5, 1);
  CHECK(intersection_area(kUnitSquare, shifted) == doctest::Approx(0.5));
  Quadrilateral far = Quadrilateral::rect(5, 5, 6, 6);
  CHECK(intersection_area(kUnitSquare, far) == doctest::Approx(0.0));
}

TEST_CASE("intersection_area convexity policy") {
  Quadrilateral bowtie{{0, 0}, {1, 1}, {1, 0}, {0, 1}};
  CHECK_THROWS_AS(intersection_area(bowtie, kUnitSquare, ConvexityPolicy::Strict),
                  NonConvexInput);
  // Lenient mode clips against the hull, which for this bowtie is the square.
  CHECK(intersection_area(bowtie, kUnitSquare, ConvexityPolicy::Lenient) ==
        doctest::Approx(1.0));
  // Reversed (counterclockwise) order is a vertex-order reversal too.
  Quadrilateral ccw{{0, 0}, {0, 1}, {1, 1}, {1, 0}};
  CHECK_THROWS_AS(intersection_area(ccw, kUnitSquare, ConvexityPolicy::Strict), NonConvexInput);
  CHECK(intersection_area(ccw, kUnitSquare) == doctest::Approx(1.0));
}

TEST_CASE("iou basics") {
  CHECK(iou(kUnitSquare, kUnitSquare) == doctest::Approx(1.0));
  CHECK(iou(kUnitSquare, Quadrilateral::rect(3, 3, 4, 4)) == doctest::Approx(0.0));
  CHECK(iou(kUnitSquare, Quadrilateral::rect(0.5, 0, 1.5, 1)) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("degenerate quads give IoU 0, not NaN") {
  Quadrilateral degenerate{{2, 2}, {2, 2}, {2, 2}, {2, 2}};
  CHECK(iou(degenerate, kUnitSquare) == 0.0);
  CHECK(iou(degenerate, degenerate) == 0.0);
}

TEST_CASE("short_side") {
  CHECK(short_side(Quadrilateral::rect(0, 0, 100, 32)) == doctest::Approx(32.0));
  CHECK(short_side(kUnitSquare) == doctest::Approx(1.0));
  // 60x20 rectangle rotated by 30 degrees: rotation preserves edge lengths.
  double c = std::cos(M_PI / 6), s = std::sin(M_PI / 6);
  Point2 dir{c, s}, perp{-s, c};
  Quadrilateral rot{{0, 0},
                    {60 * dir.x, 60 * dir.y},
                    {60 * dir.x + 20 * perp.x, 60 * dir.y + 20 * perp.y},
                    {20 * perp.x, 20 * perp.y}};
  CHECK(short_side(rot) == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("centerline_distance") {
  Quadrilateral rect = Quadrilateral::rect(0, 0, 100, 32);
  CHECK(centerline_distance({50, 16}, rect) == doctest::Approx(0.0));
  // Corner projects onto the y=16 segment.
  CHECK(centerline_distance({0, 0}, rect) == doctest::Approx(16.0));
  // Beyond the segment end: distance to the nearest endpoint (0,16).
  CHECK(centerline_distance({-3, 12}, rect) == doctest::Approx(std::sqrt(9.0 + 16.0)));
}

TEST_CASE("transform_quad") {
  Quadrilateral rect = Quadrilateral::rect(10, 20, 110, 52);
  SUBCASE("identity") {
    Quadrilateral t = transform_quad(rect, 1.0, Rotation::None, 320, 320, {0, 0});
    for (int i = 0; i < 4; ++i) {
      CHECK(t.v[i].x == doctest::Approx(rect.v[i].x));
      CHECK(t.v[i].y == doctest::Approx(rect.v[i].y));
    }
  }
  SUBCASE("scale 0.5 halves a 100x32 rectangle") {
    Quadrilateral t = transform_quad(rect, 0.5, Rotation::None, 320, 320, {0, 0});
    CHECK(short_side(t) == doctest::Approx(16.0));
    CHECK(polygon_area(t) == doctest::Approx(100.0 * 32 / 4));
  }
  SUBCASE("pi rotation point-reflects through the frame center") {
    Quadrilateral t = transform_quad(rect, 1.0, Rotation::Half, 320, 320, {0, 0});
    // (10,20) -> (310,300), (110,52) -> (210,268); re-normalized clockwise
    // from top-left.
    CHECK(t.v[0].x == doctest::Approx(210.0));
    CHECK(t.v[0].y == doctest::Approx(268.0));
    CHECK(t.v[2].x == doctest::Approx(310.0));
    CHECK(t.v[2].y == doctest::Approx(300.0));
    CHECK(polygon_area(t) == doctest::Approx(3200.0));
  }
}

TEST_CASE("iou is symmetric on random convex quads") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    Quadrilateral a = test::random_convex_quad(rng);
    Quadrilateral b = test::random_convex_quad(rng);
    CHECK(iou(a, b) == doctest::Approx(iou(b, a)).epsilon(1e-12));
  }
}

TEST_CASE("intersection bounded by min area") {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    Quadrilateral a = test::random_convex_quad(rng);
    Quadrilateral b = test::random_convex_quad(rng);
    double inter = intersection_area(a, b);
    CHECK(inter >= 0.0);
    CHECK(inter <= std::min(polygon_area(a), polygon_area(b)) + 1e-9);
  }
}

TEST_CASE("Monte-Carlo IoU oracle (unit-test scale)") {
  Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    Quadrilateral a = test::random_convex_quad(rng);
    Quadrilateral b = test::random_convex_quad(rng);
    double exact = iou(a, b);
    double sampled = test::mc_iou(a, b, 100000, 1000 + static_cast<uint64_t>(i));
    CHECK(std::abs(exact - sampled) < 0.02);  // acceptance runs 1e6 samples at 0.01
  }
}

TEST_CASE("short_side and centerline_distance are rigid-invariant") {
  Rng rng(14);
  for (int i = 0; i < 100; ++i) {
    Quadrilateral q = test::random_convex_quad(rng);
    Point2 p{rng.uniform(0, 100), rng.uniform(0, 100)};
    double s0 = short_side(q);
    double d0 = centerline_distance(p, q);
    for (Rotation rot : {Rotation::Quarter, Rotation::Half, Rotation::ThreeQuarter}) {
      Quadrilateral tq = transform_quad(q, 1.0, rot, 100, 100, {-7.0, 3.0});
      Point2 tp = transform_point(p, 1.0, rot, 100, 100, {-7.0, 3.0});
      CHECK(short_side(tq) == doctest::Approx(s0).epsilon(1e-9));
      CHECK(centerline_distance(tp, tq) == doctest::Approx(d0).epsilon(1e-9));
    }
  }
}

TEST_CASE("transform_quad scale multiplies area by scale^2") {
  Rng rng(15);
  for (int i = 0; i < 100; ++i) {
    Quadrilateral q = test::random_convex_quad(rng);
    double s = rng.uniform(0.25, 3.0);
    Quadrilateral t = transform_quad(q, s, Rotation::None, 100, 100, {0, 0});
    CHECK(polygon_area(t) == doctest::Approx(s * s * polygon_area(q)).epsilon(1e-9));
  }
}

TEST_CASE("normalized keeps polygon and fixes order") {
  Quadrilateral q{{5, 0}, {5, 5}, {0, 5}, {0, 0}};  // clockwise, starts at top-right
  Quadrilateral n = q.normalized();
  CHECK(n.v[0].x == 0.0);
  CHECK(n.v[0].y == 0.0);
  CHECK(n.is_clockwise());
  CHECK(polygon_area(n) == doctest::Approx(polygon_area(q)));
}
