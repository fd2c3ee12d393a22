#include "textdet/geometry.hpp"

#include <algorithm>
#include <atomic>
#include <iostream>
#include <vector>

#include "textdet/errors.hpp"

namespace textdet {

bool Quadrilateral::finite() const {
  return v[0].finite() && v[1].finite() && v[2].finite() && v[3].finite();
}

double Quadrilateral::signed_area() const {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Point2& a = v[i];
    const Point2& b = v[(i + 1) % 4];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

bool Quadrilateral::is_convex() const {
  if (!is_clockwise()) return false;
  for (int i = 0; i < 4; ++i) {
    Point2 e0 = v[(i + 1) % 4] - v[i];
    Point2 e1 = v[(i + 2) % 4] - v[(i + 1) % 4];
    if (cross(e0, e1) < 0.0) return false;
  }
  return true;
}

bool Quadrilateral::contains(Point2 p) const {
  for (int i = 0; i < 4; ++i) {
    Point2 e = v[(i + 1) % 4] - v[i];
    if (cross(e, p - v[i]) < 0.0) return false;
  }
  return true;
}

Quadrilateral Quadrilateral::normalized() const {
  Quadrilateral q = *this;
  if (q.signed_area() < 0.0) std::swap(q.v[1], q.v[3]);
  int best = 0;
  for (int i = 1; i < 4; ++i) {
    double si = q.v[i].x + q.v[i].y;
    double sb = q.v[best].x + q.v[best].y;
    if (si < sb || (si == sb && (q.v[i].y < q.v[best].y ||
                                 (q.v[i].y == q.v[best].y && q.v[i].x < q.v[best].x)))) {
      best = i;
    }
  }
  Quadrilateral out;
  for (int i = 0; i < 4; ++i) out.v[i] = q.v[(best + i) % 4];
  return out;
}

double polygon_area(const Quadrilateral& q) { return std::abs(q.signed_area()); }

namespace {

// Scratch polygon for clipping: a quad clipped by four half-planes has at
// most 8 vertices.
struct Poly {
  std::array<Point2, 12> pts;
  int n = 0;
  void push(Point2 p) { pts[n++] = p; }
};

double poly_area(const Poly& p) {
  double s = 0.0;
  for (int i = 0; i < p.n; ++i) {
    const Point2& a = p.pts[i];
    const Point2& b = p.pts[(i + 1) % p.n];
    s += a.x * b.y - b.x * a.y;
  }
  return std::abs(0.5 * s);
}

// Sutherland-Hodgman clip of subject by the half-plane on the clockwise side
// of edge (a, b): keep points with cross(b - a, p - a) >= 0.
Poly clip_halfplane(const Poly& subject, Point2 a, Point2 b) {
  Poly out;
  Point2 e = b - a;
  for (int i = 0; i < subject.n; ++i) {
    Point2 cur = subject.pts[i];
    Point2 nxt = subject.pts[(i + 1) % subject.n];
    double dc = cross(e, cur - a);
    double dn = cross(e, nxt - a);
    if (dc >= 0.0) out.push(cur);
    if ((dc > 0.0 && dn < 0.0) || (dc < 0.0 && dn > 0.0)) {
      double t = dc / (dc - dn);
      out.push(cur + (nxt - cur) * t);
    }
  }
  return out;
}

std::atomic<int> g_nonconvex_warnings{0};

// Convex hull (monotone chain) of the quad's vertices, oriented clockwise for
// image coordinates. Used as the lenient fallback for non-convex input.
std::vector<Point2> convex_hull4(const Quadrilateral& q) {
  std::array<Point2, 4> p = q.v;
  std::sort(p.begin(), p.end(),
            [](Point2 a, Point2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  std::vector<Point2> hull;
  auto build = [&](auto begin, auto end) {
    size_t base = hull.size();
    for (auto it = begin; it != end; ++it) {
      while (hull.size() >= base + 2 &&
             cross(hull.back() - hull[hull.size() - 2], *it - hull[hull.size() - 2]) <= 0.0) {
        hull.pop_back();
      }
      hull.push_back(*it);
    }
    hull.pop_back();
  };
  build(p.begin(), p.end());
  build(p.rbegin(), p.rend());
  if (hull.size() < 3) return hull;
  // Monotone chain with the <= test above yields counterclockwise in math
  // coordinates, which is counterclockwise for image coordinates too under
  // our positive-is-clockwise shoelace convention; reverse to clockwise.
  double s = 0.0;
  for (size_t i = 0; i < hull.size(); ++i) {
    Point2 a = hull[i], b = hull[(i + 1) % hull.size()];
    s += a.x * b.y - b.x * a.y;
  }
  if (s < 0.0) std::reverse(hull.begin(), hull.end());
  return hull;
}

Poly as_convex_poly(const Quadrilateral& q, ConvexityPolicy policy) {
  Poly out;
  if (q.is_convex()) {
    for (const Point2& p : q.v) out.push(p);
    return out;
  }
  if (policy == ConvexityPolicy::Strict) {
    throw NonConvexInput("quadrilateral is not convex clockwise");
  }
  int n = g_nonconvex_warnings.fetch_add(1);
  if (n < 5) {
    std::clog << "textdet: non-convex quad, using convex hull"
              << (n == 4 ? " (suppressing further warnings)" : "") << "\n";
  }
  for (Point2 p : convex_hull4(q)) out.push(p);
  return out;
}

}  // namespace

double intersection_area(const Quadrilateral& a, const Quadrilateral& b, ConvexityPolicy policy) {
  Poly subject = as_convex_poly(a, policy);
  Poly clip = as_convex_poly(b, policy);
  if (subject.n < 3 || clip.n < 3) return 0.0;
  for (int i = 0; i < clip.n && subject.n >= 3; ++i) {
    subject = clip_halfplane(subject, clip.pts[i], clip.pts[(i + 1) % clip.n]);
  }
  if (subject.n < 3) return 0.0;
  return poly_area(subject);
}

double iou(const Quadrilateral& a, const Quadrilateral& b, ConvexityPolicy policy) {
  double inter = intersection_area(a, b, policy);
  double uni = polygon_area(a) + polygon_area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

namespace {

// Averaged lengths of the two opposite-edge pairs: (v0v1, v2v3) and (v1v2, v3v0).
std::array<double, 2> side_pair_lengths(const Quadrilateral& q) {
  double e0 = norm(q.v[1] - q.v[0]);
  double e1 = norm(q.v[2] - q.v[1]);
  double e2 = norm(q.v[3] - q.v[2]);
  double e3 = norm(q.v[0] - q.v[3]);
  return {0.5 * (e0 + e2), 0.5 * (e1 + e3)};
}

}  // namespace

double short_side(const Quadrilateral& q) {
  auto [a02, a13] = side_pair_lengths(q);
  return std::min(a02, a13);
}

Segment center_line(const Quadrilateral& q) {
  auto [a02, a13] = side_pair_lengths(q);
  if (a13 <= a02) {
    // Short edges are v1v2 and v3v0; the line runs along the long axis.
    return {(q.v[1] + q.v[2]) * 0.5, (q.v[3] + q.v[0]) * 0.5};
  }
  return {(q.v[0] + q.v[1]) * 0.5, (q.v[2] + q.v[3]) * 0.5};
}

double point_segment_distance(Point2 p, Point2 a, Point2 b) {
  Point2 ab = b - a;
  double len2 = dot(ab, ab);
  if (len2 == 0.0) return norm(p - a);
  double t = dot(p - a, ab) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return norm(p - (a + ab * t));
}

double centerline_distance(Point2 p, const Quadrilateral& q) {
  Segment s = center_line(q);
  return point_segment_distance(p, s.a, s.b);
}

Point2 transform_point(Point2 p, double scale, Rotation rot, double frame_w, double frame_h,
                       Point2 crop_origin) {
  Point2 s{p.x * scale, p.y * scale};
  double w = frame_w * scale;
  double h = frame_h * scale;
  Point2 r;
  switch (rot) {
    case Rotation::None:
      r = s;
      break;
    case Rotation::Quarter:
      r = {h - s.y, s.x};  // 90 degrees clockwise; frame becomes h x w
      break;
    case Rotation::Half:
      r = {w - s.x, h - s.y};  // point reflection through the frame center
      break;
    case Rotation::ThreeQuarter:
      r = {s.y, w - s.x};
      break;
  }
  return r - crop_origin;
}

Quadrilateral transform_quad(const Quadrilateral& q, double scale, Rotation rot, double frame_w,
                             double frame_h, Point2 crop_origin) {
  Quadrilateral out;
  for (int i = 0; i < 4; ++i) {
    out.v[i] = transform_point(q.v[i], scale, rot, frame_w, frame_h, crop_origin);
  }
  return out.normalized();
}

}  // namespace textdet
