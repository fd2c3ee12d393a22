#pragma once

#include <array>
#include <cmath>

namespace textdet {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  Point2 operator+(Point2 o) const { return {x + o.x, y + o.y}; }
  Point2 operator-(Point2 o) const { return {x - o.x, y - o.y}; }
  Point2 operator*(double s) const { return {x * s, y * s}; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::sqrt(dot(a, a)); }

/// Four vertices in clockwise order (image coordinates, y down), first vertex
/// the top-left corner by the ICDAR annotation convention. Degenerate quads
/// are representable; consumers treat them as zero-area.
struct Quadrilateral {
  std::array<Point2, 4> v{};

  Quadrilateral() = default;
  Quadrilateral(Point2 a, Point2 b, Point2 c, Point2 d) : v{a, b, c, d} {}

  /// Axis-aligned rectangle spanning [x0,x1] x [y0,y1], clockwise from top-left.
  static Quadrilateral rect(double x0, double y0, double x1, double y1) {
    return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  }

  bool finite() const;
  /// Shoelace signed area; positive for clockwise order in image coordinates.
  double signed_area() const;
  bool is_clockwise() const { return signed_area() > 0.0; }
  /// Convex and clockwise, allowing collinear (zero-cross) corners.
  bool is_convex() const;
  /// Boundary-inclusive point containment; assumes convex clockwise.
  bool contains(Point2 p) const;
  /// Clockwise order with the top-left-most vertex (min x+y, ties by y then x)
  /// first. Cyclic order of the input is preserved.
  Quadrilateral normalized() const;
};

/// |shoelace| area; 0 for degenerate input.
double polygon_area(const Quadrilateral& q);

enum class ConvexityPolicy { Lenient, Strict };

/// Area of a ∩ b by successive half-plane clipping. Requires convex input;
/// non-convex or misordered quads fall back to their convex hull in lenient
/// mode (with a rate-limited warning) and raise NonConvexInput in strict mode.
double intersection_area(const Quadrilateral& a, const Quadrilateral& b,
                         ConvexityPolicy policy = ConvexityPolicy::Lenient);

/// intersection / union in [0,1]; degenerate or empty unions give 0.
double iou(const Quadrilateral& a, const Quadrilateral& b,
           ConvexityPolicy policy = ConvexityPolicy::Lenient);

/// Smaller of the two averaged opposite-edge lengths. Annotated word quads are
/// near-parallelograms, so averaging opposite edges is robust to slight skew.
double short_side(const Quadrilateral& q);

/// The text center line: segment joining the midpoints of the two short edges.
struct Segment {
  Point2 a, b;
};
Segment center_line(const Quadrilateral& q);

/// Euclidean distance from p to the center-line segment.
double centerline_distance(Point2 p, const Quadrilateral& q);

double point_segment_distance(Point2 p, Point2 a, Point2 b);

/// Right-angle rotations, clockwise in image coordinates.
enum class Rotation { None, Quarter, Half, ThreeQuarter };

/// Maps a point through scale -> right-angle rotation about the scaled frame's
/// center -> translation into the crop frame. frame_w/frame_h are the
/// pre-scale frame dimensions.
Point2 transform_point(Point2 p, double scale, Rotation rot, double frame_w, double frame_h,
                       Point2 crop_origin);

/// transform_point applied per vertex, then clockwise-from-top-left
/// re-normalized (right-angle rotation changes which corner is top-left).
Quadrilateral transform_quad(const Quadrilateral& q, double scale, Rotation rot, double frame_w,
                             double frame_h, Point2 crop_origin);

}  // namespace textdet
