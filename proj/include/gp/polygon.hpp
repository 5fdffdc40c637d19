#pragma once

#include <vector>

#include "gp/common.hpp"

namespace gp {

/// Closed polygon given by its vertices (last vertex connects to the first).
using Polygon2 = std::vector<Vec2>;

double signed_area(const Polygon2& poly);
inline double area(const Polygon2& poly) { return std::abs(signed_area(poly)); }
Vec2 centroid(const Polygon2& poly);
double perimeter(const Polygon2& poly);

/// Closed-set containment: points on the outline count as inside.
bool contains(const Polygon2& poly, const Vec2& p);
double distance_to_boundary(const Polygon2& poly, const Vec2& p);
double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);

/// Exact minimum distance between two polygons as closed regions (0 when
/// they touch, overlap, or one contains the other).
double polygon_distance(const Polygon2& a, const Polygon2& b);

/// No two non-adjacent edges intersect and adjacent edges only share their
/// common endpoint.
bool is_simple(const Polygon2& poly);

Polygon2 translated(const Polygon2& poly, const Vec2& offset);
Polygon2 counter_clockwise(Polygon2 poly);

/// Projection extent of a polygon along a unit direction.
std::pair<double, double> project_extent(const Polygon2& poly, const Vec2& dir);

/// Area of the intersection of two simple polygons (boolean clipping).
double intersection_area(const Polygon2& a, const Polygon2& b);
double polygon_iou(const Polygon2& a, const Polygon2& b);

struct Box2 {
  double min_u, max_u, min_v, max_v;
  double width() const { return max_u - min_u; }
  double height() const { return max_v - min_v; }
  bool contains(const Box2& o) const {
    return o.min_u >= min_u && o.max_u <= max_u && o.min_v >= min_v && o.max_v <= max_v;
  }
};
Box2 bounding_box(const Polygon2& poly);
Box2 bounding_box(const std::vector<Polygon2>& polys);

}  // namespace gp
