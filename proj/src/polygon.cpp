#include "gp/polygon.hpp"

#include <algorithm>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>

namespace gp {

namespace bg = boost::geometry;
using BgPoint = bg::model::d2::point_xy<double>;
using BgPolygon = bg::model::polygon<BgPoint>;
using BgMulti = bg::model::multi_polygon<BgPolygon>;

double signed_area(const Polygon2& poly) {
  const std::size_t n = poly.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    s += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * s;
}

Vec2 centroid(const Polygon2& poly) {
  const double a = signed_area(poly);
  if (std::abs(a) < 1e-14) {
    Vec2 c = Vec2::Zero();
    for (const auto& p : poly) c += p;
    return poly.empty() ? c : Vec2(c / static_cast<double>(poly.size()));
  }
  Vec2 c = Vec2::Zero();
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % n];
    const double cr = p.x() * q.y() - q.x() * p.y();
    c += (p + q) * cr;
  }
  return c / (6.0 * a);
}

double perimeter(const Polygon2& poly) {
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) s += (poly[(i + 1) % poly.size()] - poly[i]).norm();
  return s;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 <= 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double distance_to_boundary(const Polygon2& poly, const Vec2& p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i)
    best = std::min(best, point_segment_distance(p, poly[i], poly[(i + 1) % poly.size()]));
  return best;
}

bool contains(const Polygon2& poly, const Vec2& p) {
  if (poly.size() < 3) return false;
  if (distance_to_boundary(poly, p) <= 1e-12) return true;
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

int orientation(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double v = cross(b - a, c - a);
  const double scale = (b - a).norm() * (c - a).norm();
  if (std::abs(v) <= 1e-14 * std::max(scale, 1e-300)) return 0;
  return v > 0 ? 1 : -1;
}

bool on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
  return p.x() <= std::max(a.x(), b.x()) + 1e-12 && p.x() >= std::min(a.x(), b.x()) - 1e-12 &&
         p.y() <= std::max(a.y(), b.y()) + 1e-12 && p.y() >= std::min(a.y(), b.y()) - 1e-12;
}

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const int o1 = orientation(p1, p2, q1), o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1), o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

double segment_distance(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  if (segments_intersect(a, b, c, d)) return 0.0;
  return std::min({point_segment_distance(a, c, d), point_segment_distance(b, c, d),
                   point_segment_distance(c, a, b), point_segment_distance(d, a, b)});
}

BgPolygon to_boost(const Polygon2& poly) {
  BgPolygon out;
  for (const auto& p : poly) bg::append(out.outer(), BgPoint(p.x(), p.y()));
  if (!poly.empty()) bg::append(out.outer(), BgPoint(poly.front().x(), poly.front().y()));
  bg::correct(out);
  return out;
}

}  // namespace

double polygon_distance(const Polygon2& a, const Polygon2& b) {
  if (a.empty() || b.empty()) throw ValidationError("distance to an empty polygon");
  if (contains(a, b.front()) || contains(b, a.front())) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec2& p1 = a[i];
    const Vec2& p2 = a[(i + 1) % a.size()];
    for (std::size_t j = 0; j < b.size(); ++j) {
      best = std::min(best, segment_distance(p1, p2, b[j], b[(j + 1) % b.size()]));
      if (best == 0.0) return 0.0;
    }
  }
  return best;
}

bool is_simple(const Polygon2& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i)
    if ((poly[(i + 1) % n] - poly[i]).norm() <= 1e-12) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec2& c = poly[j];
      const Vec2& d = poly[(j + 1) % n];
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) {
        // Adjacent edges may only share the common vertex: reject folds.
        const Vec2& shared = (j == i + 1) ? b : a;
        const Vec2& other1 = (j == i + 1) ? a : b;
        const Vec2& other2 = (j == i + 1) ? d : c;
        if (orientation(other1, shared, other2) == 0 &&
            (other1 - shared).dot(other2 - shared) > 0)
          return false;
        continue;
      }
      if (segments_intersect(a, b, c, d)) return false;
    }
  }
  return true;
}

Polygon2 translated(const Polygon2& poly, const Vec2& offset) {
  Polygon2 out = poly;
  for (auto& p : out) p += offset;
  return out;
}

Polygon2 counter_clockwise(Polygon2 poly) {
  if (signed_area(poly) < 0) std::reverse(poly.begin(), poly.end());
  return poly;
}

std::pair<double, double> project_extent(const Polygon2& poly, const Vec2& dir) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : poly) {
    const double s = p.dot(dir);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return {lo, hi};
}

double intersection_area(const Polygon2& a, const Polygon2& b) {
  if (a.size() < 3 || b.size() < 3) return 0.0;
  BgMulti out;
  try {
    bg::intersection(to_boost(a), to_boost(b), out);
  } catch (const bg::exception&) {
    return 0.0;  // self-intersecting input; callers treat it as degenerate
  }
  return bg::area(out);
}

double polygon_iou(const Polygon2& a, const Polygon2& b) {
  const double aa = area(a), ab = area(b);
  if (aa <= 0.0 || ab <= 0.0) return 0.0;
  const double inter = intersection_area(a, b);
  const double uni = aa + ab - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

Box2 bounding_box(const Polygon2& poly) {
  Box2 b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
         std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : poly) {
    b.min_u = std::min(b.min_u, p.x());
    b.max_u = std::max(b.max_u, p.x());
    b.min_v = std::min(b.min_v, p.y());
    b.max_v = std::max(b.max_v, p.y());
  }
  return b;
}

Box2 bounding_box(const std::vector<Polygon2>& polys) {
  Box2 b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
         std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& poly : polys) {
    const Box2 pb = bounding_box(poly);
    b.min_u = std::min(b.min_u, pb.min_u);
    b.max_u = std::max(b.max_u, pb.max_u);
    b.min_v = std::min(b.min_v, pb.min_v);
    b.max_v = std::max(b.max_v, pb.max_v);
  }
  return b;
}

}  // namespace gp
