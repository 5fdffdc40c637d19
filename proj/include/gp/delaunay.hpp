#pragma once

#include <array>
#include <vector>

#include "gp/common.hpp"

namespace gp {

/// Incremental Bowyer-Watson Delaunay triangulation of a planar point set.
/// Vertex indices refer to insertion order of the caller's points.
class DelaunayTriangulation {
 public:
  using Tri = std::array<int, 3>;

  DelaunayTriangulation() = default;
  explicit DelaunayTriangulation(const std::vector<Vec2>& points);

  /// Inserts a point and returns its vertex index. A point coinciding with an
  /// existing vertex returns that vertex instead.
  int insert(const Vec2& p);

  /// Live triangles not touching the enclosing super triangle, counter-clockwise.
  std::vector<Tri> triangles() const;

  int vertex_count() const { return static_cast<int>(pts_.size()) - 3; }
  const Vec2& vertex(int i) const { return pts_[static_cast<std::size_t>(i + 3)]; }
  std::vector<Vec2> vertices() const { return {pts_.begin() + 3, pts_.end()}; }

  static double triangle_area(const Vec2& a, const Vec2& b, const Vec2& c);
  /// Circumcenter, or nullopt-like NaN vector for degenerate triangles.
  static Vec2 circumcenter(const Vec2& a, const Vec2& b, const Vec2& c);

 private:
  struct Face {
    Tri v;  // internal indices (super vertices are 0..2)
    Vec2 center;
    double radius2;
    bool alive;
  };
  void init_super(const Vec2& lo, const Vec2& hi);
  void add_face(int a, int b, int c);

  std::vector<Vec2> pts_;
  std::vector<Face> faces_;
  bool initialized_ = false;
};

}  // namespace gp
