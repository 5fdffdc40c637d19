#include "gp/delaunay.hpp"

#include <algorithm>

namespace gp {

double DelaunayTriangulation::triangle_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

Vec2 DelaunayTriangulation::circumcenter(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Vec2 ab = b - a, ac = c - a;
  const double d = 2.0 * (ab.x() * ac.y() - ab.y() * ac.x());
  if (std::abs(d) < 1e-300) return Vec2::Constant(std::numeric_limits<double>::quiet_NaN());
  const double b2 = ab.squaredNorm(), c2 = ac.squaredNorm();
  return a + Vec2((ac.y() * b2 - ab.y() * c2) / d, (ab.x() * c2 - ac.x() * b2) / d);
}

DelaunayTriangulation::DelaunayTriangulation(const std::vector<Vec2>& points) {
  if (points.empty()) return;
  Vec2 lo = points.front(), hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  init_super(lo, hi);
  for (const auto& p : points) insert(p);
}

void DelaunayTriangulation::init_super(const Vec2& lo, const Vec2& hi) {
  const Vec2 c = 0.5 * (lo + hi);
  const double m = std::max({hi.x() - lo.x(), hi.y() - lo.y(), 1.0});
  pts_ = {Vec2(c.x() - 40 * m, c.y() - 20 * m), Vec2(c.x() + 40 * m, c.y() - 20 * m),
          Vec2(c.x(), c.y() + 40 * m)};
  faces_.clear();
  add_face(0, 1, 2);
  initialized_ = true;
}

void DelaunayTriangulation::add_face(int a, int b, int c) {
  const Vec2 cc = circumcenter(pts_[a], pts_[b], pts_[c]);
  const double r2 = cc.allFinite() ? (pts_[a] - cc).squaredNorm()
                                   : std::numeric_limits<double>::infinity();
  faces_.push_back({{a, b, c}, cc, r2, true});
}

int DelaunayTriangulation::insert(const Vec2& p) {
  if (!initialized_) init_super(p - Vec2(500, 500), p + Vec2(500, 500));
  for (std::size_t i = 3; i < pts_.size(); ++i)
    if ((pts_[i] - p).squaredNorm() <= 1e-20) return static_cast<int>(i) - 3;

  const int idx = static_cast<int>(pts_.size());
  pts_.push_back(p);

  std::vector<std::pair<int, int>> edges;
  bool any_bad = false;
  for (auto& f : faces_) {
    if (!f.alive) continue;
    bool bad;
    if (std::isinf(f.radius2)) {
      // Degenerate (collinear) face: treat as bad if p lies on its hull side.
      bad = triangle_area(pts_[f.v[0]], pts_[f.v[1]], p) >= 0 &&
            triangle_area(pts_[f.v[1]], pts_[f.v[2]], p) >= 0 &&
            triangle_area(pts_[f.v[2]], pts_[f.v[0]], p) >= 0;
    } else {
      bad = (p - f.center).squaredNorm() < f.radius2 * (1.0 - 1e-12);
    }
    if (!bad) continue;
    any_bad = true;
    f.alive = false;
    for (int k = 0; k < 3; ++k) edges.emplace_back(f.v[k], f.v[(k + 1) % 3]);
  }
  if (!any_bad) {
    // Cocircular tie: fall back to the face containing p.
    for (auto& f : faces_) {
      if (!f.alive) continue;
      if (triangle_area(pts_[f.v[0]], pts_[f.v[1]], p) >= 0 &&
          triangle_area(pts_[f.v[1]], pts_[f.v[2]], p) >= 0 &&
          triangle_area(pts_[f.v[2]], pts_[f.v[0]], p) >= 0) {
        f.alive = false;
        for (int k = 0; k < 3; ++k) edges.emplace_back(f.v[k], f.v[(k + 1) % 3]);
        break;
      }
    }
  }
  // Boundary of the cavity: directed edges whose reverse is absent.
  for (const auto& [a, b] : edges) {
    const bool shared =
        std::find(edges.begin(), edges.end(), std::make_pair(b, a)) != edges.end();
    if (shared) continue;
    if (triangle_area(pts_[a], pts_[b], p) <= 0) continue;
    add_face(a, b, idx);
  }

  std::size_t dead = 0;
  for (const auto& f : faces_) dead += f.alive ? 0 : 1;
  if (dead > faces_.size() / 2) {
    faces_.erase(std::remove_if(faces_.begin(), faces_.end(), [](const Face& f) { return !f.alive; }),
                 faces_.end());
  }
  return idx - 3;
}

std::vector<DelaunayTriangulation::Tri> DelaunayTriangulation::triangles() const {
  std::vector<Tri> out;
  for (const auto& f : faces_) {
    if (!f.alive || f.v[0] < 3 || f.v[1] < 3 || f.v[2] < 3) continue;
    if (triangle_area(pts_[f.v[0]], pts_[f.v[1]], pts_[f.v[2]]) <= 0) continue;
    out.push_back({f.v[0] - 3, f.v[1] - 3, f.v[2] - 3});
  }
  return out;
}

}  // namespace gp
