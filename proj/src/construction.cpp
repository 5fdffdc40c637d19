#include "gp/construction.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "gp/delaunay.hpp"

namespace gp {

namespace {

nlohmann::json polygon_to_json(const Polygon2& poly) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : poly) out.push_back({p.x(), p.y()});
  return out;
}

Polygon2 polygon_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ValidationError("outline must be an array of [u, v] pairs");
  Polygon2 out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2) throw ValidationError("outline vertices need 2 coordinates");
    out.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

void PanelPolygon::validate() const {
  if (id.empty()) throw ValidationError("panel id is empty");
  if (outline.size() < 3) throw ValidationError("panel '" + id + "' has fewer than 3 vertices");
  for (const auto& p : outline)
    if (!p.allFinite()) throw ValidationError("panel '" + id + "' has non-finite vertices");
  if (area(outline) <= 1e-12) throw ValidationError("panel '" + id + "' has zero area");
  if (!is_simple(outline)) throw ValidationError("panel '" + id + "' outline self-intersects");
}

nlohmann::json PanelPolygon::to_json() const {
  nlohmann::json j{{"id", id},
                   {"label", label},
                   {"outline", polygon_to_json(outline)},
                   {"placement", {placement.x(), placement.y()}},
                   {"translation", {translation.x(), translation.y(), translation.z()}},
                   {"rotation", {rotation.x(), rotation.y(), rotation.z()}}};
  j["parent"] = parent ? nlohmann::json(*parent) : nlohmann::json(nullptr);
  return j;
}

PanelPolygon PanelPolygon::from_json(const nlohmann::json& j) {
  PanelPolygon p;
  try {
    p.id = j.at("id").get<std::string>();
    p.label = j.value("label", std::string{});
    p.outline = polygon_from_json(j.at("outline"));
    if (j.contains("placement")) p.placement = Vec2(j["placement"][0], j["placement"][1]);
    if (j.contains("translation"))
      p.translation = Vec3(j["translation"][0], j["translation"][1], j["translation"][2]);
    if (j.contains("rotation"))
      p.rotation = Vec3(j["rotation"][0], j["rotation"][1], j["rotation"][2]);
    if (j.contains("parent") && !j["parent"].is_null()) p.parent = j["parent"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed panel JSON: ") + e.what());
  }
  return p;
}

void validate_panel_tree(const std::vector<PanelPolygon>& panels) {
  std::map<std::string, const PanelPolygon*> by_id;
  for (const auto& p : panels) {
    p.validate();
    if (!by_id.emplace(p.id, &p).second) throw ValidationError("duplicate panel id '" + p.id + "'");
  }
  for (const auto& p : panels) {
    std::set<std::string> seen{p.id};
    const PanelPolygon* cur = &p;
    while (cur->parent) {
      auto it = by_id.find(*cur->parent);
      if (it == by_id.end())
        throw ValidationError("panel '" + cur->id + "' has unknown parent '" + *cur->parent + "'");
      if (!seen.insert(it->first).second) throw ValidationError("panel parent links form a cycle");
      cur = it->second;
    }
  }
}

void PackingConfig::validate() const {
  if (!(pad >= 0.0)) throw ValidationError("pad must be >= 0");
  if (max_steps < 1) throw ValidationError("max_steps must be >= 1");
  if (!(step_scale > 0.0)) throw ValidationError("step_scale must be > 0");
  if (!(bbox.width() > 0.0 && bbox.height() > 0.0)) throw ValidationError("bounding box is empty");
}

double min_padded_clearance(const std::vector<PanelPolygon>& panels, double pad) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < panels.size(); ++i)
    for (std::size_t j = i + 1; j < panels.size(); ++j)
      best = std::min(best, polygon_distance(panels[i].placed(), panels[j].placed()) - 2.0 * pad);
  return best;
}

PackingResult pack_panels(std::vector<PanelPolygon> panels, const PackingConfig& cfg) {
  cfg.validate();
  if (panels.empty()) throw ValidationError("nothing to pack");
  validate_panel_tree(panels);
  for (const auto& p : panels) {
    const Box2 b = bounding_box(p.outline);
    if (b.width() > cfg.bbox.width() || b.height() > cfg.bbox.height())
      throw ValidationError("panel '" + p.id + "' is larger than the bounding box; unpackable");
  }

  const int n = static_cast<int>(panels.size());
  std::map<std::string, int> index;
  for (int i = 0; i < n; ++i) index[panels[i].id] = i;
  auto parent_of = [&](int i) { return panels[i].parent ? index.at(*panels[i].parent) : -1; };

  // Pair schedule: siblings, then child-parent, then everything else.
  std::vector<std::pair<int, int>> order;
  for (int pass = 0; pass < 3; ++pass) {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const bool sibling = parent_of(i) == parent_of(j);
        const bool lineage = parent_of(i) == j || parent_of(j) == i;
        const int kind = sibling ? 0 : (lineage ? 1 : 2);
        if (kind == pass) order.emplace_back(i, j);
      }
    }
  }

  const double reach = 2.0 * cfg.pad;
  const double margin = 1e-9 * std::max(1.0, reach);
  PackingResult result;
  int step = 0;
  for (; step <= cfg.max_steps; ++step) {
    bool any = false;
    for (const auto& [i, j] : order) {
      const Polygon2 pi = panels[i].placed(), pj = panels[j].placed();
      const double dist = polygon_distance(pi, pj);
      if (dist >= reach) continue;
      any = true;
      if (step == cfg.max_steps) break;
      Vec2 dir = centroid(pj) - centroid(pi);
      if (dir.norm() < 1e-9) {
        Rng rng(derive_seed(fnv1a(panels[i].id), fnv1a(panels[j].id)));
        const double a = rng.uniform(0.0, 2.0 * M_PI);
        dir = Vec2(std::cos(a), std::sin(a));
      }
      dir.normalize();
      const double gap = project_extent(pj, dir).first - project_extent(pi, dir).second;
      double depth = reach - gap;
      if (depth <= 0.0) depth = reach - dist;
      const Vec2 shift = 0.5 * (cfg.step_scale * depth + margin) * dir;
      panels[i].placement -= shift;
      panels[j].placement += shift;
    }
    if (!any) break;
  }
  result.steps = std::min(step, cfg.max_steps);

  if (step > cfg.max_steps || min_padded_clearance(panels, cfg.pad) < 0.0) {
    result.failure = "padded overlap remains after " + std::to_string(cfg.max_steps) + " steps";
  } else {
    std::vector<Polygon2> placed;
    for (const auto& p : panels) placed.push_back(p.placed());
    const Box2 b = bounding_box(placed);
    if (b.width() > cfg.bbox.width() || b.height() > cfg.bbox.height()) {
      result.failure = "packed layout exceeds the bounding box";
    } else {
      Vec2 shift = Vec2::Zero();
      if (b.min_u < cfg.bbox.min_u) shift.x() = cfg.bbox.min_u - b.min_u;
      if (b.max_u > cfg.bbox.max_u) shift.x() = cfg.bbox.max_u - b.max_u;
      if (b.min_v < cfg.bbox.min_v) shift.y() = cfg.bbox.min_v - b.min_v;
      if (b.max_v > cfg.bbox.max_v) shift.y() = cfg.bbox.max_v - b.max_v;
      for (auto& p : panels) p.placement += shift;
      result.success = true;
    }
  }
  result.panels = std::move(panels);
  return result;
}

PanelSamples sample_panel(const Polygon2& outline_in, double area_per_point) {
  if (!(area_per_point > 0.0)) throw ValidationError("area_per_point must be > 0");
  if (outline_in.size() < 3 || area(outline_in) <= 1e-12 || !is_simple(outline_in))
    throw ValidationError("cannot sample a degenerate polygon");
  const Polygon2& outline = outline_in;
  const double h = std::sqrt(area_per_point);

  std::vector<Vec2> pts;
  const std::size_t nv = outline.size();
  for (std::size_t i = 0; i < nv; ++i) {
    const Vec2& a = outline[i];
    const Vec2& b = outline[(i + 1) % nv];
    const int m = std::max(1, static_cast<int>(std::ceil((b - a).norm() / h - 1e-9)));
    for (int k = 0; k < m; ++k) pts.push_back(a + (b - a) * (static_cast<double>(k) / m));
  }
  const int n_boundary = static_cast<int>(pts.size());

  DelaunayTriangulation dt(pts);
  const double cap = area_per_point;
  const double clearance = 0.3 * h;
  std::set<std::array<int, 3>> rejected;
  auto key = [](DelaunayTriangulation::Tri t) {
    std::sort(t.begin(), t.end());
    return t;
  };
  auto acceptable = [&](const Vec2& p) {
    return p.allFinite() && contains(outline, p) && distance_to_boundary(outline, p) >= clearance;
  };
  // Triangles spanned only by outline points would leave the panel without
  // interior support; they are split down to a quarter of the cap.
  auto excess = [&](const DelaunayTriangulation::Tri& t, double ar) {
    const bool all_boundary = t[0] < n_boundary && t[1] < n_boundary && t[2] < n_boundary;
    return ar - (all_boundary ? 0.25 * cap : cap);
  };

  // Refine the worst triangle inside the outline until all meet the cap.
  const int max_iters = 8 * static_cast<int>(area(outline) / area_per_point) + 64;
  for (int it = 0; it < max_iters; ++it) {
    double best = 0.0;
    std::optional<DelaunayTriangulation::Tri> pick;
    for (const auto& t : dt.triangles()) {
      const Vec2 &a = dt.vertex(t[0]), &b = dt.vertex(t[1]), &c = dt.vertex(t[2]);
      const double ar = DelaunayTriangulation::triangle_area(a, b, c);
      const double e = excess(t, ar);
      if (e <= best) continue;
      if (!contains(outline, (a + b + c) / 3.0)) continue;
      if (rejected.count(key(t))) continue;
      best = e;
      pick = t;
    }
    if (!pick) break;
    const Vec2 &a = dt.vertex((*pick)[0]), &b = dt.vertex((*pick)[1]), &c = dt.vertex((*pick)[2]);
    const Vec2 cc = DelaunayTriangulation::circumcenter(a, b, c);
    const Vec2 ct = (a + b + c) / 3.0;
    const int before = dt.vertex_count();
    if (acceptable(cc)) dt.insert(cc);
    else if (acceptable(ct)) dt.insert(ct);
    if (dt.vertex_count() == before) rejected.insert(key(*pick));
  }

  PanelSamples out;
  const int n = dt.vertex_count();
  out.uv.resize(n, 2);
  out.flags.resize(n);
  for (int i = 0; i < n; ++i) {
    out.uv.row(i) = dt.vertex(i).transpose();
    out.flags[i] = i < n_boundary ? 1.0 : 0.0;
  }
  return out;
}

Vec3 ParametricGarment::drape(int panel, const Vec2& packed) const {
  return drape_local(panel, packed - panels.at(static_cast<std::size_t>(panel)).placement);
}

double ParametricGarment::param(const std::string& name) const {
  for (const auto& [k, v] : params)
    if (k == name) return v;
  throw ValidationError("garment has no parameter '" + name + "'");
}

GarmentParticles build_particles(const ParametricGarment& garment, double area_per_point,
                                 const Box2& bbox) {
  if (!garment.drape_local) throw ValidationError("garment has no drape map");
  std::vector<Polygon2> placed;
  for (const auto& p : garment.panels) placed.push_back(p.placed());
  if (placed.empty()) throw ValidationError("garment has no panels");
  if (!bbox.contains(bounding_box(placed)))
    throw RuntimeFailure("packed pattern exceeds the bounding box");

  std::vector<PanelSamples> samples;
  int total = 0;
  for (const auto& p : garment.panels) {
    samples.push_back(sample_panel(p.outline, area_per_point));
    total += static_cast<int>(samples.back().uv.rows());
  }
  GarmentParticles out;
  out.points.resize(total, 5);
  out.flags.resize(total);
  int row = 0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& s = samples[k];
    const Vec2 offset = garment.panels[k].placement;
    for (Eigen::Index i = 0; i < s.uv.rows(); ++i, ++row) {
      const Vec2 local = s.uv.row(i).transpose();
      const Vec3 x = garment.drape_local(static_cast<int>(k), local);
      if (!x.allFinite()) throw RuntimeFailure("drape evaluation produced a non-finite point");
      out.points.row(row) << local.x() + offset.x(), local.y() + offset.y(), x.x(), x.y(), x.z();
      out.flags[row] = s.flags[i];
    }
  }
  return out;
}

}  // namespace gp
