#include "gp/pattern.hpp"

namespace gp {

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

template <int N>
Eigen::Matrix<double, N, 1> vec_from(const nlohmann::json& j, const char* name) {
  if (!j.is_array() || j.size() != N)
    throw ValidationError(std::string("pattern field '") + name + "' has the wrong length");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = j[i].get<double>();
  return v;
}

}  // namespace

PatternEdge PatternEdge::straight(const Vec2& delta) {
  PatternEdge e;
  e.delta = delta;
  e.c1 = delta / 3.0;
  e.c2 = 2.0 * delta / 3.0;
  return e;
}

Polygon2 PatternPanel::polygon() const {
  Polygon2 out;
  Vec2 p = anchor;
  for (const auto& e : edges) {
    out.push_back(p);
    p += e.delta;
  }
  return out;
}

std::vector<Polygon2> SewingPattern::polygons() const {
  std::vector<Polygon2> out;
  for (const auto& p : panels) out.push_back(p.polygon());
  return out;
}

nlohmann::json SewingPattern::to_json() const {
  nlohmann::json panels_j = nlohmann::json::array();
  for (const auto& p : panels) {
    nlohmann::json edges_j = nlohmann::json::array();
    for (const auto& e : p.edges) {
      edges_j.push_back({{"c1", vec_json(e.c1)},
                         {"c2", vec_json(e.c2)},
                         {"delta", vec_json(e.delta)},
                         {"arc", e.arc},
                         {"stitched", e.stitched},
                         {"tag", vec_json(e.tag)},
                         {"attach", vec_json(e.attach)}});
    }
    panels_j.push_back({{"id", p.id},
                        {"translation", vec_json(p.translation)},
                        {"rotation", vec_json(p.rotation)},
                        {"anchor", vec_json(p.anchor)},
                        {"valid", p.valid},
                        {"edges", edges_j}});
  }
  nlohmann::json stitches_j = nlohmann::json::array();
  for (const auto& s : stitches) stitches_j.push_back({s.panel_a, s.edge_a, s.panel_b, s.edge_b});
  return {{"panels", panels_j}, {"stitches", stitches_j}};
}

SewingPattern SewingPattern::from_json(const nlohmann::json& j) {
  SewingPattern out;
  try {
    for (const auto& pj : j.at("panels")) {
      PatternPanel p;
      p.id = pj.value("id", std::string{});
      p.translation = vec_from<3>(pj.at("translation"), "translation");
      p.rotation = vec_from<3>(pj.at("rotation"), "rotation");
      p.anchor = vec_from<2>(pj.at("anchor"), "anchor");
      p.valid = pj.value("valid", true);
      for (const auto& ej : pj.at("edges")) {
        PatternEdge e;
        e.c1 = vec_from<2>(ej.at("c1"), "c1");
        e.c2 = vec_from<2>(ej.at("c2"), "c2");
        e.delta = vec_from<2>(ej.at("delta"), "delta");
        e.arc = ej.value("arc", false);
        e.stitched = ej.value("stitched", false);
        if (ej.contains("tag")) e.tag = vec_from<3>(ej["tag"], "tag");
        if (ej.contains("attach")) e.attach = vec_from<3>(ej["attach"], "attach");
        p.edges.push_back(e);
      }
      out.panels.push_back(std::move(p));
    }
    if (j.contains("stitches")) {
      for (const auto& sj : j["stitches"]) {
        if (!sj.is_array() || sj.size() != 4) throw ValidationError("stitch needs 4 indices");
        out.stitches.push_back({sj[0].get<int>(), sj[1].get<int>(), sj[2].get<int>(), sj[3].get<int>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed pattern JSON: ") + e.what());
  }
  for (const auto& s : out.stitches) {
    auto ok = [&](int p, int e) {
      return p >= 0 && p < static_cast<int>(out.panels.size()) && e >= 0 &&
             e < static_cast<int>(out.panels[p].edges.size());
    };
    if (!ok(s.panel_a, s.edge_a) || !ok(s.panel_b, s.edge_b))
      throw ValidationError("stitch refers to a missing edge");
  }
  return out;
}

Mat encode_pattern(const SewingPattern& pattern, const PatternDims& dims) {
  if (static_cast<int>(pattern.panels.size()) > dims.max_panels)
    throw ValidationError("pattern has more panels than max_panels");
  Mat t = Mat::Zero(dims.rows(), PatternDims::kChannels);
  for (std::size_t p = 0; p < pattern.panels.size(); ++p) {
    const auto& panel = pattern.panels[p];
    if (static_cast<int>(panel.edges.size()) > dims.max_edges)
      throw ValidationError("panel has more edges than max_edges");
    const int base = static_cast<int>(p) * (dims.max_edges + 1);
    t.block<1, 3>(base, pose_ch::kTranslation) = panel.translation.transpose();
    t.block<1, 3>(base, pose_ch::kRotation) = panel.rotation.transpose();
    t.block<1, 2>(base, pose_ch::kAnchor) = panel.anchor.transpose();
    for (std::size_t k = 0; k < panel.edges.size(); ++k) {
      const auto& e = panel.edges[k];
      const int r = base + 1 + static_cast<int>(k);
      t.block<1, 2>(r, edge_ch::kC1) = e.c1.transpose();
      t.block<1, 2>(r, edge_ch::kC2) = e.c2.transpose();
      t.block<1, 2>(r, edge_ch::kDelta) = e.delta.transpose();
      t(r, edge_ch::kArc) = e.arc ? 1.0 : 0.0;
      t(r, edge_ch::kStitch) = e.stitched ? 1.0 : 0.0;
      t.block<1, 3>(r, edge_ch::kTag) = e.tag.transpose();
      t.block<1, 3>(r, edge_ch::kAttach) = e.attach.transpose();
      t(r, edge_ch::kValid) = 1.0;
    }
  }
  return t;
}

SewingPattern decode_pattern(const Mat& tensor, const PatternDims& dims, double closure_tol) {
  if (tensor.rows() != dims.rows() || tensor.cols() != PatternDims::kChannels)
    throw ValidationError("pattern tensor has the wrong shape");
  SewingPattern out;
  std::vector<std::vector<int>> slot_of_edge;  // per decoded panel: edge -> tensor row
  for (int p = 0; p < dims.max_panels; ++p) {
    const int base = p * (dims.max_edges + 1);
    PatternPanel panel;
    std::vector<int> rows;
    bool arc_error = false;
    for (int k = 0; k < dims.max_edges; ++k) {
      const int r = base + 1 + k;
      if (!(tensor(r, edge_ch::kValid) > 0.5)) continue;
      PatternEdge e;
      e.c1 = tensor.block<1, 2>(r, edge_ch::kC1).transpose();
      e.c2 = tensor.block<1, 2>(r, edge_ch::kC2).transpose();
      e.delta = tensor.block<1, 2>(r, edge_ch::kDelta).transpose();
      e.arc = tensor(r, edge_ch::kArc) > 0.5;
      e.stitched = tensor(r, edge_ch::kStitch) > 0.5;
      e.tag = tensor.block<1, 3>(r, edge_ch::kTag).transpose();
      e.attach = tensor.block<1, 3>(r, edge_ch::kAttach).transpose();
      arc_error = arc_error || e.arc;
      panel.edges.push_back(e);
      rows.push_back(r);
    }
    if (panel.edges.size() < 3) continue;
    panel.id = "panel_" + std::to_string(p);
    panel.translation = tensor.block<1, 3>(base, pose_ch::kTranslation).transpose();
    panel.rotation = tensor.block<1, 3>(base, pose_ch::kRotation).transpose();
    panel.anchor = tensor.block<1, 2>(base, pose_ch::kAnchor).transpose();

    Vec2 residual = Vec2::Zero();
    for (const auto& e : panel.edges) residual += e.delta;
    const double gap = residual.norm();
    if (gap > closure_tol) {
      panel.valid = false;
    } else if (gap > 1e-6) {
      const Vec2 fix = residual / static_cast<double>(panel.edges.size());
      for (auto& e : panel.edges) e.delta -= fix;
    }
    if (arc_error) panel.valid = false;
    out.panels.push_back(std::move(panel));
    slot_of_edge.push_back(std::move(rows));
  }

  // Pair stitched edges by mutually nearest tags.
  struct Ref {
    int panel, edge;
    Vec3 tag;
  };
  std::vector<Ref> refs;
  for (std::size_t p = 0; p < out.panels.size(); ++p)
    for (std::size_t k = 0; k < out.panels[p].edges.size(); ++k)
      if (out.panels[p].edges[k].stitched)
        refs.push_back({static_cast<int>(p), static_cast<int>(k), out.panels[p].edges[k].tag});
  auto nearest = [&](std::size_t i) {
    std::size_t best = i;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < refs.size(); ++j) {
      if (j == i) continue;
      const double d = (refs[i].tag - refs[j].tag).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    return best;
  };
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const std::size_t j = nearest(i);
    if (j > i && j != i && nearest(j) == i)
      out.stitches.push_back({refs[i].panel, refs[i].edge, refs[j].panel, refs[j].edge});
  }
  return out;
}

}  // namespace gp
