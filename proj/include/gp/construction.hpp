#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gp/particles.hpp"
#include "gp/polygon.hpp"

namespace gp {

/// One sewing-pattern panel. The outline is in local coordinates; the packed
/// position of a local point p is p + placement.
struct PanelPolygon {
  std::string id;
  std::string label;
  Polygon2 outline;
  Vec2 placement = Vec2::Zero();
  std::optional<std::string> parent;
  // Drape pose of the panel on the body (translation cm, Euler XYZ radians).
  Vec3 translation = Vec3::Zero();
  Vec3 rotation = Vec3::Zero();

  Polygon2 placed() const { return translated(outline, placement); }
  void validate() const;

  nlohmann::json to_json() const;
  static PanelPolygon from_json(const nlohmann::json& j);
};

/// Checks ids are unique, parents exist and parent links are acyclic.
void validate_panel_tree(const std::vector<PanelPolygon>& panels);

struct PackingConfig {
  double pad = 5.0;
  int max_steps = 500;
  Box2 bbox{-150.0, 150.0, -80.0, 220.0};
  double step_scale = 1.0;

  void validate() const;
};

struct PackingResult {
  std::vector<PanelPolygon> panels;
  bool success = false;
  int steps = 0;
  std::string failure;  // empty on success
};

/// Separates panels so their pad-inflated outlines do not overlap, then
/// shifts the layout into the bounding box. Overlapping pairs are resolved
/// siblings first, then child-parent, then any remaining pair.
/// Throws ValidationError if a single panel cannot fit in the box.
PackingResult pack_panels(std::vector<PanelPolygon> panels, const PackingConfig& cfg = {});

/// Minimum padded-overlap margin over all pairs: min(distance) - 2 pad.
/// Negative means some padded pair overlaps.
double min_padded_clearance(const std::vector<PanelPolygon>& panels, double pad);

struct PanelSamples {
  Mat uv;                 // n x 2
  Eigen::VectorXd flags;  // 1 on the outline, 0 inside
};

/// Area-proportional sampling of a polygon: outline vertices plus evenly spaced
/// outline points (spacing at most sqrt(area_per_point)) flagged 1, and
/// interior points from Delaunay refinement flagged 0.
PanelSamples sample_panel(const Polygon2& outline, double area_per_point);

struct Stitch {
  int panel_a, edge_a, panel_b, edge_b;  // edge i runs from vertex i to i+1
};

/// Analytic garment: panels with a closed-form drape map per panel.
struct ParametricGarment {
  std::string family;
  std::vector<std::pair<std::string, double>> params;
  std::vector<PanelPolygon> panels;
  std::vector<Stitch> stitches;
  std::vector<int> label_tokens;
  /// Maps a local (u, v) point on panel i to its draped 3D position.
  std::function<Vec3(int panel, const Vec2& local)> drape_local;

  /// Drape evaluated at packed pattern coordinates of panel i.
  Vec3 drape(int panel, const Vec2& packed) const;
  double param(const std::string& name) const;
};

/// Samples every panel at its packed placement and evaluates the drape.
/// Throws RuntimeFailure when the packed layout leaves the bounding box.
GarmentParticles build_particles(const ParametricGarment& garment, double area_per_point,
                                 const Box2& bbox = PackingConfig{}.bbox);

}  // namespace gp
