#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gp/common.hpp"
#include "gp/polygon.hpp"

namespace gp {

/// One boundary edge of a panel. c1/c2 are cubic control points relative to
/// the edge start; delta is the displacement to the edge end.
struct PatternEdge {
  Vec2 c1 = Vec2::Zero();
  Vec2 c2 = Vec2::Zero();
  Vec2 delta = Vec2::Zero();
  bool arc = false;
  bool stitched = false;
  Vec3 tag = Vec3::Zero();     // mean 3D midpoint of the stitched pair
  Vec3 attach = Vec3::Zero();  // opaque attachment type, zero in synthetic data

  static PatternEdge straight(const Vec2& delta);
};

struct PatternPanel {
  std::string id;
  Vec3 translation = Vec3::Zero();
  Vec3 rotation = Vec3::Zero();
  Vec2 anchor = Vec2::Zero();  // packed position of the first vertex
  std::vector<PatternEdge> edges;
  bool valid = true;  // false when decode could not close the loop

  /// Vertices obtained by chaining edge displacements from the anchor.
  Polygon2 polygon() const;
};

struct StitchPair {
  int panel_a, edge_a, panel_b, edge_b;
  bool operator==(const StitchPair&) const = default;
};

struct SewingPattern {
  std::vector<PatternPanel> panels;
  std::vector<StitchPair> stitches;

  std::vector<Polygon2> polygons() const;
  nlohmann::json to_json() const;
  static SewingPattern from_json(const nlohmann::json& j);
};

struct PatternDims {
  int max_panels = 8;
  int max_edges = 8;
  static constexpr int kChannels = 15;

  int rows() const { return max_panels * (max_edges + 1); }
  int size() const { return rows() * kChannels; }
};

// Channel layout of an edge row.
namespace edge_ch {
inline constexpr int kC1 = 0, kC2 = 2, kDelta = 4, kArc = 6, kStitch = 7, kTag = 8, kAttach = 11,
                     kValid = 14;
}
// Channel layout of a pose row; slots 8..14 are zero.
namespace pose_ch {
inline constexpr int kTranslation = 0, kRotation = 3, kAnchor = 6;
}

/// Row-major tensor of shape (max_panels * (max_edges + 1)) x 15. Row
/// p * (max_edges + 1) holds panel p's pose; the following rows its edges.
Mat encode_pattern(const SewingPattern& pattern, const PatternDims& dims = {});

/// Thresholds flags at 0.5, chains displacements, snaps loop closure up to
/// closure_tol (distributing the residual) and marks panels invalid beyond it.
/// Stitches are paired by mutually nearest tags among stitched edges.
SewingPattern decode_pattern(const Mat& tensor, const PatternDims& dims = {},
                             double closure_tol = 0.5);

}  // namespace gp
