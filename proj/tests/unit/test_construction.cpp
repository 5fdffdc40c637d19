#include <gtest/gtest.h>

#include "../common/oracles.hpp"
#include "gp/construction.hpp"
#include "gp/synthetic.hpp"

using namespace gp;

namespace {

PanelPolygon panel(const std::string& id, Polygon2 outline, Vec2 placement = Vec2::Zero(),
                   std::optional<std::string> parent = std::nullopt) {
  PanelPolygon p;
  p.id = id;
  p.label = id;
  p.outline = std::move(outline);
  p.placement = placement;
  p.parent = std::move(parent);
  return p;
}

Polygon2 rect(double w, double h) { return {{0, 0}, {w, 0}, {w, h}, {0, h}}; }

}  // namespace

TEST(SamplePanel, PointsLieInsideAndFlagsMarkTheOutline) {
  const Polygon2 outline{{0, 0}, {40, 0}, {50, 30}, {10, 45}, {-5, 20}};
  const PanelSamples s = sample_panel(outline, 20.0);
  ASSERT_EQ(s.uv.rows(), s.flags.size());
  int boundary = 0;
  for (Eigen::Index i = 0; i < s.uv.rows(); ++i) {
    const Vec2 p = s.uv.row(i).transpose();
    EXPECT_TRUE(contains(outline, p) || distance_to_boundary(outline, p) < 1e-9);
    if (s.flags[i] == 1.0) {
      ++boundary;
      EXPECT_LT(distance_to_boundary(outline, p), 1e-9);
    } else {
      EXPECT_GT(distance_to_boundary(outline, p), 1e-9);
    }
  }
  for (const auto& v : outline) {
    bool found = false;
    for (Eigen::Index i = 0; i < s.uv.rows(); ++i) found |= (s.uv.row(i).transpose() - v).norm() < 1e-12;
    EXPECT_TRUE(found);
  }
  // Outline spacing at most sqrt(area_per_point).
  EXPECT_GE(boundary, static_cast<int>(perimeter(outline) / std::sqrt(20.0)));
}

TEST(SamplePanel, CountScalesWithArea) {
  const auto small = sample_panel(rect(30, 30), 30.0).uv.rows();
  const auto large = sample_panel(rect(60, 60), 30.0).uv.rows();
  EXPECT_GT(large, 3 * small);
  EXPECT_THROW(sample_panel(rect(10, 10), 0.0), ValidationError);
}

TEST(PanelTree, RejectsCyclesDuplicatesAndMissingParents) {
  std::vector<PanelPolygon> ok{panel("a", rect(1, 1)), panel("b", rect(1, 1), Vec2::Zero(), "a")};
  EXPECT_NO_THROW(validate_panel_tree(ok));
  auto cyc = ok;
  cyc[0].parent = "b";
  EXPECT_THROW(validate_panel_tree(cyc), ValidationError);
  auto dup = ok;
  dup[1].id = "a";
  EXPECT_THROW(validate_panel_tree(dup), ValidationError);
  auto missing = ok;
  missing[1].parent = "zzz";
  EXPECT_THROW(validate_panel_tree(missing), ValidationError);
}

TEST(Packing, SeparatesOverlappingPanelsWithinTheBox) {
  std::vector<PanelPolygon> panels{panel("a", rect(40, 60)), panel("b", rect(40, 60), {10, 5}, "a"),
                                   panel("c", rect(30, 30), {5, 5}, "a")};
  PackingConfig cfg;
  const PackingResult r = pack_panels(panels, cfg);
  ASSERT_TRUE(r.success) << r.failure;
  EXPECT_LE(r.steps, cfg.max_steps);
  EXPECT_GE(min_padded_clearance(r.panels, cfg.pad), 0.0);
  for (const auto& p : r.panels) EXPECT_TRUE(cfg.bbox.contains(bounding_box(p.placed())));
}

TEST(Packing, IsDeterministic) {
  std::vector<PanelPolygon> panels{panel("a", rect(40, 60)), panel("b", rect(40, 60))};
  const auto r1 = pack_panels(panels), r2 = pack_panels(panels);
  for (std::size_t i = 0; i < panels.size(); ++i) EXPECT_EQ(r1.panels[i].placement, r2.panels[i].placement);
}

TEST(Packing, OversizedPanelIsRejected) {
  EXPECT_THROW(pack_panels({panel("a", rect(1000, 10))}), ValidationError);
}

TEST(BuildParticles, DomainProjectionStaysInPackedPanels) {
  for (int f = 0; f < kFamilyCount; ++f) {
    ParametricGarment g = generate_garment(static_cast<Family>(f), {}, 100 + f);
    ASSERT_TRUE(pack_garment(g).success);
    const GarmentParticles x = build_particles(g, 40.0);
    x.validate(1 << 20);
    const PointSet uv = project_domain(x);
    for (Eigen::Index i = 0; i < uv.rows(); ++i) {
      const Vec2 p = uv.row(i).transpose();
      double best = std::numeric_limits<double>::infinity();
      bool inside = false;
      for (const auto& pp : g.panels) {
        const Polygon2 poly = pp.placed();
        if (contains(poly, p) || distance_to_boundary(poly, p) <= 1e-6) {
          inside = true;
          best = std::min(best, distance_to_boundary(poly, p));
        }
      }
      ASSERT_TRUE(inside) << "particle " << i << " of family " << f;
      if (x.flags[i] == 1.0)
        EXPECT_LE(best, 1e-6);
      else
        EXPECT_GT(best, 1e-6);
    }
  }
}

TEST(BuildParticles, DrapeChannelsFollowTheAnalyticMap) {
  ParametricGarment g = generate_garment(Family::TubeSkirt, {}, 7);
  ASSERT_TRUE(pack_garment(g).success);
  const GarmentParticles x = build_particles(g, 60.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Vec2 uv = x.points.row(i).head<2>().transpose();
    double err = std::numeric_limits<double>::infinity();
    for (int p = 0; p < static_cast<int>(g.panels.size()); ++p)
      if (contains(g.panels[static_cast<std::size_t>(p)].placed(), uv) ||
          distance_to_boundary(g.panels[static_cast<std::size_t>(p)].placed(), uv) < 1e-6)
        err = std::min(err, (g.drape(p, uv) - x.points.row(i).tail<3>().transpose()).norm());
    EXPECT_LT(err, 1e-9);
  }
}
