#include <gtest/gtest.h>

#include "../common/oracles.hpp"
#include "gp/distances.hpp"
#include "gp/metrics.hpp"

using namespace gp;

namespace {

SewingPattern rect_pattern(std::vector<std::array<double, 4>> rects) {
  SewingPattern p;
  for (const auto& [x, y, w, h] : rects) {
    PatternPanel panel;
    panel.anchor = {x, y};
    panel.edges = {PatternEdge::straight({w, 0}), PatternEdge::straight({0, h}), PatternEdge::straight({-w, 0}),
                   PatternEdge::straight({0, -h})};
    p.panels.push_back(panel);
  }
  return p;
}

std::vector<PointSet> clouds(Rng& rng, int count, int n, double shift) {
  std::vector<PointSet> out;
  for (int i = 0; i < count; ++i) {
    PointSet p = rng.normal_matrix(n, 3);
    p.col(0).array() += shift;
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST(PanelIou, HandCases) {
  const SewingPattern a = rect_pattern({{0, 0, 2, 2}});
  EXPECT_NEAR(panel_iou(a, a), 1.0, 1e-12);
  EXPECT_NEAR(panel_iou(a, rect_pattern({{1, 0, 2, 2}})), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(panel_iou(a, rect_pattern({{10, 10, 2, 2}})), 0.0, 1e-12);
  // An extra predicted panel is unmatched and halves the mean.
  EXPECT_NEAR(panel_iou(rect_pattern({{0, 0, 2, 2}, {50, 0, 2, 2}}), a), 0.5, 1e-12);
}

TEST(PanelIou, InvalidPanelsScoreZero) {
  SewingPattern a = rect_pattern({{0, 0, 2, 2}});
  a.panels[0].valid = false;
  int degenerate = 0;
  EXPECT_EQ(panel_iou(a, rect_pattern({{0, 0, 2, 2}}), &degenerate), 0.0);
  EXPECT_EQ(degenerate, 1);
}

TEST(PanelMetrics, AccuracyAndStitches) {
  const SewingPattern one = rect_pattern({{0, 0, 2, 2}}), two = rect_pattern({{0, 0, 2, 2}, {5, 0, 2, 2}});
  EXPECT_DOUBLE_EQ(panel_accuracy({one, two}, {one, one}), 50.0);
  SewingPattern gt = two;
  gt.stitches = {{0, 1, 1, 3}};
  SewingPattern pred = two;
  EXPECT_DOUBLE_EQ(stitch_accuracy({pred}, {gt}), 0.0);
  pred.stitches = {{1, 3, 0, 1}};
  EXPECT_DOUBLE_EQ(stitch_accuracy({pred}, {gt}), 100.0);
  EXPECT_THROW(panel_accuracy({one}, {}), ValidationError);
}

TEST(PanelMetrics, MatchingFollowsCentroids) {
  const SewingPattern pred = rect_pattern({{20, 0, 2, 2}, {0, 0, 2, 2}});
  const SewingPattern gt = rect_pattern({{0.5, 0, 2, 2}, {20.5, 0, 2, 2}});
  auto m = match_panels(pred, gt);
  std::sort(m.begin(), m.end());
  EXPECT_EQ(m, (std::vector<std::pair<int, int>>{{0, 1}, {1, 0}}));
}

TEST(GenerationMetrics, SelfComparisonIsIdeal) {
  Rng rng(1);
  const auto s = clouds(rng, 12, 30, 0.0);
  EXPECT_DOUBLE_EQ(coverage(s, s), 100.0);
  EXPECT_DOUBLE_EQ(mmd(s, s), 0.0);
}

TEST(GenerationMetrics, SeparatedSetsAreFullyClassified) {
  Rng rng(2);
  const auto a = clouds(rng, 10, 30, 0.0), b = clouds(rng, 10, 30, 100.0);
  EXPECT_DOUBLE_EQ(one_nna(a, b).percent, 100.0);
  EXPECT_LT(coverage(a, b), 100.0);
}

TEST(GenerationMetrics, PairwiseChamferMatchesDirectRoute) {
  Rng rng(3);
  auto a = clouds(rng, 3, 20, 0.0), b = clouds(rng, 4, 25, 1.0);
  // Repeated rows, as produced by cycled resampling.
  a[0].bottomRows(5) = a[0].topRows(5);
  const Mat d = pairwise_chamfer(a, b);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j)
      EXPECT_NEAR(d(i, j), chamfer_symmetric(a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(j)]),
                  1e-9 * (1 + d(i, j)));
}

TEST(GenerationMetrics, OneNnaOnSmallMatricesByHand) {
  Mat gg(2, 2), gr(2, 2), rr(2, 2);
  gg << 0, 1, 1, 0;
  gr << 5, 3, 0.5, 6;
  rr << 0, 0.2, 0.2, 0;
  // g0 -> g1 (correct), g1 -> r0 (wrong), r0 -> r1 (correct), r1 -> r0 (correct).
  EXPECT_DOUBLE_EQ(one_nna(gg, gr, rr).percent, 75.0);
}

TEST(GenerationMetrics, SurfaceSampleHasFixedSize) {
  Rng rng(4);
  GarmentParticles x(rng.normal_matrix(40, 5), Eigen::VectorXd::Zero(40));
  EXPECT_EQ(surface_sample(x, 100).rows(), 100);
  EXPECT_EQ(surface_sample(x, 10).rows(), 10);
  EXPECT_EQ(surface_sample(x, 10, 3), surface_sample(x, 10, 3));
}
