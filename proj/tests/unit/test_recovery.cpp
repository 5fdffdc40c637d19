#include <gtest/gtest.h>

#include <filesystem>

#include "../common/oracles.hpp"
#include "gp/metrics.hpp"
#include "gp/recovery.hpp"

using namespace gp;

namespace {

DatasetSample garment(Family f, std::uint64_t seed) {
  DatasetSpec spec;
  return make_sample(f, seed, spec);
}

GarmentParticles grid(double x0, int nx, int ny, double step) {
  Mat pts(nx * ny, 5);
  Eigen::VectorXd flags = Eigen::VectorXd::Zero(nx * ny);
  int k = 0;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j, ++k) {
      pts.row(k) << x0 + i * step, j * step, x0 + i * step, j * step, 0;
      flags[k] = (i == 0 || j == 0 || i == nx - 1 || j == ny - 1);
    }
  return {pts, flags};
}

GarmentParticles concat(const GarmentParticles& a, const GarmentParticles& b) {
  Mat pts(a.size() + b.size(), 5);
  pts << a.points, b.points;
  Eigen::VectorXd f(a.size() + b.size());
  f << a.flags, b.flags;
  return {pts, f};
}

}  // namespace

TEST(Clustering, SeparatedGridsFormTwoClusters) {
  const GarmentParticles x = concat(grid(0, 6, 6, 1.0), grid(20, 5, 4, 1.0));
  const ClusterResult c = cluster_panels(x);
  EXPECT_EQ(c.k, 2);
  for (int i = 0; i < 36; ++i) EXPECT_EQ(c.labels[static_cast<std::size_t>(i)], 0);
  for (int i = 36; i < 56; ++i) EXPECT_EQ(c.labels[static_cast<std::size_t>(i)], 1);
  EXPECT_NEAR(median_spacing(project_domain(x)), 1.0, 1e-12);
}

TEST(Clustering, IsolatedPointsAreOutliersAndAllOutliersFails) {
  GarmentParticles x = concat(grid(0, 5, 5, 1.0), grid(100, 1, 1, 1.0));
  const ClusterResult c = cluster_panels(x);
  EXPECT_EQ(c.k, 1);
  EXPECT_EQ(c.labels.back(), -1);
  Mat sparse(3, 5);
  sparse << 0, 0, 0, 0, 0, 50, 0, 0, 0, 0, 0, 90, 0, 0, 0;
  EXPECT_THROW(cluster_panels({sparse, Eigen::VectorXd::Zero(3)}), RuntimeFailure);
}

TEST(DelaunayRecovery, RectangleGridRecoversItsOutlineUpToCornerTriangles) {
  const GarmentParticles x = grid(0, 11, 6, 2.0);
  const SewingPattern p = recover_delaunay(x);
  ASSERT_EQ(p.panels.size(), 1u);
  SewingPattern gt;
  PatternPanel panel;
  panel.anchor = {0, 0};
  panel.edges = {PatternEdge::straight({20, 0}), PatternEdge::straight({0, 10}), PatternEdge::straight({-20, 0}),
                 PatternEdge::straight({0, -10})};
  gt.panels.push_back(panel);
  // A corner cell split along its anti-diagonal leaves an all-boundary
  // triangle of area 2, which is dropped; nothing else may be lost.
  const double area = signed_area(p.panels[0].polygon());
  const double cut = (200.0 - area) / 2.0;
  EXPECT_NEAR(cut, std::round(cut), 1e-9);
  EXPECT_GE(cut, 0.0);
  EXPECT_LE(cut, 4.0);
  EXPECT_NEAR(panel_iou(p, gt), area / 200.0, 1e-9);
  EXPECT_EQ(p.panels[0].edges.size(), 4u + static_cast<std::size_t>(std::round(cut)));
}

TEST(DelaunayRecovery, SyntheticGarmentsRecoverPanelsAndStitches) {
  for (int f = 0; f < kFamilyCount; ++f) {
    const DatasetSample s = garment(static_cast<Family>(f), 31 + f);
    SewingPattern p = recover_delaunay(s.particles);
    EXPECT_EQ(p.panels.size(), s.pattern.panels.size()) << family_name(s.family);
    EXPECT_GT(panel_iou(p, s.pattern), 0.9) << family_name(s.family);
    p.stitches = infer_stitches(p, s.particles);
    EXPECT_GE(stitch_accuracy({p}, {s.pattern}), 50.0) << family_name(s.family);
  }
}

TEST(StitchInference, TubeSkirtHasExactlyTwoSeams) {
  const DatasetSample s = garment(Family::TubeSkirt, 5);
  ASSERT_EQ(s.pattern.stitches.size(), 2u);
  SewingPattern p = recover_delaunay(s.particles);
  const auto st = infer_stitches(p, s.particles);
  EXPECT_EQ(st.size(), 2u);
  p.stitches = st;
  EXPECT_DOUBLE_EQ(stitch_accuracy({p}, {s.pattern}), 100.0);
}

TEST(StitchInference, PairingIsOneToOneAndSingleFlatPanelHasNone) {
  const DatasetSample s = garment(Family::SleevedTop, 6);
  const SewingPattern p = recover_delaunay(s.particles);
  const auto st = infer_stitches(p, s.particles);
  std::set<std::pair<int, int>> used;
  for (const auto& e : st) {
    EXPECT_TRUE(used.insert({e.panel_a, e.edge_a}).second);
    EXPECT_TRUE(used.insert({e.panel_b, e.edge_b}).second);
  }
  const GarmentParticles flat = grid(0, 8, 8, 2.0);
  EXPECT_TRUE(infer_stitches(recover_delaunay(flat), flat).empty());
}

TEST(PatternNoise, TouchesOnlyPatternCoordinates) {
  const DatasetSample s = garment(Family::ALineSkirt, 2);
  const GarmentParticles n = add_pattern_noise(s.particles, 0.05, 3);
  EXPECT_EQ(n.points.rightCols(3), s.particles.points.rightCols(3));
  EXPECT_EQ(n.flags, s.particles.flags);
  const double sd = std::sqrt((n.points.leftCols(2) - s.particles.points.leftCols(2)).array().square().mean());
  EXPECT_NEAR(sd, 7.5, 1.5);
  EXPECT_EQ(add_pattern_noise(s.particles, 0.05, 3).points, n.points);
  EXPECT_EQ(add_pattern_noise(s.particles, 0.0, 3).points, s.particles.points);
}

TEST(PatternModel, LossWeightsMaskInvalidSlots) {
  const DatasetSample s = garment(Family::TubeSkirt, 1);
  const PatternDims dims;
  const Mat t = encode_pattern(s.pattern, dims);
  const Mat w = pattern_loss_weights(t, dims);
  const int rows_per_panel = dims.max_edges + 1;
  for (int r = 0; r < dims.rows(); ++r) {
    const int panel = r / rows_per_panel;
    const bool present = panel < static_cast<int>(s.pattern.panels.size());
    const bool live = present && (r % rows_per_panel == 0 || t(r, edge_ch::kValid) > 0.5);
    for (int c = 0; c < PatternDims::kChannels; ++c) {
      const bool edge_row = r % rows_per_panel != 0;
      const double expect = live || (edge_row && c == edge_ch::kValid) ? 1.0 : 0.0;
      EXPECT_EQ(w(r, c), expect) << r << "," << c;
    }
  }
}

TEST(PatternModel, TrainsSavesAndLoads) {
  DatasetSpec spec;
  spec.n_garments = 6;
  spec.seed = 4;
  const Dataset d = generate_dataset(spec);
  std::vector<PatternTrainItem> items;
  for (const auto& s : d.samples) items.push_back({s.particles, encode_pattern(s.pattern)});
  const PatternDims dims;
  for (auto kind : {PatternModelKind::Flow, PatternModelKind::Regression}) {
    PatternModel m(kind, PatternModel::default_config(dims, 16, 1, 2), dims, 1);
    PatternTrainConfig cfg;
    cfg.iters = 60;
    cfg.lr = 3e-3;
    const FlowTrainResult r = train_pattern_model(m, items, cfg);
    EXPECT_LT(r.final_loss, r.zero_init_loss);
    const auto path = (std::filesystem::temp_directory_path() / "gp_unit_pattern.ckpt").string();
    m.save(path);
    const PatternModel back = PatternModel::load(path);
    EXPECT_EQ(back.kind(), kind);
    const auto x = d.samples[0].particles;
    if (kind == PatternModelKind::Flow)
      EXPECT_EQ(encode_pattern(ppf_sample(back, x, 5, 2)), encode_pattern(ppf_sample(m, x, 5, 2)));
    else
      EXPECT_EQ(encode_pattern(recover_regression(back, x)), encode_pattern(recover_regression(m, x)));
    std::filesystem::remove(path);
  }
}
