#include <gtest/gtest.h>

#include "../common/oracles.hpp"
#include "gp/interpolation.hpp"

using namespace gp;

TEST(Slerp, EndpointsAndNormInterpolation) {
  Rng rng(1);
  const Mat a = rng.normal_matrix(10, 6), b = rng.normal_matrix(10, 6);
  EXPECT_LT((slerp_rows(a, b, 0.0) - a).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((slerp_rows(a, b, 1.0) - b).cwiseAbs().maxCoeff(), 1e-12);
  const Mat mid = slerp_rows(a, b, 0.5);
  for (int i = 0; i < 10; ++i) {
    // For equal norms the midpoint keeps the norm; in general it stays between them.
    const double lo = std::min(a.row(i).norm(), b.row(i).norm()), hi = std::max(a.row(i).norm(), b.row(i).norm());
    EXPECT_GE(mid.row(i).norm(), lo * (1 - 1e-9) * 0.5);
    EXPECT_LE(mid.row(i).norm(), hi * (1 + 1e-9));
  }
  Mat u(1, 3), v(1, 3);
  u << 1, 0, 0;
  v << 0, 1, 0;
  EXPECT_NEAR((slerp_rows(u, v, 0.5).row(0) - Eigen::RowVector3d(std::sqrt(0.5), std::sqrt(0.5), 0)).norm(), 0, 1e-12);
}

TEST(Slerp, AntipodalRowsStayFinite) {
  Mat a(1, 3), b(1, 3);
  a << 1, 2, 3;
  b = -a;
  EXPECT_TRUE(slerp_rows(a, b, 0.3).allFinite());
}

TEST(Correspondence, EqualsBruteForceOverTrajectories) {
  const FlowModel m = oracle::tiny_flow(2);
  const std::vector<int> tokens = label_tokens(1);
  for (int n = 2; n <= 6; ++n) {
    const Mat a = initial_noise(n, 10 + n), b = initial_noise(n, 20 + n);
    // Trajectory states at t = 0, 0.25, 0.5, 0.75, 1 with 8 Euler steps.
    Mat cost = Mat::Zero(n, n);
    Mat xa = a, xb = b;
    for (int k = 0; k <= 8; ++k) {
      if (k % 2 == 0) cost += oracle::pairwise_sq(xa, xb);
      if (k == 8) break;
      xa = xa + (1.0 / 8) * m.velocity(xa, k / 8.0, tokens);
      xb = xb + (1.0 / 8) * m.velocity(xb, k / 8.0, tokens);
    }
    const auto expect = oracle::brute_force_assignment(cost);
    const auto got = assign_correspondence(m, a, b, tokens, 5, 8);
    double got_cost = 0.0;
    for (int i = 0; i < n; ++i) got_cost += cost(i, got[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(got_cost, expect.first, 1e-9);
  }
}

TEST(Interpolation, EndpointsBitwiseEqualDirectSampling) {
  const FlowModel m = oracle::tiny_flow(3);
  const std::vector<int> tokens = label_tokens(2);
  const InterpolationPath path = make_path(m, 5, 12, 6, 17, tokens, 5, 10);
  const GarmentParticles a = interpolate(m, path, 0.0), b = interpolate(m, path, 1.0);
  const GarmentParticles sa = sample(m, 12, tokens, 10, 5), sb = sample(m, 17, tokens, 10, 6);
  EXPECT_EQ(a.points, sa.points);
  EXPECT_EQ(b.points, sb.points);
  EXPECT_EQ(a.flags, sa.flags);
  EXPECT_EQ(b.flags, sb.flags);
}

TEST(Interpolation, CountsInterpolateLinearly) {
  const FlowModel m = oracle::tiny_flow(4);
  const InterpolationPath path = make_path(m, 1, 10, 2, 20, null_label_tokens(), 3, 4);
  EXPECT_EQ(path.count_at(0.0), 10);
  EXPECT_EQ(path.count_at(0.5), 15);
  EXPECT_EQ(path.count_at(1.0), 20);
  for (double s : {0.1, 0.3, 0.7, 0.9}) EXPECT_EQ(interpolation_noise(path, s).rows(), path.count_at(s));
  EXPECT_EQ(path.padded_a.rows(), 20);
  EXPECT_EQ(path.padded_a.topRows(10), path.noise_a);
}

TEST(Interpolation, IntermediateNoiseIsContinuousInS) {
  const FlowModel m = oracle::tiny_flow(5);
  const InterpolationPath path = make_path(m, 3, 9, 4, 9, null_label_tokens(), 3, 4);
  const Mat p = interpolation_noise(path, 0.5), q = interpolation_noise(path, 0.5 + 1e-6);
  EXPECT_LT((p - q).cwiseAbs().maxCoeff(), 1e-4);
}
