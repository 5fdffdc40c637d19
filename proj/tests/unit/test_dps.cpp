#include <gtest/gtest.h>

#include "../common/oracles.hpp"
#include "gp/dps.hpp"

using namespace gp;

namespace {

EditRequest request(DpsTask task, const PointSet& obs, int T, std::uint64_t seed, std::optional<int> opt_n = {}) {
  EditRequest r;
  r.task = task;
  r.observation = obs;
  r.hyper.T = T;
  r.hyper.seed = seed;
  r.hyper.opt_n = opt_n;
  if (task == DpsTask::Silhouette) r.camera = Camera::front();
  return r;
}

}  // namespace

TEST(Dps, GuidanceOffBitMatchesUnguidedSampling) {
  const FlowModel m = oracle::tiny_flow(1);
  Rng rng(2);
  EditRequest r = request(DpsTask::PointcloudCondition, rng.normal_matrix(24, 3), 20, 77, 0);
  r.tokens = label_tokens(1);
  const DpsResult out = dps_sample(m, r);
  const GarmentParticles ref = sample(m, 24, label_tokens(1), 20, 77);
  EXPECT_EQ(out.particles.points, ref.points);
  EXPECT_EQ(out.particles.flags, ref.flags);
  for (const auto& e : out.trace) EXPECT_FALSE(e.guided);
}

TEST(Dps, StepsAfterStopTMatchPlainEuler) {
  const FlowModel m = oracle::tiny_flow(2);
  Rng rng(3);
  EditRequest r = request(DpsTask::PointcloudCondition, rng.normal_matrix(16, 3) * 30, 10, 5);
  r.hyper.stop_t = 0.35;
  int guided = 0;
  dps_sample(m, r, [&](const DpsTraceEntry& e) {
    EXPECT_EQ(e.guided, e.t <= 0.35);
    guided += e.guided;
  });
  EXPECT_EQ(guided, 4);  // t = 0, 0.1, 0.2, 0.3
}

TEST(Dps, GuidanceReducesTheObjective) {
  // Zero-initialized model: unguided output is the denormalized noise.
  TransformerConfig c;
  c.width = 16;
  c.depth = 1;
  c.heads = 2;
  c.cond_vocab = 20;
  const FlowModel m(c, 64, 1);
  Rng rng(4);
  const PointSet obs = rng.normal_matrix(32, 3) * 0.3;
  for (DpsTask task : {DpsTask::PointcloudCondition, DpsTask::Completion, DpsTask::PatternEdit,
                       DpsTask::Silhouette}) {
    const PointSet o = obs.leftCols(observation_dim(task));
    const double guided = dps_sample(m, request(task, o, 30, 9)).final_objective;
    const double unguided = evaluate_objective(request(task, o, 30, 9), sample(m, 32, null_label_tokens(), 30, 9));
    EXPECT_LT(guided, 0.5 * unguided) << task_name(task);
  }
}

TEST(Dps, TraceObjectiveHasOptNPlusOneEntries) {
  const FlowModel m = oracle::tiny_flow(3);
  Rng rng(5);
  const DpsResult out = dps_sample(m, request(DpsTask::Completion, rng.normal_matrix(8, 3), 5, 1, 3));
  ASSERT_EQ(out.trace.size(), 5u);
  EXPECT_EQ(out.trace[0].objective.size(), 4u);
  for (std::size_t i = 0; i < out.trace.size(); ++i) EXPECT_EQ(out.trace[i].step, static_cast<int>(i));
}

TEST(Dps, InnerLoopDoesNotIncreaseTheObjectiveForSmallEta) {
  const FlowModel m = oracle::tiny_flow(7);
  for (DpsTask task : {DpsTask::PointcloudCondition, DpsTask::Completion, DpsTask::Silhouette}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      Rng rng(seed);
      EditRequest r = request(task, rng.normal_matrix(20, observation_dim(task)) * 20, 12, seed, 6);
      r.hyper.eta = 0.01;
      int loops = 0;
      for (const auto& e : dps_sample(m, r).trace) {
        if (!e.guided) continue;
        ++loops;
        for (std::size_t k = 1; k < e.objective.size(); ++k)
          EXPECT_LE(e.objective[k], e.objective[k - 1] * (1 + 1e-12)) << task_name(task) << " step " << e.step;
      }
      EXPECT_GT(loops, 0);
    }
  }
}

TEST(Dps, SeedDeterministic) {
  const FlowModel m = oracle::tiny_flow(4);
  Rng rng(6);
  const auto r = request(DpsTask::PointcloudCondition, rng.normal_matrix(12, 3), 8, 3);
  EXPECT_EQ(dps_sample(m, r).particles.points, dps_sample(m, r).particles.points);
}

TEST(Dps, ParticleCountDefaultsToObservationSize) {
  const FlowModel m = oracle::tiny_flow(5, 20);
  Rng rng(7);
  EXPECT_EQ(dps_sample(m, request(DpsTask::PatternEdit, rng.normal_matrix(13, 2), 3, 1)).particles.size(), 13);
  EXPECT_EQ(dps_sample(m, request(DpsTask::PatternEdit, rng.normal_matrix(50, 2), 3, 1)).particles.size(), 20);
  auto r = request(DpsTask::PatternEdit, rng.normal_matrix(5, 2), 3, 1);
  r.hyper.N = 9;
  EXPECT_EQ(dps_sample(m, r).particles.size(), 9);
}

TEST(EditRequest, ValidationErrors) {
  Rng rng(8);
  auto sil = request(DpsTask::Silhouette, rng.normal_matrix(5, 2), 10, 0);
  sil.camera.reset();
  EXPECT_THROW(sil.validate(), ValidationError);
  EXPECT_THROW(request(DpsTask::PointcloudCondition, rng.normal_matrix(5, 2), 10, 0).validate(), ValidationError);
  EXPECT_THROW(request(DpsTask::PatternEdit, rng.normal_matrix(0, 2), 10, 0).validate(), ValidationError);
  auto bad = request(DpsTask::PatternEdit, rng.normal_matrix(5, 2), 10, 0);
  bad.hyper.stop_t = 1.5;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad.hyper.stop_t = 0.5;
  bad.hyper.eta = -1.0;
  EXPECT_THROW(bad.validate(), ValidationError);
  EXPECT_THROW(task_from_name("paint"), ValidationError);
}

TEST(EditRequest, JsonRoundTrip) {
  Rng rng(9);
  auto r = request(DpsTask::Silhouette, rng.normal_matrix(6, 2), 40, 12, 4);
  r.hyper.eta = 0.02;
  r.tokens = label_tokens(2);
  const EditRequest back = EditRequest::from_json(r.to_json());
  EXPECT_EQ(back.task, r.task);
  EXPECT_EQ(back.observation, r.observation);
  EXPECT_EQ(back.camera->P, r.camera->P);
  EXPECT_EQ(back.tokens, r.tokens);
  EXPECT_EQ(back.hyper.T, 40);
  EXPECT_EQ(*back.hyper.opt_n, 4);
  EXPECT_DOUBLE_EQ(*back.hyper.eta, 0.02);
  EXPECT_EQ(back.hyper.seed, 12u);
}

TEST(EditRequest, ObjectiveDefaults) {
  DpsConfig c;
  EXPECT_DOUBLE_EQ(c.eta_for(ObjectiveKind::Emd), 0.05);
  EXPECT_EQ(c.opt_n_for(ObjectiveKind::Emd), 2);
  EXPECT_DOUBLE_EQ(c.eta_for(ObjectiveKind::ChamferOneSided), 0.015);
  EXPECT_EQ(c.opt_n_for(ObjectiveKind::ChamferOneSided), 10);
  EXPECT_EQ(objective_for(DpsTask::Completion), ObjectiveKind::ChamferOneSided);
  EXPECT_EQ(objective_for(DpsTask::PatternCompletion), ObjectiveKind::ChamferOneSided);
  EXPECT_EQ(objective_for(DpsTask::Silhouette), ObjectiveKind::Emd);
}

TEST(ForwardMap, PullbackIsTheAdjointOfApply) {
  Rng rng(10);
  const Mat x = rng.normal_matrix(7, 5);
  for (DpsTask task : {DpsTask::PointcloudCondition, DpsTask::PatternEdit, DpsTask::Silhouette}) {
    const ForwardMap f = forward_map(task, Camera::azimuth(0.7));
    const Mat g = rng.normal_matrix(7, f.out_dim());
    const Mat dx = rng.normal_matrix(7, 5);
    // <g, A dx> == <A^T g, dx> for the linear map A.
    const double lhs = (g.array() * (f.apply(x + dx) - f.apply(x)).array()).sum();
    const double rhs = (f.pullback(g).array() * dx.array()).sum();
    EXPECT_NEAR(lhs, rhs, 1e-9) << task_name(task);
  }
}

TEST(ForwardMap, SilhouetteProjectsWithTheCamera) {
  const Camera cam = Camera::side();
  Mat x(1, 5);
  x << 1, 2, 3, 4, 5;
  const Mat y = forward_map(DpsTask::Silhouette, cam).apply(x);
  EXPECT_TRUE(y.row(0).isApprox(x.row(0).tail<3>() * cam.P));
}

TEST(Dps, PosteriorEstimatesRecoverStraightLineEndpoints) {
  Rng rng(11);
  const Mat x0 = rng.normal_matrix(5, 6), x1 = rng.normal_matrix(5, 6);
  const double t = 0.37;
  const auto [e0, e1] = posterior_estimates((1 - t) * x0 + t * x1, x1 - x0, t);
  EXPECT_LT((e0 - x0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((e1 - x1).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Objective, EmdTargetIsResampledToParticleCount) {
  Rng rng(12);
  const Objective o(ObjectiveKind::Emd, rng.normal_matrix(40, 3), 17, 1);
  EXPECT_EQ(o.target().rows(), 17);
  const Objective c(ObjectiveKind::ChamferOneSided, rng.normal_matrix(40, 3), 17, 1);
  EXPECT_EQ(c.target().rows(), 40);
}
