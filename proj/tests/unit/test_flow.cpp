#include <gtest/gtest.h>

#include <filesystem>

#include "../common/oracles.hpp"
#include "gp/assignment.hpp"
#include "gp/flow.hpp"

using namespace gp;

namespace {

// Gradient of a scalar tape expression of two parameters against central differences.
double op_gradcheck(const std::function<nn::Tape::Id(nn::Tape&, nn::Tape::Id, nn::Tape::Id)>& op, int rows = 4,
                    int cols = 6, std::uint64_t seed = 1) {
  Rng rng(seed);
  nn::ParamStore store;
  store.add("a", rows, cols, 1.0, rng);
  store.add("b", rows, cols, 1.0, rng);
  Mat target;
  {
    nn::Tape probe(false);
    const Mat& out = probe.value(op(probe, probe.param(store, "a"), probe.param(store, "b")));
    target = rng.normal_matrix(static_cast<int>(out.rows()), static_cast<int>(out.cols()));
  }
  auto loss = [&](bool grad, std::vector<double>* g) {
    nn::Tape tape(grad);
    const auto out = tape.squared_error(op(tape, tape.param(store, "a"), tape.param(store, "b")), target, 3.0);
    if (grad) tape.backward(out, *g);
    return tape.value(out)(0, 0);
  };
  std::vector<double> g(store.size(), 0.0);
  loss(true, &g);
  Mat analytic = Eigen::Map<Mat>(g.data(), static_cast<Eigen::Index>(g.size()), 1);
  Mat fd(analytic.rows(), 1);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const double v = store.values()[i];
    store.values()[i] = v + 1e-5;
    const double fp = loss(false, nullptr);
    store.values()[i] = v - 1e-5;
    const double fm = loss(false, nullptr);
    store.values()[i] = v;
    fd(static_cast<Eigen::Index>(i), 0) = (fp - fm) / 2e-5;
  }
  return oracle::max_rel_error(analytic, fd, 1e-7);
}

}  // namespace

TEST(Tape, ElementaryOpsHaveCorrectGradients) {
  using T = nn::Tape;
  EXPECT_LT(op_gradcheck([](T& t, T::Id a, T::Id b) { return t.add(a, b); }), 1e-6);
  EXPECT_LT(op_gradcheck([](T& t, T::Id a, T::Id) { return t.silu(a); }), 1e-6);
  EXPECT_LT(op_gradcheck([](T& t, T::Id a, T::Id) { return t.gelu(a); }), 1e-6);
  EXPECT_LT(op_gradcheck([](T& t, T::Id a, T::Id) { return t.layernorm(a); }), 1e-6);
  EXPECT_LT(op_gradcheck([](T& t, T::Id a, T::Id b) { return t.scale(t.add(a, b), -0.7); }), 1e-6);
  EXPECT_LT(op_gradcheck([](T& t, T::Id a, T::Id b) { return t.slice_cols(t.add(a, b), 2, 3); }), 1e-6);
  EXPECT_LT(op_gradcheck([](T& t, T::Id a, T::Id b) { return t.attention(a, b, t.silu(b), 2); }), 1e-6);
  EXPECT_LT(op_gradcheck([](T& t, T::Id a, T::Id b) { return t.add_row(a, t.slice_cols(t.gather_rows(b, {1}), 0, 6)); }),
            1e-6);
  EXPECT_LT(op_gradcheck([](T& t, T::Id a, T::Id b) { return t.mul_row(a, t.gather_rows(b, {2})); }), 1e-6);
  EXPECT_LT(op_gradcheck([](T& t, T::Id a, T::Id b) {
              return t.modulate(a, t.gather_rows(b, {0}), t.gather_rows(b, {3}));
            }),
            1e-6);
}

TEST(Tape, MatmulGradient) {
  using T = nn::Tape;
  // (4x6)(6x4) uses a and the transpose-shaped slice of b.
  EXPECT_LT(op_gradcheck([](T& t, T::Id a, T::Id b) { return t.matmul(a, t.slice_cols(b, 0, 4)); }, 6, 6), 1e-6);
}

TEST(Transformer, ParameterGradientsMatchFiniteDifferences) {
  TransformerConfig c;
  c.width = 8;
  c.depth = 2;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.time_dim = 8;
  c.cond_vocab = 20;
  Transformer net(c, 3, false);
  Rng rng(4);
  const GradCheckReport r = gradient_check(net, rng.normal_matrix(5, 6), 0.4, {{1, 2, 3, 4}, {}},
                                           rng.normal_matrix(5, 6));
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_EQ(r.n_params, net.params().size());
}

TEST(Transformer, ZeroInitOutputIsZero) {
  TransformerConfig c;
  c.width = 16;
  c.depth = 1;
  c.heads = 2;
  c.cond_vocab = 20;
  Transformer net(c, 1);
  Rng rng(2);
  EXPECT_EQ(net.evaluate(rng.normal_matrix(7, 6), 0.5, {{0, 1, 2, 3}, {}}).cwiseAbs().maxCoeff(), 0.0);
}

TEST(FlowModel, VelocityIsPermutationEquivariant) {
  const FlowModel m = oracle::tiny_flow(1);
  Rng rng(5);
  const Mat x = rng.normal_matrix(9, 6);
  std::vector<int> perm{3, 1, 8, 0, 2, 7, 5, 4, 6};
  Mat xp(9, 6);
  for (int i = 0; i < 9; ++i) xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
  const Mat v = m.velocity(x, 0.3, label_tokens(1));
  const Mat vp = m.velocity(xp, 0.3, label_tokens(1));
  for (int i = 0; i < 9; ++i) EXPECT_LT((vp.row(i) - v.row(perm[static_cast<std::size_t>(i)])).norm(), 1e-10);
}

TEST(FlowModel, MaskedRowsGetZeroVelocityAndDoNotInfluenceOthers) {
  const FlowModel m = oracle::tiny_flow(2);
  Rng rng(6);
  const Mat x = rng.normal_matrix(6, 6);
  std::vector<bool> mask{true, true, true, true, false, false};
  const Mat v = m.velocity(x, 0.5, label_tokens(0), &mask);
  EXPECT_EQ(v.bottomRows(2).cwiseAbs().maxCoeff(), 0.0);
  const Mat v4 = m.velocity(x.topRows(4), 0.5, label_tokens(0));
  EXPECT_LT((v.topRows(4) - v4).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FlowModel, VelocityFiniteOnRandomInputs) {
  const FlowModel m = oracle::tiny_flow(3);
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Mat x(12, 6);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-5, 5);
    EXPECT_TRUE(m.velocity(x, rng.uniform(), label_tokens(trial % 5)).allFinite());
  }
}

TEST(FlowModel, ConditionChangesTheVelocity) {
  const FlowModel m = oracle::tiny_flow(4);
  Rng rng(8);
  const Mat x = rng.normal_matrix(8, 6);
  EXPECT_GT((m.velocity(x, 0.2, label_tokens(0)) - m.velocity(x, 0.2, label_tokens(3))).norm(), 1e-6);
}

TEST(Sampling, DeterministicAndMatchesReferenceEuler) {
  const FlowModel m = oracle::tiny_flow(5);
  const auto a = sample(m, 20, label_tokens(2), 10, 42);
  const auto b = sample(m, 20, label_tokens(2), 10, 42);
  EXPECT_EQ(a.points, b.points);
  const Mat ref = oracle::euler_reference(m, initial_noise(20, 42), label_tokens(2), 10);
  EXPECT_EQ(integrate(m, initial_noise(20, 42), label_tokens(2), 10), ref);
}

TEST(Sampling, PermutingNoisePermutesOutput) {
  const FlowModel m = oracle::tiny_flow(6);
  const Mat x0 = initial_noise(10, 3);
  std::vector<int> perm{9, 8, 7, 6, 5, 0, 1, 2, 3, 4};
  Mat xp(10, 6);
  for (int i = 0; i < 10; ++i) xp.row(i) = x0.row(perm[static_cast<std::size_t>(i)]);
  const Mat a = integrate(m, x0, label_tokens(1), 8), b = integrate(m, xp, label_tokens(1), 8);
  for (int i = 0; i < 10; ++i) EXPECT_LT((b.row(i) - a.row(perm[static_cast<std::size_t>(i)])).norm(), 1e-9);
}

TEST(Sampling, InitialNoisePrefixProperty) {
  EXPECT_EQ(initial_noise(5, 9), initial_noise(12, 9).topRows(5));
}

TEST(FlowModel, CheckpointRoundTripPreservesVelocity) {
  FlowModel m = oracle::tiny_flow(7);
  m.info()["note"] = "unit";
  const auto path = (std::filesystem::temp_directory_path() / "gp_unit_flow.ckpt").string();
  m.save(path);
  const FlowModel back = FlowModel::load(path);
  Rng rng(1);
  const Mat x = rng.normal_matrix(5, 6);
  EXPECT_EQ(back.velocity(x, 0.6, label_tokens(2)), m.velocity(x, 0.6, label_tokens(2)));
  EXPECT_EQ(back.info()["note"], "unit");
  std::filesystem::remove(path);
}

TEST(ChannelStats, NormalizeInvertsDenormalize) {
  Rng rng(9);
  const Mat a = rng.normal_matrix(30, 6) * 10.0, b = rng.normal_matrix(20, 6) * 3.0;
  const ChannelStats s = ChannelStats::fit({a, b});
  Mat all(50, 6);
  all << a, b;
  const Mat n = s.normalize(all);
  EXPECT_LT(n.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((s.denormalize(n) - all).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(OtPairing, MinimizesTotalSquaredDistance) {
  Rng rng(10);
  const Mat noise = rng.normal_matrix(6, 6), data = rng.normal_matrix(6, 6);
  const Mat paired = ot_pair_noise(noise, data);
  double total = 0.0;
  for (int i = 0; i < 6; ++i) total += (paired.row(i) - data.row(i)).squaredNorm();
  EXPECT_NEAR(total, oracle::brute_force_assignment(oracle::pairwise_sq(data, noise)).first, 1e-9);
}

TEST(Training, LossDecreasesOnATinyProblem) {
  TransformerConfig c;
  c.width = 16;
  c.depth = 1;
  c.heads = 2;
  c.cond_vocab = 20;
  FlowModel m(c, 32, 1);
  Rng rng(11);
  std::vector<FlowItem> items;
  for (int i = 0; i < 8; ++i) {
    Mat ch = rng.normal_matrix(12, 6) * 0.1;
    ch.col(0).array() += 5.0 * (i % 2);
    items.push_back({ch, label_tokens(i % 2)});
  }
  FlowTrainConfig tc;
  tc.iters = 1000;
  tc.batch = 4;
  tc.lr = 3e-3;
  tc.null_tokens = null_label_tokens();
  const FlowTrainResult r = train_flow(m, items, tc);
  EXPECT_EQ(r.losses.size(), 1000u);
  EXPECT_LT(r.final_loss, 0.75 * r.zero_init_loss);
}

TEST(Training, InvalidConfigIsRejected) {
  FlowModel m = oracle::tiny_flow(1);
  FlowTrainConfig tc;
  tc.lr = -1;
  EXPECT_THROW(train_flow(m, {{Mat::Zero(3, 6), label_tokens(0)}}, tc), ValidationError);
}
