#pragma once

// Independent reference implementations shared by the unit and acceptance
// tests. They favor obviousness over speed.

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "gp/common.hpp"
#include "gp/flow.hpp"
#include "gp/synthetic.hpp"

namespace gp::oracle {

/// Minimum of sum_i cost(i, p(i)) over all permutations, with the minimizer.
inline std::pair<double, std::vector<int>> brute_force_assignment(const Mat& cost) {
  std::vector<int> p(static_cast<std::size_t>(cost.rows()));
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> arg = p;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += cost(static_cast<Eigen::Index>(i), p[i]);
    if (s < best) {
      best = s;
      arg = p;
    }
  } while (std::next_permutation(p.begin(), p.end()));
  return {best, arg};
}

inline Mat pairwise_sq(const PointSet& a, const PointSet& b) {
  Mat c(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) c(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  return c;
}

inline double brute_force_emd(const PointSet& a, const PointSet& b) {
  return brute_force_assignment(pairwise_sq(a, b)).first;
}

/// sum over rows q of b of the squared distance to the nearest row of a.
inline double brute_force_chamfer_one_sided(const PointSet& a, const PointSet& b) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < a.rows(); ++i) best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
    s += best;
  }
  return s;
}

/// Central differences of a scalar function of a matrix.
inline Mat numeric_gradient(const std::function<double(const Mat&)>& f, const Mat& x, double h = 1e-6) {
  Mat g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Mat xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    g.data()[i] = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(|a_i| + |b_i|, floor).
inline double max_rel_error(const Mat& a, const Mat& b, double floor = 1e-8) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double x = a.data()[i], y = b.data()[i];
    worst = std::max(worst, std::abs(x - y) / std::max(std::abs(x) + std::abs(y), floor));
  }
  return worst;
}

inline PointSet random_points(Rng& rng, int n, int dims, double scale = 1.0) {
  return rng.normal_matrix(n, dims) * scale;
}

/// Small flow model; zero_output false gives a non-trivial velocity field.
inline FlowModel tiny_flow(std::uint64_t seed, int n_max = 64, int width = 16, int depth = 1) {
  TransformerConfig c;
  c.width = width;
  c.depth = depth;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.time_dim = 16;
  c.cond_vocab = kCondTokens * (kFamilyCount + 1);
  FlowModel m(c, n_max, seed);
  Rng rng(seed ^ 0x51);
  for (double& v : m.net().params().values()) v += 0.05 * rng.normal();
  return m;
}

/// Explicit Euler loop written out independently of the library's integrator.
inline Mat euler_reference(const FlowModel& m, Mat x, const std::vector<int>& tokens, int steps) {
  const double dt = 1.0 / steps;
  for (int k = 0; k < steps; ++k) x = x + dt * m.velocity(x, static_cast<double>(k) / steps, tokens);
  return x;
}

}  // namespace gp::oracle
