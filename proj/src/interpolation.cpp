#include "gp/interpolation.hpp"

#include <algorithm>

#include "gp/assignment.hpp"

namespace gp {

Mat slerp_rows(const Mat& a, const Mat& b, double s) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ValidationError("slerp shape mismatch");
  if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("s must lie in [0,1]");
  Mat out(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double na = a.row(i).norm(), nb = b.row(i).norm();
    if (na == 0.0 || nb == 0.0) {
      out.row(i) = (1.0 - s) * a.row(i) + s * b.row(i);
      continue;
    }
    const double cosv = std::clamp(a.row(i).dot(b.row(i)) / (na * nb), -1.0, 1.0);
    const double theta = std::acos(cosv);
    const double sn = std::sin(theta);
    if (sn < 1e-6) {
      Eigen::RowVectorXd lin = (1.0 - s) * a.row(i) + s * b.row(i);
      const double target = (1.0 - s) * na + s * nb;
      const double n = lin.norm();
      out.row(i) = n > 0.0 ? Eigen::RowVectorXd(lin * (target / n)) : lin;
      continue;
    }
    out.row(i) = (std::sin((1.0 - s) * theta) / sn) * a.row(i) + (std::sin(s * theta) / sn) * b.row(i);
  }
  return out;
}

std::vector<int> assign_correspondence(const FlowModel& model, const Mat& noise_a,
                                       const Mat& noise_b, const std::vector<int>& tokens,
                                       int timesteps, int steps) {
  if (noise_a.rows() != noise_b.rows() || noise_a.cols() != noise_b.cols())
    throw ValidationError("correspondence needs equally shaped noises");
  if (timesteps < 1 || steps < 1) throw ValidationError("timesteps and steps must be >= 1");
  std::vector<int> marks;
  for (int k = 0; k < timesteps; ++k)
    marks.push_back(timesteps == 1 ? 0 : static_cast<int>(std::lround(static_cast<double>(k) * steps / (timesteps - 1))));
  Mat cost = Mat::Zero(noise_a.rows(), noise_b.rows());
  Mat xa = noise_a, xb = noise_b;
  const double dt = 1.0 / steps;
  std::size_t next = 0;
  for (int step = 0; step <= steps && next < marks.size(); ++step) {
    while (next < marks.size() && marks[next] == step) {
      cost += squared_distances(xa, xb);
      ++next;
    }
    if (step == steps || next == marks.size()) break;
    const double t = static_cast<double>(step) / steps;
    xa = euler_step(model, xa, t, dt, tokens);
    xb = euler_step(model, xb, t, dt, tokens);
  }
  return solve_assignment(cost);
}

int InterpolationPath::count_at(double s) const {
  return static_cast<int>(std::lround((1.0 - s) * count_a() + s * count_b()));
}

InterpolationPath make_path(const FlowModel& model, std::uint64_t seed_a, int count_a,
                            std::uint64_t seed_b, int count_b, const std::vector<int>& tokens,
                            int timesteps, int steps) {
  if (count_a < 1 || count_b < 1 || count_a > model.n_max() || count_b > model.n_max())
    throw ValidationError("endpoint counts must lie in [1, n_max]");
  InterpolationPath p;
  const int n = std::max(count_a, count_b);
  p.noise_a = initial_noise(count_a, seed_a);
  p.noise_b = initial_noise(count_b, seed_b);
  // Row-major draws: the first count rows of an n-row draw are the endpoint.
  p.padded_a = initial_noise(n, seed_a);
  p.padded_b = initial_noise(n, seed_b);
  p.tokens = tokens.empty() ? null_label_tokens() : tokens;
  p.steps = steps;
  p.correspondence = assign_correspondence(model, p.padded_a, p.padded_b, p.tokens, timesteps, steps);
  return p;
}

Mat interpolation_noise(const InterpolationPath& path, double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("s must lie in [0,1]");
  if (s == 0.0) return path.noise_a;
  if (s == 1.0) return path.noise_b;
  const Eigen::Index n = path.padded_a.rows();
  Mat b(n, path.padded_b.cols());
  for (Eigen::Index i = 0; i < n; ++i) b.row(i) = path.padded_b.row(path.correspondence[static_cast<std::size_t>(i)]);
  const Mat z = slerp_rows(path.padded_a, b, s);
  const int count = path.count_at(s);
  // Rows whose smaller-side member is padding are dropped first, latest padding first.
  std::vector<std::pair<int, int>> drop_rank;
  for (Eigen::Index i = 0; i < n; ++i) {
    int pad_index = -1;
    if (path.count_a() < n && i >= path.count_a()) pad_index = static_cast<int>(i);
    const int j = path.correspondence[static_cast<std::size_t>(i)];
    if (path.count_b() < n && j >= path.count_b()) pad_index = j;
    drop_rank.push_back({pad_index, static_cast<int>(i)});
  }
  std::vector<bool> keep(static_cast<std::size_t>(n), true);
  std::sort(drop_rank.begin(), drop_rank.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second > y.second;
  });
  for (Eigen::Index k = 0; k < n - count; ++k) keep[static_cast<std::size_t>(drop_rank[static_cast<std::size_t>(k)].second)] = false;
  Mat out(count, z.cols());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (keep[static_cast<std::size_t>(i)]) out.row(r++) = z.row(i);
  return out;
}

GarmentParticles interpolate(const FlowModel& model, const InterpolationPath& path, double s) {
  return to_particles(model, integrate(model, interpolation_noise(path, s), path.tokens, path.steps));
}

}  // namespace gp
