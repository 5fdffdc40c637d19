#include "gp/assignment.hpp"

#include <algorithm>
#include <numeric>

namespace gp {

std::vector<int> solve_assignment(const Mat& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw ValidationError("assignment cost matrix must be square");
  if (n == 0) return {};
  if (!cost.allFinite()) throw ValidationError("assignment cost matrix is not finite");

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is a virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);

  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(n);
  for (int j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

double assignment_cost(const Mat& cost, const std::vector<int>& assignment) {
  double total = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    total += cost(static_cast<Eigen::Index>(i), assignment[i]);
  return total;
}

std::vector<int> entropic_assignment(const Mat& cost, double epsilon, int max_iters, double tol) {
  const Eigen::Index n = cost.rows();
  if (cost.cols() != n) throw ValidationError("assignment cost matrix must be square");
  if (epsilon <= 0.0) throw ValidationError("entropic regularization must be positive");
  const double log_mu = -std::log(static_cast<double>(n));
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n), g = Eigen::VectorXd::Zero(n);

  auto softmin_rows = [&](const Eigen::VectorXd& pot, bool over_cols) {
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        const double c = over_cols ? cost(i, j) : cost(j, i);
        mx = std::max(mx, (pot[j] - c) / epsilon);
      }
      double s = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double c = over_cols ? cost(i, j) : cost(j, i);
        s += std::exp((pot[j] - c) / epsilon - mx);
      }
      out[i] = -epsilon * (mx + std::log(s) + log_mu);
    }
    return out;
  };

  for (int it = 0; it < max_iters; ++it) {
    const Eigen::VectorXd f_prev = f;
    f = softmin_rows(g, true);
    g = softmin_rows(f, false);
    if ((f - f_prev).cwiseAbs().maxCoeff() < tol * std::max(1.0, f.cwiseAbs().maxCoeff())) break;
  }

  // Greedy rounding of the plan: take entries in decreasing log-plan order.
  std::vector<std::pair<double, std::pair<int, int>>> entries;
  entries.reserve(static_cast<std::size_t>(n * n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      entries.push_back({(f[i] + g[j] - cost(i, j)) / epsilon,
                         {static_cast<int>(i), static_cast<int>(j)}});
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  std::vector<char> col_used(static_cast<std::size_t>(n), 0);
  Eigen::Index placed = 0;
  for (const auto& e : entries) {
    const auto [i, j] = e.second;
    if (assignment[i] >= 0 || col_used[j]) continue;
    assignment[i] = j;
    col_used[j] = 1;
    if (++placed == n) break;
  }
  return assignment;
}

Mat squared_distances(const PointSet& a, const PointSet& b) {
  if (a.cols() != b.cols()) throw ValidationError("point sets differ in dimension");
  // Direct differences; the |a|^2 + |b|^2 - 2ab expansion cancels badly for
  // nearby points and the exact-EMD contract is tight.
  Mat d(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) d(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  return d;
}

bool is_permutation(const std::vector<int>& p, int n) {
  if (static_cast<int>(p.size()) != n) return false;
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (int x : p) {
    if (x < 0 || x >= n || seen[x]) return false;
    seen[x] = 1;
  }
  return true;
}

}  // namespace gp
