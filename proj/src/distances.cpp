#include "gp/distances.hpp"

#include <algorithm>
#include <numeric>

#include "gp/assignment.hpp"

namespace gp {

PointSetDistanceResult emd(const PointSet& a, const PointSet& b, const EmdOptions& opts) {
  if (a.rows() != b.rows())
    throw ValidationError("emd needs equal cardinalities (" + std::to_string(a.rows()) + " vs " +
                          std::to_string(b.rows()) + "); resample first");
  if (a.cols() != b.cols()) throw ValidationError("emd point sets differ in dimension");
  PointSetDistanceResult out;
  if (a.rows() == 0) {
    out.assignment = std::vector<int>{};
    return out;
  }
  const Mat cost = squared_distances(a, b);
  std::vector<int> assignment;
  if (a.rows() <= opts.exact_threshold) {
    assignment = solve_assignment(cost);
  } else {
    const double eps = std::max(opts.entropic_fraction * cost.mean(), 1e-12);
    assignment = entropic_assignment(cost, eps);
  }
  out.value = assignment_cost(cost, assignment);
  if (opts.with_gradient) out.gradient = emd_gradient(a, b, assignment);
  out.assignment = std::move(assignment);
  return out;
}

Mat emd_gradient(const PointSet& a, const PointSet& b, const std::vector<int>& assignment) {
  if (!is_permutation(assignment, static_cast<int>(a.rows())) || a.rows() != b.rows())
    throw ValidationError("assignment is not a bijection for these point sets");
  Mat g(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) g.row(i) = 2.0 * (a.row(i) - b.row(assignment[i]));
  return g;
}

PointSetDistanceResult chamfer_one_sided(const PointSet& y1, const PointSet& y2,
                                         bool with_gradient) {
  if (y1.rows() == 0 || y2.rows() == 0) throw ValidationError("chamfer on an empty point set");
  if (y1.cols() != y2.cols()) throw ValidationError("chamfer point sets differ in dimension");
  PointSetDistanceResult out;
  Mat grad;
  if (with_gradient) grad = Mat::Zero(y1.rows(), y1.cols());
  auto accumulate = [&](Eigen::Index i, int k, double d2) {
    out.value += d2;
    if (with_gradient) grad.row(k) += 2.0 * (y1.row(k) - y2.row(i));
  };
  if (y1.rows() * y2.rows() <= 4096) {
    for (Eigen::Index i = 0; i < y2.rows(); ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < y1.rows(); ++k) {
        const double d = (y1.row(k) - y2.row(i)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(k);
        }
      }
      accumulate(i, best, best_d);
    }
  } else {
    const KdTree tree(y1);
    for (Eigen::Index i = 0; i < y2.rows(); ++i) {
      const auto [k, d2] = tree.nearest(y2.row(i));
      accumulate(i, k, d2);
    }
  }
  if (with_gradient) out.gradient = std::move(grad);
  return out;
}

double chamfer_symmetric(const PointSet& a, const PointSet& b) {
  return chamfer_one_sided(a, b, false).value + chamfer_one_sided(b, a, false).value;
}

KdTree::KdTree(PointSet points) : points_(std::move(points)) {
  order_.resize(static_cast<std::size_t>(points_.rows()));
  std::iota(order_.begin(), order_.end(), 0);
  if (!order_.empty()) build(0, static_cast<int>(order_.size()), 0);
}

int KdTree::build(int begin, int end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= 8) return id;
  // Split on the widest axis.
  const int dims = static_cast<int>(points_.cols());
  int axis = 0;
  double widest = -1.0;
  for (int d = 0; d < dims; ++d) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i = begin; i < end; ++i) {
      lo = std::min(lo, points_(order_[i], d));
      hi = std::max(hi, points_(order_[i], d));
    }
    if (hi - lo > widest) {
      widest = hi - lo;
      axis = d;
    }
  }
  if (widest <= 0.0) return id;
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int x, int y) { return points_(x, axis) < points_(y, axis); });
  nodes_[id].axis = axis;
  nodes_[id].split = points_(order_[mid], axis);
  (void)depth;
  const int l = build(begin, mid, depth + 1);
  const int r = build(mid, end, depth + 1);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

void KdTree::search(int node, const Eigen::Ref<const Eigen::RowVectorXd>& q, int& best,
                    double& best_d) const {
  const Node& n = nodes_[node];
  if (n.axis < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      const int idx = order_[i];
      const double d = (points_.row(idx) - q).squaredNorm();
      if (d < best_d || (d == best_d && idx < best)) {
        best_d = d;
        best = idx;
      }
    }
    return;
  }
  const double diff = q(n.axis) - n.split;
  const int near = diff < 0 ? n.left : n.right;
  const int far = diff < 0 ? n.right : n.left;
  search(near, q, best, best_d);
  if (diff * diff <= best_d) search(far, q, best, best_d);
}

std::pair<int, double> KdTree::nearest(const Eigen::Ref<const Eigen::RowVectorXd>& q) const {
  if (nodes_.empty()) throw ValidationError("nearest-neighbor query on an empty tree");
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  search(0, q, best, best_d);
  return {best, best_d};
}

void KdTree::collect(int node, const Eigen::Ref<const Eigen::RowVectorXd>& q, double r2,
                     std::vector<int>& out) const {
  const Node& n = nodes_[node];
  if (n.axis < 0) {
    for (int i = n.begin; i < n.end; ++i)
      if ((points_.row(order_[i]) - q).squaredNorm() <= r2) out.push_back(order_[i]);
    return;
  }
  const double diff = q(n.axis) - n.split;
  if (diff <= 0 || diff * diff <= r2) collect(n.left, q, r2, out);
  if (diff >= 0 || diff * diff <= r2) collect(n.right, q, r2, out);
}

std::vector<int> KdTree::radius(const Eigen::Ref<const Eigen::RowVectorXd>& q, double r) const {
  std::vector<int> out;
  if (!nodes_.empty()) collect(0, q, r * r, out);
  return out;
}

std::vector<int> farthest_point_indices(const PointSet& p, int count, std::uint64_t seed) {
  const int n = static_cast<int>(p.rows());
  if (n == 0) throw ValidationError("farthest-point sampling of an empty set");
  if (count < 0) throw ValidationError("negative sample count");
  Rng rng(seed);
  const int first_count = std::min(count, n);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(count));
  if (first_count > 0) {
    Eigen::VectorXd dist = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    int current = rng.uniform_int(0, n - 1);
    for (int k = 0; k < first_count; ++k) {
      order.push_back(current);
      for (int i = 0; i < n; ++i)
        dist[i] = std::min(dist[i], (p.row(i) - p.row(current)).squaredNorm());
      Eigen::Index next = 0;
      dist.maxCoeff(&next);
      current = static_cast<int>(next);
    }
  }
  for (int k = first_count; k < count; ++k) order.push_back(order[static_cast<std::size_t>(k % n)]);
  return order;
}

PointSet farthest_point_resample(const PointSet& p, int count, std::uint64_t seed) {
  const auto idx = farthest_point_indices(p, count, seed);
  PointSet out(static_cast<Eigen::Index>(idx.size()), p.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = p.row(idx[k]);
  return out;
}

}  // namespace gp
