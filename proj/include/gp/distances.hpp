#pragma once

#include <optional>
#include <vector>

#include "gp/common.hpp"

namespace gp {

struct PointSetDistanceResult {
  double value = 0.0;
  std::optional<std::vector<int>> assignment;  // EMD only: a[i] -> b[assignment[i]]
  std::optional<Mat> gradient;                 // w.r.t. the first argument
};

struct EmdOptions {
  int exact_threshold = 1024;
  /// Entropic regularization as a fraction of the mean pairwise cost.
  double entropic_fraction = 0.01;
  bool with_gradient = false;
};

/// Earth mover's distance with squared Euclidean ground cost between
/// equal-size point sets. Exact up to exact_threshold points.
PointSetDistanceResult emd(const PointSet& a, const PointSet& b, const EmdOptions& opts = {});

/// Gradient of sum_i |a_i - b_{s(i)}|^2 with the assignment held fixed.
Mat emd_gradient(const PointSet& a, const PointSet& b, const std::vector<int>& assignment);

/// sum over y2 in Y2 of min over y1 in Y1 of |y2 - y1|^2, with the gradient
/// w.r.t. Y1 through the fixed nearest-neighbor choice.
PointSetDistanceResult chamfer_one_sided(const PointSet& y1, const PointSet& y2,
                                         bool with_gradient = true);

double chamfer_symmetric(const PointSet& a, const PointSet& b);

/// Exact nearest-neighbor index over a fixed point set (k-d tree, dims 1..6).
class KdTree {
 public:
  explicit KdTree(PointSet points);

  /// Index of the nearest stored point and its squared distance. Ties go to
  /// the lowest index.
  std::pair<int, double> nearest(const Eigen::Ref<const Eigen::RowVectorXd>& q) const;

  /// Indices of all stored points within radius (inclusive), unordered.
  std::vector<int> radius(const Eigen::Ref<const Eigen::RowVectorXd>& q, double r) const;

  int size() const { return static_cast<int>(points_.rows()); }
  const PointSet& points() const { return points_; }

 private:
  struct Node {
    int begin, end;  // range into order_
    int axis = -1;   // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
  };
  int build(int begin, int end, int depth);
  void search(int node, const Eigen::Ref<const Eigen::RowVectorXd>& q, int& best,
              double& best_d) const;
  void collect(int node, const Eigen::Ref<const Eigen::RowVectorXd>& q, double r2,
               std::vector<int>& out) const;

  PointSet points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// Farthest-point sampling. Starts from a seeded random index; when count
/// exceeds the input size the FPS order is cycled (points repeat).
std::vector<int> farthest_point_indices(const PointSet& p, int count, std::uint64_t seed);
PointSet farthest_point_resample(const PointSet& p, int count, std::uint64_t seed);

}  // namespace gp
