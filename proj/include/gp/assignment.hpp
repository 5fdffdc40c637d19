#pragma once

#include <vector>

#include "gp/common.hpp"

namespace gp {

/// Minimum-cost perfect matching on a square cost matrix (shortest augmenting
/// path with potentials, O(n^3)). Returns col[i] assigned to row i.
std::vector<int> solve_assignment(const Mat& cost);

/// Total cost of an assignment.
double assignment_cost(const Mat& cost, const std::vector<int>& assignment);

/// Entropic optimal transport (log-domain Sinkhorn, uniform marginals) rounded
/// to a permutation. Used above the exact-solver threshold.
std::vector<int> entropic_assignment(const Mat& cost, double epsilon, int max_iters = 500,
                                     double tol = 1e-9);

/// Pairwise squared Euclidean distances between rows of a and b.
Mat squared_distances(const PointSet& a, const PointSet& b);

bool is_permutation(const std::vector<int>& p, int n);

}  // namespace gp
