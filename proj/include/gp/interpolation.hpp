#pragma once

#include <vector>

#include "gp/flow.hpp"

namespace gp {

/// Per-row spherical interpolation of two equally shaped noise matrices.
/// Near-antipodal rows fall back to a renormalized linear blend.
Mat slerp_rows(const Mat& a, const Mat& b, double s);

/// Matches rows of noise_a to rows of noise_b by one assignment on pairwise
/// squared distances summed over `timesteps` evenly spaced points of both
/// sampling trajectories (t = 0 only when timesteps == 1). Returns
/// result[i] = row of noise_b paired with row i of noise_a.
std::vector<int> assign_correspondence(const FlowModel& model, const Mat& noise_a,
                                       const Mat& noise_b, const std::vector<int>& tokens,
                                       int timesteps = 5, int steps = 100);

struct InterpolationPath {
  Mat noise_a, noise_b;  // endpoint noises at their own counts
  Mat padded_a, padded_b;  // both extended to max(count_a, count_b) rows
  std::vector<int> correspondence;
  std::vector<int> tokens;
  int steps = 100;

  int count_a() const { return static_cast<int>(noise_a.rows()); }
  int count_b() const { return static_cast<int>(noise_b.rows()); }
  /// round(lerp(count_a, count_b, s)).
  int count_at(double s) const;
};

/// Builds a path between two seeded noises. The smaller endpoint is padded
/// with further rows of its own seeded draw.
InterpolationPath make_path(const FlowModel& model, std::uint64_t seed_a, int count_a,
                            std::uint64_t seed_b, int count_b, const std::vector<int>& tokens,
                            int timesteps = 5, int steps = 100);

/// Interpolated initial noise. s = 0 and s = 1 return the endpoint noises
/// themselves; otherwise rows follow noise_a's order and rows paired with
/// padding on the smaller side are dropped first.
Mat interpolation_noise(const InterpolationPath& path, double s);

GarmentParticles interpolate(const FlowModel& model, const InterpolationPath& path, double s);

}  // namespace gp
