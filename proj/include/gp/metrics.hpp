#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "gp/particles.hpp"
#include "gp/pattern.hpp"

namespace gp {

inline constexpr int kSurfaceSamples = 1024;

/// Fixed-size 3D cloud of a garment: farthest-point resampling of its drape
/// coordinates (cycled when the garment has fewer particles).
PointSet surface_sample(const GarmentParticles& x, int count = kSurfaceSamples,
                        std::uint64_t seed = 0);

/// Symmetric Chamfer distance between every pair (rows: a, cols: b).
Mat pairwise_chamfer(const std::vector<PointSet>& a, const std::vector<PointSet>& b);

/// Percent of references that are the nearest reference of some generated cloud.
double coverage(const Mat& d_gen_ref);
double coverage(const std::vector<PointSet>& gen, const std::vector<PointSet>& ref);

/// Mean over references of the distance to the closest generated cloud.
double mmd(const Mat& d_gen_ref);
double mmd(const std::vector<PointSet>& gen, const std::vector<PointSet>& ref);

struct OneNnaResult {
  double percent = 0.0;
  int ties = 0;  // clouds whose nearest neighbor was decided by index order
};

/// Leave-one-out 1-NN accuracy over the union (generated first, then
/// references). Equal distances go to the lower union index.
OneNnaResult one_nna(const Mat& d_gen_gen, const Mat& d_gen_ref, const Mat& d_ref_ref);
OneNnaResult one_nna(const std::vector<PointSet>& gen, const std::vector<PointSet>& ref);

struct GenEvalReport {
  double cov = 0.0;
  double mmd = 0.0;
  double one_nna = 0.0;
  int one_nna_ties = 0;
  int n_generated = 0;
  int n_reference = 0;

  nlohmann::json to_json() const;
};

GenEvalReport evaluate_generation(const std::vector<PointSet>& gen, const std::vector<PointSet>& ref);

/// Greedy matching of panels by centroid distance: (pred index, gt index).
std::vector<std::pair<int, int>> match_panels(const SewingPattern& pred, const SewingPattern& gt);

/// Mean IOU over max(|pred|, |gt|) panels; unmatched or degenerate panels count 0.
double panel_iou(const SewingPattern& pred, const SewingPattern& gt, int* degenerate = nullptr);

/// Percent of garments whose panel counts agree.
double panel_accuracy(const std::vector<SewingPattern>& preds, const std::vector<SewingPattern>& gts);

/// Percent of ground-truth stitches reproduced after panel and edge matching.
double stitch_accuracy(const std::vector<SewingPattern>& preds, const std::vector<SewingPattern>& gts);

}  // namespace gp
