#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gp/flow.hpp"
#include "gp/pattern.hpp"

namespace gp {

struct ClusterConfig {
  double eps_factor = 1.6;  // eps = eps_factor * median nearest-neighbor distance
  int min_pts = 3;
};

struct ClusterResult {
  std::vector<int> labels;  // -1 marks outliers
  int k = 0;
  double eps = 0.0;
};

/// DBSCAN on the pattern coordinates. Clusters are numbered in order of their
/// lowest particle index.
ClusterResult cluster_panels(const GarmentParticles& x, const ClusterConfig& cfg = {});

/// Median distance from each pattern point to its nearest other point.
double median_spacing(const PointSet& uv);

struct DelaunayRecoveryConfig {
  ClusterConfig cluster;
  /// Outline vertices closer than this fraction of the spacing to the line
  /// through their neighbors are dropped.
  double simplify_factor = 0.25;
};

/// Training-free recovery: cluster, triangulate each cluster, drop triangles
/// whose vertices are all boundary particles, and trace the remaining
/// mesh's outer boundary. Pose and stitches are left empty.
SewingPattern recover_delaunay(const GarmentParticles& x, const DelaunayRecoveryConfig& cfg = {},
                               std::vector<std::string>* warnings = nullptr);

struct StitchInferenceConfig {
  double max_gap = 2.0;          // cm, mean 3D distance between the two edges
  double support_factor = 0.5;   // support band around an edge, times the spacing
  int min_support = 3;
};

/// Pairs edges whose supporting particles trace mutually nearest 3D curves.
std::vector<StitchPair> infer_stitches(const SewingPattern& p, const GarmentParticles& x,
                                       const StitchInferenceConfig& cfg = {});

/// Adds N(0, (level * scale_cm)^2) noise to the pattern coordinates.
GarmentParticles add_pattern_noise(const GarmentParticles& x, double level, std::uint64_t seed,
                                   double scale_cm = 150.0);

enum class PatternModelKind { Flow, Regression };

/// Transformer over pattern-tensor rows (with panel and edge position
/// embeddings) that cross-attends to the particles.
class PatternModel {
 public:
  PatternModel() = default;
  PatternModel(PatternModelKind kind, const TransformerConfig& cfg, const PatternDims& dims,
               std::uint64_t seed);

  static TransformerConfig default_config(const PatternDims& dims, int width = 64, int depth = 4,
                                          int heads = 4);

  PatternModelKind kind() const { return kind_; }
  const PatternDims& dims() const { return dims_; }
  Transformer& net() { return net_; }
  const Transformer& net() const { return net_; }

  Mat features(const GarmentParticles& x) const;
  Mat normalize(const Mat& tensor) const;
  Mat denormalize(const Mat& tensor) const;
  /// Velocity (flow) or prediction (regression, x ignored) in normalized units.
  Mat evaluate(const Mat& x, double t, const GarmentParticles& particles) const;

  void fit_stats(const std::vector<GarmentParticles>& particles, const std::vector<Mat>& tensors);

  nlohmann::json& info() { return info_; }
  void save(const std::string& path) const;
  static PatternModel load(const std::string& path);

 private:
  PatternModelKind kind_ = PatternModelKind::Flow;
  PatternDims dims_;
  Transformer net_;
  ChannelStats particle_stats_ = ChannelStats::identity(6);
  ChannelStats pose_stats_ = ChannelStats::identity(PatternDims::kChannels);
  ChannelStats edge_stats_ = ChannelStats::identity(PatternDims::kChannels);
  nlohmann::json info_ = nlohmann::json::object();
};

/// Per-entry loss weights: 1 on rows of present panels and valid edges; on
/// other rows only the validity channel is supervised.
Mat pattern_loss_weights(const Mat& tensor, const PatternDims& dims);

struct PatternTrainItem {
  GarmentParticles particles;
  Mat tensor;  // raw encoded pattern
};

struct PatternTrainConfig {
  int batch = 4;
  double lr = 1e-3;
  int iters = 1000;
  int warmup = 50;
  std::uint64_t seed = 0;
  double clip = 1.0;
  /// Pattern-coordinate noise level applied to training particles.
  double noise_level = 0.0;

  void validate() const;
};

/// Flow matching (flow kind) or direct regression; fits normalization first.
FlowTrainResult train_pattern_model(PatternModel& model, const std::vector<PatternTrainItem>& data,
                                    const PatternTrainConfig& cfg,
                                    const std::function<void(int, double)>& progress = {});

/// Euler-integrates the conditional flow from seeded noise and decodes.
SewingPattern ppf_sample(const PatternModel& model, const GarmentParticles& x, int steps,
                         std::uint64_t seed);

/// Single forward pass of the regression variant, decoded.
SewingPattern recover_regression(const PatternModel& model, const GarmentParticles& x);

}  // namespace gp
