#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gp/distances.hpp"
#include "gp/flow.hpp"

namespace gp {

enum class DpsTask { PointcloudCondition, Completion, PatternEdit, PatternCompletion, Silhouette };
enum class ObjectiveKind { Emd, ChamferOneSided };

std::string task_name(DpsTask t);
DpsTask task_from_name(const std::string& name);

/// EMD for conditioning, pattern editing and silhouettes; one-sided Chamfer
/// for the completion tasks.
ObjectiveKind objective_for(DpsTask t);

/// Dimension of the observation a task expects (3 or 2).
int observation_dim(DpsTask t);

struct DpsConfig {
  int T = 500;
  double stop_t = 0.6;
  std::optional<double> eta;   // default depends on the objective
  std::optional<int> opt_n;    // default depends on the objective
  int N = 0;                   // 0: observation size, capped at the model's n_max
  std::uint64_t seed = 0;

  double eta_for(ObjectiveKind k) const;
  int opt_n_for(ObjectiveKind k) const;

  void validate() const;
  nlohmann::json to_json() const;
  static DpsConfig from_json(const nlohmann::json& j);
};

struct EditRequest {
  DpsTask task = DpsTask::PointcloudCondition;
  PointSet observation;
  std::optional<Camera> camera;
  std::vector<int> tokens;  // empty: null label
  DpsConfig hyper;

  void validate() const;
  nlohmann::json to_json() const;
  /// "observation" may be an inline point set or a path to a point-set file.
  static EditRequest from_json(const nlohmann::json& j);
};

/// Differentiable map from particle coordinates (N x 5, cm) to the
/// observation space.
class ForwardMap {
 public:
  ForwardMap(DpsTask task, std::optional<Camera> cam);

  int out_dim() const;
  /// Coordinate columns the map reads.
  std::vector<int> channels() const;
  PointSet apply(const Mat& coords) const;
  /// Gradient w.r.t. the 5 coordinates given the gradient w.r.t. the output.
  Mat pullback(const Mat& grad_out) const;

 private:
  DpsTask task_;
  Camera cam_;
};

ForwardMap forward_map(DpsTask task, const std::optional<Camera>& cam = std::nullopt);

/// Objective against a fixed observation. EMD targets are resampled to the
/// particle count by farthest-point sampling.
class Objective {
 public:
  Objective(ObjectiveKind kind, const PointSet& observation, int n, std::uint64_t seed);

  PointSetDistanceResult evaluate(const PointSet& y, bool with_gradient) const;
  ObjectiveKind kind() const { return kind_; }
  const PointSet& target() const { return target_; }

 private:
  ObjectiveKind kind_;
  PointSet target_;
};

/// (X - t v, X + (1 - t) v).
std::pair<Mat, Mat> posterior_estimates(const Mat& x, const Mat& v, double t);

struct DpsTraceEntry {
  int step = 0;
  double t = 0.0;
  bool guided = false;
  std::vector<double> objective;  // before each inner step, then after the last
  double update_norm = 0.0;       // |X_next - X|

  nlohmann::json to_json() const;
};

struct DpsResult {
  GarmentParticles particles;
  Mat state;  // final normalized state
  std::vector<DpsTraceEntry> trace;
  double final_objective = 0.0;  // objective of the final particles, cm units
};

using DpsStepCallback = std::function<void(const DpsTraceEntry&)>;

/// Guided sampling. Steps with t <= stop_t (and opt_n > 0) take opt_n
/// gradient steps on the clean estimate, renoise the noise estimate and blend;
/// other steps are plain Euler steps, identical to unguided sampling.
DpsResult dps_sample(const FlowModel& model, const EditRequest& request,
                     const DpsStepCallback& on_step = {});

/// Objective of given particles against a request's observation.
double evaluate_objective(const EditRequest& request, const GarmentParticles& x);

}  // namespace gp
