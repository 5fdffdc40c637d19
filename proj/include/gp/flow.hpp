#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gp/particles.hpp"
#include "gp/transformer.hpp"

namespace gp {

/// Per-channel affine map to zero mean / unit variance.
struct ChannelStats {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static ChannelStats identity(int channels);
  /// Fits over all rows; scales are floored at min_scale.
  static ChannelStats fit(const std::vector<Mat>& rows, double min_scale = 1e-3);

  Mat normalize(const Mat& x) const;
  Mat denormalize(const Mat& x) const;

  nlohmann::json to_json() const;
  static ChannelStats from_json(const nlohmann::json& j);
};

/// One training example: raw six-channel particles and condition tokens.
struct FlowItem {
  Mat channels;
  std::vector<int> tokens;
};

struct FlowTrainConfig {
  int batch = 8;
  double lr = 1e-3;
  int iters = 1000;
  int warmup = 50;
  std::uint64_t seed = 0;
  double label_dropout = 0.1;
  /// Pair noise rows with data rows by an optimal assignment per sample.
  bool ot_pairing = true;
  double clip = 1.0;
  std::vector<int> null_tokens;  // tokens used when a label is dropped

  void validate() const;
};

struct FlowTrainResult {
  std::vector<double> losses;
  double zero_init_loss = 0.0;  // Monte-Carlo estimate of E|X1 - X0|^2 per element
  double final_loss = 0.0;      // mean of the last 10% of the curve
};

/// Rectified-flow velocity model over six-channel particle sets.
class FlowModel {
 public:
  FlowModel() = default;
  FlowModel(const TransformerConfig& cfg, int n_max, std::uint64_t seed);

  /// Velocity in normalized space. Rows with mask == false are ignored and
  /// receive zero velocity.
  Mat velocity(const Mat& x, double t, const std::vector<int>& tokens,
               const std::vector<bool>* mask = nullptr) const;

  const ChannelStats& stats() const { return stats_; }
  void set_stats(ChannelStats s) { stats_ = std::move(s); }
  Transformer& net() { return net_; }
  const Transformer& net() const { return net_; }
  int n_max() const { return n_max_; }
  nlohmann::json& info() { return info_; }
  const nlohmann::json& info() const { return info_; }

  void save(const std::string& path) const;
  static FlowModel load(const std::string& path);

 private:
  Transformer net_;
  ChannelStats stats_ = ChannelStats::identity(6);
  int n_max_ = kDefaultMaxParticles;
  nlohmann::json info_ = nlohmann::json::object();
};

/// Tokens of the unconditional (null) label.
std::vector<int> null_label_tokens();

/// Standard normal initial state (row-major draw from the seed).
Mat initial_noise(int n, std::uint64_t seed);

/// Pairs noise rows with data rows by minimum total squared distance and
/// returns the permuted noise (row i pairs with data row i).
Mat ot_pair_noise(const Mat& noise, const Mat& data);

/// Fits channel statistics on the data and trains by flow matching.
FlowTrainResult train_flow(FlowModel& model, const std::vector<FlowItem>& data,
                           const FlowTrainConfig& cfg,
                           const std::function<void(int, double)>& progress = {});

/// X + dt * v(X, t): one explicit Euler step in normalized space.
Mat euler_step(const FlowModel& model, const Mat& x, double t, double dt,
               const std::vector<int>& tokens);

/// Integrates from a given normalized initial state; returns normalized state.
Mat integrate(const FlowModel& model, Mat x, const std::vector<int>& tokens, int steps);

/// Maps a normalized state to particles (denormalize, threshold flags at 0.5).
GarmentParticles to_particles(const FlowModel& model, const Mat& x);

/// Unguided sampling: noise from seed, Euler with dt = 1/steps.
GarmentParticles sample(const FlowModel& model, int n, const std::vector<int>& tokens, int steps,
                        std::uint64_t seed);

}  // namespace gp
