#pragma once

#include <nlohmann/json.hpp>

#include "gp/nn.hpp"

namespace gp {

/// Set transformer with adaptive-norm time conditioning and cross-attention to
/// condition tokens. Tokens carry no positional encoding unless pos_panels>0,
/// in which case token r receives panel (r / pos_edges) plus slot
/// (r % pos_edges) embeddings.
struct TransformerConfig {
  int in_dim = 6;
  int out_dim = 6;
  int width = 128;
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 4;
  int time_dim = 64;
  int cond_vocab = 0;    // > 0: condition tokens are learned embeddings of ids
  int cond_in_dim = 0;   // > 0: condition tokens are encoded feature rows
  int pos_panels = 0;
  int pos_edges = 0;
  bool linear_only = false;  // x W + b, for gradient-check calibration

  void validate() const;
  nlohmann::json to_json() const;
  static TransformerConfig from_json(const nlohmann::json& j);
};

struct Conditioning {
  std::vector<int> tokens;  // used when cond_vocab > 0
  Mat features;             // used when cond_in_dim > 0 (rows are tokens)
};

class Transformer {
 public:
  Transformer() = default;
  /// zero_output=true zero-initializes the final projection (output == 0).
  Transformer(const TransformerConfig& cfg, std::uint64_t seed, bool zero_output = true);

  nn::Tape::Id forward(nn::Tape& tape, const Mat& x, double t, const Conditioning& c) const;
  /// Inference-only evaluation.
  Mat evaluate(const Mat& x, double t, const Conditioning& c) const;

  const TransformerConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

 private:
  TransformerConfig cfg_;
  nn::ParamStore params_;
};

struct GradCheckEntry {
  std::string name;
  std::size_t count = 0;
  // |g_analytic - g_fd| / max(|g_analytic| + |g_fd|, 1e-4 |g_all|)
  double rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::size_t n_params = 0;
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> layers;  // worst first

  nlohmann::json to_json() const;
};

/// Compares analytic parameter gradients of mean((net(x) - target)^2)
/// against central differences. Refuses models above max_params.
GradCheckReport gradient_check(Transformer& net, const Mat& x, double t, const Conditioning& c,
                               const Mat& target, double step = 1e-5,
                               std::size_t max_params = 50000);

}  // namespace gp
