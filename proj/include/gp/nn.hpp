#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gp/common.hpp"

namespace gp::nn {

/// Flat parameter vector with named matrix slices (column-major storage).
class ParamStore {
 public:
  struct Slice {
    std::size_t offset;
    Eigen::Index rows, cols;
  };

  /// Registers a parameter and fills it with N(0, std^2) (std 0 gives zeros).
  void add(const std::string& name, Eigen::Index rows, Eigen::Index cols, double std, Rng& rng);
  void add_constant(const std::string& name, Eigen::Index rows, Eigen::Index cols, double value);

  bool has(const std::string& name) const { return slices_.count(name) > 0; }
  const Slice& slice(const std::string& name) const;
  Eigen::Map<const Mat> get(const std::string& name) const;
  Eigen::Map<Mat> get(const std::string& name);

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  /// Names in registration order.
  const std::vector<std::string>& names() const { return order_; }

  nlohmann::json layout() const;

 private:
  std::vector<double> values_;
  std::map<std::string, Slice> slices_;
  std::vector<std::string> order_;
};

/// Reverse-mode tape over dense matrices. Nodes are referenced by index.
/// With record=false no backward closures are kept (inference).
class Tape {
 public:
  using Id = int;

  explicit Tape(bool record = true) : record_(record) {}

  Id constant(Mat v);
  Id param(const ParamStore& store, const std::string& name);

  const Mat& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  Id matmul(Id a, Id b);
  Id add(Id a, Id b);
  Id add_row(Id a, Id row);        // a + broadcast(row)
  Id mul_row(Id a, Id row);        // a .* broadcast(row)
  Id modulate(Id x, Id shift, Id scale);  // x .* (1 + scale) + shift, rows broadcast
  Id layernorm(Id a, double eps = 1e-6);  // per row, no affine
  Id silu(Id a);
  Id gelu(Id a);                   // tanh approximation
  Id scale(Id a, double s);
  Id slice_cols(Id a, Eigen::Index start, Eigen::Index count);
  Id gather_rows(Id table, const std::vector<int>& rows);
  /// Multi-head scaled dot-product attention; q is n x d, k/v are m x d.
  Id attention(Id q, Id k, Id v, int heads);
  /// Sum of squared differences to a fixed target, divided by `denominator`.
  Id squared_error(Id a, const Mat& target, double denominator);
  /// Sum of w .* (a - target)^2 divided by `denominator`.
  Id weighted_squared_error(Id a, const Mat& target, const Mat& weights, double denominator);

  /// Back-propagates d(out)=1 (out must be 1x1) and accumulates parameter
  /// gradients into grad (same layout as the ParamStore values).
  void backward(Id out, std::vector<double>& grad);

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> back;
    std::ptrdiff_t param_offset = -1;
  };
  Id push(Mat v);
  Mat& g(Id id);
  Node& n(Id id) { return nodes_[static_cast<std::size_t>(id)]; }

  bool record_;
  std::vector<Node> nodes_;
};

/// Adam with optional global-norm clipping; updates the store in place.
class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  /// Returns the gradient norm before clipping.
  double step(std::vector<double>& params, std::vector<double> grad, double clip = 1.0,
              double lr_scale = 1.0);
  long steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

/// Binary checkpoint: magic line, JSON header length + header, raw doubles.
void write_checkpoint(const std::string& path, const nlohmann::json& header,
                      const std::vector<double>& values);
std::pair<nlohmann::json, std::vector<double>> read_checkpoint(const std::string& path);

/// Sinusoidal features of a scalar (cos half then sin half).
Mat sinusoidal_embedding(double t, int dim, double max_period = 10000.0);

}  // namespace gp::nn
