#include "gp/nn.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace gp::nn {

void ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols, double std,
                     Rng& rng) {
  if (slices_.count(name)) throw ValidationError("duplicate parameter '" + name + "'");
  slices_[name] = {values_.size(), rows, cols};
  order_.push_back(name);
  const auto count = static_cast<std::size_t>(rows * cols);
  for (std::size_t i = 0; i < count; ++i) values_.push_back(std > 0.0 ? std * rng.normal() : 0.0);
}

void ParamStore::add_constant(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                              double value) {
  if (slices_.count(name)) throw ValidationError("duplicate parameter '" + name + "'");
  slices_[name] = {values_.size(), rows, cols};
  order_.push_back(name);
  values_.insert(values_.end(), static_cast<std::size_t>(rows * cols), value);
}

const ParamStore::Slice& ParamStore::slice(const std::string& name) const {
  auto it = slices_.find(name);
  if (it == slices_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return it->second;
}

Eigen::Map<const Mat> ParamStore::get(const std::string& name) const {
  const Slice& s = slice(name);
  return {values_.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<Mat> ParamStore::get(const std::string& name) {
  const Slice& s = slice(name);
  return {values_.data() + s.offset, s.rows, s.cols};
}

nlohmann::json ParamStore::layout() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& name : order_) {
    const Slice& s = slices_.at(name);
    out.push_back({{"name", name}, {"offset", s.offset}, {"rows", s.rows}, {"cols", s.cols}});
  }
  return out;
}

Tape::Id Tape::push(Mat v) {
  nodes_.push_back(Node{std::move(v), Mat(), nullptr, -1});
  return static_cast<Id>(nodes_.size() - 1);
}

Mat& Tape::g(Id id) {
  Node& node = n(id);
  if (node.grad.size() == 0) node.grad = Mat::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

Tape::Id Tape::constant(Mat v) { return push(std::move(v)); }

Tape::Id Tape::param(const ParamStore& store, const std::string& name) {
  const Id id = push(store.get(name));
  n(id).param_offset = static_cast<std::ptrdiff_t>(store.slice(name).offset);
  return id;
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Id out = push(value(a) * value(b));
  if (record_) {
    n(out).back = [this, a, b, out] {
      const Mat& go = n(out).grad;
      g(a).noalias() += go * value(b).transpose();
      g(b).noalias() += value(a).transpose() * go;
    };
  }
  return out;
}

Tape::Id Tape::add(Id a, Id b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
    throw ValidationError("add: shape mismatch");
  const Id out = push(value(a) + value(b));
  if (record_) {
    n(out).back = [this, a, b, out] {
      g(a) += n(out).grad;
      g(b) += n(out).grad;
    };
  }
  return out;
}

Tape::Id Tape::add_row(Id a, Id row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
    throw ValidationError("add_row: shape mismatch");
  Mat v = value(a);
  v.rowwise() += value(row).row(0);
  const Id out = push(std::move(v));
  if (record_) {
    n(out).back = [this, a, row, out] {
      g(a) += n(out).grad;
      g(row) += n(out).grad.colwise().sum();
    };
  }
  return out;
}

Tape::Id Tape::mul_row(Id a, Id row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
    throw ValidationError("mul_row: shape mismatch");
  Mat v = value(a).array().rowwise() * value(row).row(0).array();
  const Id out = push(std::move(v));
  if (record_) {
    n(out).back = [this, a, row, out] {
      const Mat& go = n(out).grad;
      g(a) += (go.array().rowwise() * value(row).row(0).array()).matrix();
      g(row) += (go.array() * value(a).array()).colwise().sum().matrix();
    };
  }
  return out;
}

Tape::Id Tape::modulate(Id x, Id shift, Id scl) {
  const Mat& xv = value(x);
  if (value(shift).rows() != 1 || value(scl).rows() != 1 || value(shift).cols() != xv.cols() ||
      value(scl).cols() != xv.cols())
    throw ValidationError("modulate: shape mismatch");
  Mat v = (xv.array().rowwise() * (1.0 + value(scl).row(0).array())).rowwise() +
          value(shift).row(0).array();
  const Id out = push(std::move(v));
  if (record_) {
    n(out).back = [this, x, shift, scl, out] {
      const Mat& go = n(out).grad;
      g(x) += (go.array().rowwise() * (1.0 + value(scl).row(0).array())).matrix();
      g(shift) += go.colwise().sum();
      g(scl) += (go.array() * value(x).array()).colwise().sum().matrix();
    };
  }
  return out;
}

Tape::Id Tape::layernorm(Id a, double eps) {
  const Mat& x = value(a);
  const Eigen::Index d = x.cols();
  Eigen::VectorXd mean = x.rowwise().mean();
  Mat centered = x.colwise() - mean;
  Eigen::VectorXd inv = ((centered.array().square().rowwise().sum() / static_cast<double>(d)) + eps)
                            .rsqrt()
                            .matrix();
  Mat y = centered.array().colwise() * inv.array();
  const Id out = push(std::move(y));
  if (record_) {
    n(out).back = [this, a, out, inv, d] {
      const Mat& go = n(out).grad;
      const Mat& y = value(out);
      const Eigen::VectorXd mg = go.rowwise().mean();
      const Eigen::VectorXd mgy = (go.array() * y.array()).rowwise().sum() / static_cast<double>(d);
      Mat gx = go;
      gx.colwise() -= mg;
      gx -= (y.array().colwise() * mgy.array()).matrix();
      g(a) += (gx.array().colwise() * inv.array()).matrix();
    };
  }
  return out;
}

Tape::Id Tape::silu(Id a) {
  const Mat& x = value(a);
  const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-x.array()).exp());
  const Id out = push((x.array() * sig).matrix());
  if (record_) {
    n(out).back = [this, a, out, sig] {
      const Eigen::ArrayXXd x = value(a).array();
      g(a) += (n(out).grad.array() * sig * (1.0 + x * (1.0 - sig))).matrix();
    };
  }
  return out;
}

Tape::Id Tape::gelu(Id a) {
  static constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  const Eigen::ArrayXXd x = value(a).array();
  const Eigen::ArrayXXd th = (c * (x + 0.044715 * x.cube())).tanh();
  const Id out = push((0.5 * x * (1.0 + th)).matrix());
  if (record_) {
    n(out).back = [this, a, out, th] {
      const Eigen::ArrayXXd x = value(a).array();
      const Eigen::ArrayXXd d =
          0.5 * (1.0 + th) + 0.5 * x * (1.0 - th.square()) * c * (1.0 + 3.0 * 0.044715 * x.square());
      g(a) += (n(out).grad.array() * d).matrix();
    };
  }
  return out;
}

Tape::Id Tape::scale(Id a, double s) {
  const Id out = push(value(a) * s);
  if (record_) n(out).back = [this, a, out, s] { g(a) += s * n(out).grad; };
  return out;
}

Tape::Id Tape::slice_cols(Id a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > value(a).cols()) throw ValidationError("slice_cols: out of range");
  const Id out = push(value(a).middleCols(start, count));
  if (record_) {
    n(out).back = [this, a, out, start, count] { g(a).middleCols(start, count) += n(out).grad; };
  }
  return out;
}

Tape::Id Tape::gather_rows(Id table, const std::vector<int>& rows) {
  const Mat& t = value(table);
  Mat v(static_cast<Eigen::Index>(rows.size()), t.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= t.rows()) throw ValidationError("gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = t.row(rows[i]);
  }
  const Id out = push(std::move(v));
  if (record_) {
    n(out).back = [this, table, out, rows] {
      const Mat& go = n(out).grad;
      Mat& gt = g(table);
      for (std::size_t i = 0; i < rows.size(); ++i) gt.row(rows[i]) += go.row(static_cast<Eigen::Index>(i));
    };
  }
  return out;
}

Tape::Id Tape::attention(Id q, Id k, Id v, int heads) {
  const Mat& Q = value(q);
  const Mat& K = value(k);
  const Mat& V = value(v);
  const Eigen::Index d = Q.cols();
  if (K.cols() != d || V.cols() != d || K.rows() != V.rows() || heads < 1 || d % heads != 0)
    throw ValidationError("attention: shape mismatch");
  const Eigen::Index dh = d / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Mat> probs(static_cast<std::size_t>(heads));
  Mat O(Q.rows(), d);
  for (int h = 0; h < heads; ++h) {
    Mat S = s * (Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose());
    Eigen::VectorXd mx = S.rowwise().maxCoeff();
    S = (S.colwise() - mx).array().exp().matrix();
    Eigen::VectorXd sum = S.rowwise().sum();
    S = S.array().colwise() / sum.array();
    O.middleCols(h * dh, dh).noalias() = S * V.middleCols(h * dh, dh);
    probs[static_cast<std::size_t>(h)] = std::move(S);
  }
  const Id out = push(std::move(O));
  if (record_) {
    n(out).back = [this, q, k, v, out, heads, dh, s, probs = std::move(probs)] {
      const Mat& go = n(out).grad;
      Mat& gq = g(q);
      Mat& gk = g(k);
      Mat& gv = g(v);
      const Mat& Q = value(q);
      const Mat& K = value(k);
      const Mat& V = value(v);
      for (int h = 0; h < heads; ++h) {
        const Mat& P = probs[static_cast<std::size_t>(h)];
        const auto gO = go.middleCols(h * dh, dh);
        gv.middleCols(h * dh, dh).noalias() += P.transpose() * gO;
        Mat dP = gO * V.middleCols(h * dh, dh).transpose();
        const Eigen::VectorXd rs = (dP.array() * P.array()).rowwise().sum();
        Mat dS = (P.array() * (dP.colwise() - rs).array()).matrix();
        gq.middleCols(h * dh, dh).noalias() += s * (dS * K.middleCols(h * dh, dh));
        gk.middleCols(h * dh, dh).noalias() += s * (dS.transpose() * Q.middleCols(h * dh, dh));
      }
    };
  }
  return out;
}

Tape::Id Tape::squared_error(Id a, const Mat& target, double denominator) {
  if (value(a).rows() != target.rows() || value(a).cols() != target.cols())
    throw ValidationError("squared_error: shape mismatch");
  Mat diff = value(a) - target;
  Mat v(1, 1);
  v(0, 0) = diff.squaredNorm() / denominator;
  const Id out = push(std::move(v));
  if (record_) {
    n(out).back = [this, a, out, diff = std::move(diff), denominator] {
      g(a) += (2.0 * n(out).grad(0, 0) / denominator) * diff;
    };
  }
  return out;
}

Tape::Id Tape::weighted_squared_error(Id a, const Mat& target, const Mat& weights,
                                      double denominator) {
  if (value(a).rows() != target.rows() || value(a).cols() != target.cols() ||
      weights.rows() != target.rows() || weights.cols() != target.cols())
    throw ValidationError("weighted_squared_error: shape mismatch");
  Mat diff = (value(a) - target).cwiseProduct(weights);
  Mat v(1, 1);
  v(0, 0) = (value(a) - target).cwiseProduct(diff).sum() / denominator;
  const Id out = push(std::move(v));
  if (record_) {
    n(out).back = [this, a, out, diff = std::move(diff), denominator] {
      g(a) += (2.0 * n(out).grad(0, 0) / denominator) * diff;
    };
  }
  return out;
}

void Tape::backward(Id out, std::vector<double>& grad) {
  if (!record_) throw ValidationError("backward on a non-recording tape");
  if (value(out).size() != 1) throw ValidationError("backward needs a scalar output");
  g(out)(0, 0) = 1.0;
  for (Id i = out; i >= 0; --i) {
    Node& node = n(i);
    if (node.grad.size() == 0) continue;
    if (node.back) node.back();
    if (node.param_offset >= 0) {
      Eigen::Map<Mat> dst(grad.data() + node.param_offset, node.grad.rows(), node.grad.cols());
      dst += node.grad;
    }
  }
}

double Adam::step(std::vector<double>& params, std::vector<double> grad, double clip,
                  double lr_scale) {
  double norm2 = 0.0;
  for (double x : grad) norm2 += x * x;
  const double norm = std::sqrt(norm2);
  if (!std::isfinite(norm)) throw RuntimeFailure("non-finite gradient");
  if (clip > 0.0 && norm > clip)
    for (double& x : grad) x *= clip / norm;
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  const double lr = lr_ * lr_scale;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
  return norm;
}

namespace {
constexpr char kMagic[] = "GPCKPT1\n";
}

void write_checkpoint(const std::string& path, const nlohmann::json& header,
                      const std::vector<double>& values) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write checkpoint " + path);
  nlohmann::json h = header;
  h["n_values"] = values.size();
  const std::string text = h.dump();
  const std::uint64_t len = text.size();
  f.write(kMagic, sizeof(kMagic) - 1);
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  f.write(reinterpret_cast<const char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!f) throw RuntimeFailure("failed writing checkpoint " + path);
}

std::pair<nlohmann::json, std::vector<double>> read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open checkpoint " + path);
  char magic[sizeof(kMagic) - 1];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw ValidationError(path + " is not a checkpoint");
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!f || len > (1u << 30)) throw ValidationError("corrupt checkpoint header in " + path);
  std::string text(len, '\0');
  f.read(text.data(), static_cast<std::streamsize>(len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("corrupt checkpoint header in " + path);
  }
  std::vector<double> values(header.at("n_values").get<std::size_t>());
  f.read(reinterpret_cast<char*>(values.data()),
         static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!f) throw ValidationError("truncated checkpoint " + path);
  return {header, values};
}

Mat sinusoidal_embedding(double t, int dim, double max_period) {
  const int half = dim / 2;
  Mat out = Mat::Zero(1, dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(max_period) * i / half);
    out(0, i) = std::cos(t * freq);
    out(0, half + i) = std::sin(t * freq);
  }
  return out;
}

}  // namespace gp::nn
