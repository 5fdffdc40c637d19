#include "gp/flow.hpp"

#include <algorithm>

#include "gp/assignment.hpp"
#include "gp/synthetic.hpp"

namespace gp {

ChannelStats ChannelStats::identity(int channels) {
  return {Eigen::RowVectorXd::Zero(channels), Eigen::RowVectorXd::Ones(channels)};
}

ChannelStats ChannelStats::fit(const std::vector<Mat>& rows, double min_scale) {
  if (rows.empty()) throw ValidationError("cannot fit channel statistics on no data");
  const Eigen::Index c = rows.front().cols();
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(c), sq = Eigen::RowVectorXd::Zero(c);
  double n = 0.0;
  for (const auto& m : rows) {
    if (m.cols() != c) throw ValidationError("inconsistent channel counts");
    sum += m.colwise().sum();
    n += static_cast<double>(m.rows());
  }
  const Eigen::RowVectorXd mean = sum / n;
  for (const auto& m : rows) sq += (m.rowwise() - mean).array().square().colwise().sum().matrix();
  Eigen::RowVectorXd scale = (sq / n).array().sqrt().matrix();
  for (Eigen::Index k = 0; k < c; ++k) scale[k] = std::max(scale[k], min_scale);
  return {mean, scale};
}

Mat ChannelStats::normalize(const Mat& x) const {
  return (x.rowwise() - mean).array().rowwise() / scale.array();
}

Mat ChannelStats::denormalize(const Mat& x) const {
  return (x.array().rowwise() * scale.array()).matrix().rowwise() + mean;
}

nlohmann::json ChannelStats::to_json() const {
  return {{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
          {"scale", std::vector<double>(scale.data(), scale.data() + scale.size())}};
}

ChannelStats ChannelStats::from_json(const nlohmann::json& j) {
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto s = j.at("scale").get<std::vector<double>>();
  if (m.size() != s.size()) throw ValidationError("channel stats length mismatch");
  ChannelStats out;
  out.mean = Eigen::Map<const Eigen::RowVectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
  out.scale = Eigen::Map<const Eigen::RowVectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
  return out;
}

void FlowTrainConfig::validate() const {
  if (batch < 1 || iters < 0 || warmup < 0) throw ValidationError("invalid training schedule");
  if (!(lr > 0.0)) throw ValidationError("learning rate must be > 0");
  if (label_dropout < 0.0 || label_dropout > 1.0) throw ValidationError("label_dropout in [0,1]");
}

std::vector<int> null_label_tokens() { return label_tokens(kNullLabel); }

FlowModel::FlowModel(const TransformerConfig& cfg, int n_max, std::uint64_t seed)
    : net_(cfg, seed, true), stats_(ChannelStats::identity(cfg.in_dim)), n_max_(n_max) {
  if (cfg.in_dim != 6 || cfg.out_dim != 6) throw ValidationError("flow model needs 6 channels");
  if (n_max < 1) throw ValidationError("n_max must be >= 1");
}

Mat FlowModel::velocity(const Mat& x, double t, const std::vector<int>& tokens,
                        const std::vector<bool>* mask) const {
  if (x.cols() != 6) throw ValidationError("flow state needs 6 channels");
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("t must lie in [0,1]");
  if (x.rows() > n_max_) throw ValidationError("more particles than n_max");
  Conditioning c;
  c.tokens = tokens;
  if (!mask) return net_.evaluate(x, t, c);
  if (mask->size() != static_cast<std::size_t>(x.rows())) throw ValidationError("mask length mismatch");
  std::vector<int> live;
  for (std::size_t i = 0; i < mask->size(); ++i)
    if ((*mask)[i]) live.push_back(static_cast<int>(i));
  Mat out = Mat::Zero(x.rows(), 6);
  if (live.empty()) return out;
  Mat sub(static_cast<Eigen::Index>(live.size()), 6);
  for (std::size_t k = 0; k < live.size(); ++k) sub.row(static_cast<Eigen::Index>(k)) = x.row(live[k]);
  const Mat v = net_.evaluate(sub, t, c);
  for (std::size_t k = 0; k < live.size(); ++k) out.row(live[k]) = v.row(static_cast<Eigen::Index>(k));
  return out;
}

void FlowModel::save(const std::string& path) const {
  nlohmann::json h{{"kind", "flow"},
                   {"config", net_.config().to_json()},
                   {"stats", stats_.to_json()},
                   {"n_max", n_max_},
                   {"layout", net_.params().layout()},
                   {"info", info_}};
  nn::write_checkpoint(path, h, net_.params().values());
}

FlowModel FlowModel::load(const std::string& path) {
  auto [h, values] = nn::read_checkpoint(path);
  if (h.value("kind", std::string{}) != "flow") throw ValidationError(path + " is not a flow model");
  FlowModel m(TransformerConfig::from_json(h.at("config")), h.at("n_max").get<int>(), 0);
  if (values.size() != m.net_.params().size())
    throw ValidationError("checkpoint parameter count does not match its config");
  m.net_.params().values() = std::move(values);
  m.stats_ = ChannelStats::from_json(h.at("stats"));
  m.info_ = h.value("info", nlohmann::json::object());
  return m;
}

Mat initial_noise(int n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("particle count must be >= 1");
  Rng rng(seed);
  return rng.normal_matrix(n, 6);
}

Mat ot_pair_noise(const Mat& noise, const Mat& data) {
  const std::vector<int> match = solve_assignment(squared_distances(data, noise));
  Mat out(noise.rows(), noise.cols());
  for (Eigen::Index i = 0; i < data.rows(); ++i) out.row(i) = noise.row(match[static_cast<std::size_t>(i)]);
  return out;
}

FlowTrainResult train_flow(FlowModel& model, const std::vector<FlowItem>& data,
                           const FlowTrainConfig& cfg,
                           const std::function<void(int, double)>& progress) {
  cfg.validate();
  if (data.empty()) throw ValidationError("training set is empty");
  std::vector<Mat> raw;
  for (const auto& item : data) {
    if (item.channels.cols() != 6 || item.channels.rows() < 1)
      throw ValidationError("training item needs N x 6 channels");
    if (item.channels.rows() > model.n_max()) throw ValidationError("training item exceeds n_max");
    raw.push_back(item.channels);
  }
  model.set_stats(ChannelStats::fit(raw));
  std::vector<Mat> norm;
  for (const auto& m : raw) norm.push_back(model.stats().normalize(m));
  const std::vector<int> null_tokens = cfg.null_tokens.empty() ? null_label_tokens() : cfg.null_tokens;

  Rng rng(cfg.seed);
  FlowTrainResult result;
  {
    // Zero-velocity loss under the same coupling, from an independent stream.
    Rng mc(derive_seed(cfg.seed, 0x2e70));
    double total = 0.0, count = 0.0;
    const int draws = std::max<int>(64, static_cast<int>(norm.size()));
    for (int k = 0; k < draws; ++k) {
      const Mat& x1 = norm[static_cast<std::size_t>(mc.uniform_int(0, static_cast<int>(norm.size()) - 1))];
      Mat x0 = mc.normal_matrix(x1.rows(), 6);
      if (cfg.ot_pairing) x0 = ot_pair_noise(x0, x1);
      total += (x1 - x0).squaredNorm();
      count += static_cast<double>(x1.size());
    }
    result.zero_init_loss = total / count;
  }

  auto& store = model.net().params();
  nn::Adam opt(store.size(), cfg.lr);
  for (int it = 0; it < cfg.iters; ++it) {
    std::vector<double> grad(store.size(), 0.0);
    std::vector<std::size_t> picks;
    double elements = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      picks.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(norm.size()) - 1)));
      elements += static_cast<double>(norm[picks.back()].size());
    }
    double loss = 0.0;
    for (std::size_t idx : picks) {
      const Mat& x1 = norm[idx];
      const double t = rng.uniform();
      Mat x0 = rng.normal_matrix(x1.rows(), 6);
      if (cfg.ot_pairing) x0 = ot_pair_noise(x0, x1);
      const bool drop = rng.uniform() < cfg.label_dropout;
      Conditioning c;
      c.tokens = drop ? null_tokens : data[idx].tokens;
      nn::Tape tape(true);
      const Mat xt = t * x1 + (1.0 - t) * x0;
      const auto out = model.net().forward(tape, xt, t, c);
      const auto l = tape.squared_error(out, x1 - x0, elements);
      loss += tape.value(l)(0, 0);
      tape.backward(l, grad);
    }
    if (!std::isfinite(loss))
      throw RuntimeFailure("non-finite training loss at iteration " + std::to_string(it));
    const double warm = cfg.warmup > 0 ? std::min(1.0, (it + 1.0) / cfg.warmup) : 1.0;
    const double decay = 0.55 + 0.45 * std::cos(M_PI * it / std::max(1, cfg.iters));
    opt.step(store.values(), std::move(grad), cfg.clip, warm * decay);
    result.losses.push_back(loss);
    if (progress) progress(it, loss);
  }
  if (!result.losses.empty()) {
    const std::size_t tail = std::max<std::size_t>(1, result.losses.size() / 10);
    double s = 0.0;
    for (std::size_t i = result.losses.size() - tail; i < result.losses.size(); ++i) s += result.losses[i];
    result.final_loss = s / static_cast<double>(tail);
  }
  model.info()["zero_init_loss"] = result.zero_init_loss;
  model.info()["final_loss"] = result.final_loss;
  model.info()["iters"] = cfg.iters;
  return result;
}

Mat euler_step(const FlowModel& model, const Mat& x, double t, double dt,
               const std::vector<int>& tokens) {
  return x + dt * model.velocity(x, t, tokens);
}

Mat integrate(const FlowModel& model, Mat x, const std::vector<int>& tokens, int steps) {
  if (steps < 1) throw ValidationError("steps must be >= 1");
  const double dt = 1.0 / steps;
  for (int k = 0; k < steps; ++k) {
    x = euler_step(model, x, static_cast<double>(k) / steps, dt, tokens);
    if (!x.allFinite()) throw RuntimeFailure("non-finite state during sampling");
  }
  return x;
}

GarmentParticles to_particles(const FlowModel& model, const Mat& x) {
  Mat raw = model.stats().denormalize(x);
  GarmentParticles out;
  out.points = raw.leftCols(5);
  out.flags = (raw.col(5).array() > 0.5).cast<double>().matrix();
  return out;
}

GarmentParticles sample(const FlowModel& model, int n, const std::vector<int>& tokens, int steps,
                        std::uint64_t seed) {
  if (n < 1 || n > model.n_max()) throw ValidationError("particle count outside [1, n_max]");
  return to_particles(model, integrate(model, initial_noise(n, seed), tokens, steps));
}

}  // namespace gp
