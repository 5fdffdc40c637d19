#include "gp/transformer.hpp"

#include <algorithm>

namespace gp {

void TransformerConfig::validate() const {
  if (in_dim < 1 || out_dim < 1) throw ValidationError("transformer dims must be positive");
  if (linear_only) return;
  if (width < 1 || depth < 0 || heads < 1 || width % heads != 0)
    throw ValidationError("width must be a positive multiple of heads");
  if (time_dim < 2 || time_dim % 2 != 0) throw ValidationError("time_dim must be even");
  if ((cond_vocab > 0) == (cond_in_dim > 0))
    throw ValidationError("exactly one of cond_vocab / cond_in_dim must be set");
  if ((pos_panels > 0) != (pos_edges > 0)) throw ValidationError("pos_panels/pos_edges go together");
}

nlohmann::json TransformerConfig::to_json() const {
  return {{"in_dim", in_dim},       {"out_dim", out_dim},         {"width", width},
          {"depth", depth},         {"heads", heads},             {"mlp_ratio", mlp_ratio},
          {"time_dim", time_dim},   {"cond_vocab", cond_vocab},   {"cond_in_dim", cond_in_dim},
          {"pos_panels", pos_panels}, {"pos_edges", pos_edges},   {"linear_only", linear_only}};
}

TransformerConfig TransformerConfig::from_json(const nlohmann::json& j) {
  TransformerConfig c;
  c.in_dim = j.value("in_dim", c.in_dim);
  c.out_dim = j.value("out_dim", c.out_dim);
  c.width = j.value("width", c.width);
  c.depth = j.value("depth", c.depth);
  c.heads = j.value("heads", c.heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.time_dim = j.value("time_dim", c.time_dim);
  c.cond_vocab = j.value("cond_vocab", c.cond_vocab);
  c.cond_in_dim = j.value("cond_in_dim", c.cond_in_dim);
  c.pos_panels = j.value("pos_panels", c.pos_panels);
  c.pos_edges = j.value("pos_edges", c.pos_edges);
  c.linear_only = j.value("linear_only", c.linear_only);
  c.validate();
  return c;
}

Transformer::Transformer(const TransformerConfig& cfg, std::uint64_t seed, bool zero_output)
    : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  auto lecun = [](int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  const int w = cfg_.width;
  const double out_std = zero_output ? 0.0 : lecun(cfg_.linear_only ? cfg_.in_dim : w);
  if (cfg_.linear_only) {
    params_.add("out.w", cfg_.in_dim, cfg_.out_dim, out_std, rng);
    params_.add("out.b", 1, cfg_.out_dim, zero_output ? 0.0 : 0.1, rng);
    return;
  }
  params_.add("in.w", cfg_.in_dim, w, lecun(cfg_.in_dim), rng);
  params_.add("in.b", 1, w, 0.0, rng);
  params_.add("time.l1.w", cfg_.time_dim, w, lecun(cfg_.time_dim), rng);
  params_.add("time.l1.b", 1, w, 0.0, rng);
  params_.add("time.l2.w", w, w, lecun(w), rng);
  params_.add("time.l2.b", 1, w, 0.0, rng);
  if (cfg_.cond_vocab > 0) {
    params_.add("cond.embed", cfg_.cond_vocab, w, 1.0, rng);
  } else {
    params_.add("cond.l1.w", cfg_.cond_in_dim, w, lecun(cfg_.cond_in_dim), rng);
    params_.add("cond.l1.b", 1, w, 0.0, rng);
    params_.add("cond.l2.w", w, w, lecun(w), rng);
    params_.add("cond.l2.b", 1, w, 0.0, rng);
  }
  if (cfg_.pos_panels > 0) {
    params_.add("pos.panel", cfg_.pos_panels, w, 0.5, rng);
    params_.add("pos.edge", cfg_.pos_edges, w, 0.5, rng);
  }
  const int hidden = cfg_.mlp_ratio * w;
  for (int b = 0; b < cfg_.depth; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    params_.add(p + "ada.w", w, 9 * w, 0.1 * lecun(w), rng);
    params_.add(p + "ada.b", 1, 9 * w, 0.0, rng);
    // Gates start open so every branch contributes from the first step.
    auto ada_b = params_.get(p + "ada.b");
    for (int k : {2, 5, 8}) ada_b.middleCols(k * w, w).setOnes();
    for (const char* name : {"attn.q", "attn.k", "attn.v", "attn.o", "cross.q", "cross.k",
                             "cross.v", "cross.o"}) {
      params_.add(p + name + ".w", w, w, lecun(w), rng);
      params_.add(p + name + ".b", 1, w, 0.0, rng);
    }
    params_.add(p + "mlp.l1.w", w, hidden, lecun(w), rng);
    params_.add(p + "mlp.l1.b", 1, hidden, 0.0, rng);
    params_.add(p + "mlp.l2.w", hidden, w, lecun(hidden), rng);
    params_.add(p + "mlp.l2.b", 1, w, 0.0, rng);
  }
  params_.add("final.ada.w", w, 2 * w, 0.1 * lecun(w), rng);
  params_.add("final.ada.b", 1, 2 * w, 0.0, rng);
  params_.add("out.w", w, cfg_.out_dim, out_std, rng);
  params_.add("out.b", 1, cfg_.out_dim, 0.0, rng);
}

nn::Tape::Id Transformer::forward(nn::Tape& T, const Mat& x, double t, const Conditioning& c) const {
  using Id = nn::Tape::Id;
  if (x.cols() != cfg_.in_dim) throw ValidationError("transformer input has the wrong width");
  if (x.rows() < 1) throw ValidationError("transformer input is empty");
  auto P = [&](const std::string& name) { return T.param(params_, name); };
  auto linear = [&](Id in, const std::string& name) {
    return T.add_row(T.matmul(in, P(name + ".w")), P(name + ".b"));
  };

  const Id xin = T.constant(x);
  if (cfg_.linear_only) return T.add_row(T.matmul(xin, P("out.w")), P("out.b"));

  const int w = cfg_.width;
  Id h = T.add_row(T.matmul(xin, P("in.w")), P("in.b"));
  if (cfg_.pos_panels > 0) {
    if (x.rows() != static_cast<Eigen::Index>(cfg_.pos_panels) * cfg_.pos_edges)
      throw ValidationError("token count does not match the positional grid");
    std::vector<int> pi, ei;
    for (int r = 0; r < x.rows(); ++r) {
      pi.push_back(r / cfg_.pos_edges);
      ei.push_back(r % cfg_.pos_edges);
    }
    h = T.add(h, T.add(T.gather_rows(P("pos.panel"), pi), T.gather_rows(P("pos.edge"), ei)));
  }

  const Id temb0 = T.constant(nn::sinusoidal_embedding(1000.0 * t, cfg_.time_dim));
  const Id temb = linear(T.silu(linear(temb0, "time.l1")), "time.l2");
  const Id tact = T.silu(temb);

  Id cond;
  if (cfg_.cond_vocab > 0) {
    if (c.tokens.empty()) throw ValidationError("missing condition tokens");
    cond = T.gather_rows(P("cond.embed"), c.tokens);
  } else {
    if (c.features.rows() < 1 || c.features.cols() != cfg_.cond_in_dim)
      throw ValidationError("condition features have the wrong shape");
    const Id cf = T.constant(c.features);
    cond = linear(T.gelu(linear(cf, "cond.l1")), "cond.l2");
  }
  cond = T.layernorm(cond);

  for (int b = 0; b < cfg_.depth; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    const Id mod = linear(tact, p + "ada");
    auto part = [&](int k) { return T.slice_cols(mod, static_cast<Eigen::Index>(k) * w, w); };

    Id a = T.modulate(T.layernorm(h), part(0), part(1));
    a = T.attention(linear(a, p + "attn.q"), linear(a, p + "attn.k"), linear(a, p + "attn.v"),
                    cfg_.heads);
    h = T.add(h, T.mul_row(linear(a, p + "attn.o"), part(2)));

    Id q = T.modulate(T.layernorm(h), part(3), part(4));
    Id ca = T.attention(linear(q, p + "cross.q"), linear(cond, p + "cross.k"),
                        linear(cond, p + "cross.v"), cfg_.heads);
    h = T.add(h, T.mul_row(linear(ca, p + "cross.o"), part(5)));

    Id m = T.modulate(T.layernorm(h), part(6), part(7));
    m = linear(T.gelu(linear(m, p + "mlp.l1")), p + "mlp.l2");
    h = T.add(h, T.mul_row(m, part(8)));
  }
  const Id fmod = linear(tact, "final.ada");
  const Id out = T.modulate(T.layernorm(h), T.slice_cols(fmod, 0, w), T.slice_cols(fmod, w, w));
  return linear(out, "out");
}

Mat Transformer::evaluate(const Mat& x, double t, const Conditioning& c) const {
  nn::Tape tape(false);
  const auto id = forward(tape, x, t, c);
  return tape.value(id);
}

nlohmann::json GradCheckReport::to_json() const {
  nlohmann::json layers_j = nlohmann::json::array();
  for (const auto& l : layers)
    layers_j.push_back({{"name", l.name},
                        {"count", l.count},
                        {"rel_error", l.rel_error},
                        {"max_abs_error", l.max_abs_error}});
  return {{"n_params", n_params}, {"max_rel_error", max_rel_error}, {"layers", layers_j}};
}

GradCheckReport gradient_check(Transformer& net, const Mat& x, double t, const Conditioning& c,
                               const Mat& target, double step, std::size_t max_params) {
  auto& store = net.params();
  if (store.size() > max_params)
    throw ValidationError("model has " + std::to_string(store.size()) +
                          " parameters; gradient check is limited to " + std::to_string(max_params));
  const double denom = static_cast<double>(target.size());
  auto loss = [&] {
    nn::Tape tape(false);
    const auto out = net.forward(tape, x, t, c);
    return (tape.value(out) - target).squaredNorm() / denom;
  };

  std::vector<double> analytic(store.size(), 0.0);
  {
    nn::Tape tape(true);
    const auto out = net.forward(tape, x, t, c);
    tape.backward(tape.squared_error(out, target, denom), analytic);
  }
  auto& v = store.values();
  std::vector<double> numeric(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + step;
    const double up = loss();
    v[i] = keep - step;
    const double down = loss();
    v[i] = keep;
    numeric[i] = (up - down) / (2.0 * step);
  }

  // Layers whose gradient is negligible against the whole gradient (e.g. key
  // biases, which softmax ignores) are compared on an absolute floor.
  double total2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) total2 += analytic[i] * analytic[i];
  const double floor = 1e-4 * std::sqrt(total2);

  GradCheckReport report;
  report.n_params = v.size();
  for (const auto& name : store.names()) {
    const auto& s = store.slice(name);
    const std::size_t count = static_cast<std::size_t>(s.rows * s.cols);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0, max_abs = 0.0;
    for (std::size_t k = s.offset; k < s.offset + count; ++k) {
      const double d = analytic[k] - numeric[k];
      diff2 += d * d;
      a2 += analytic[k] * analytic[k];
      n2 += numeric[k] * numeric[k];
      max_abs = std::max(max_abs, std::abs(d));
    }
    const double scale = std::sqrt(a2) + std::sqrt(n2);
    const double rel = std::sqrt(diff2) / std::max({scale, floor, 1e-300});
    report.layers.push_back({name, count, rel, max_abs});
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  std::stable_sort(report.layers.begin(), report.layers.end(),
                   [](const auto& a, const auto& b) { return a.rel_error > b.rel_error; });
  return report;
}

}  // namespace gp
