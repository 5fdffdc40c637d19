#include "gp/recovery.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

#include "gp/delaunay.hpp"
#include "gp/distances.hpp"

namespace gp {

namespace {

constexpr std::uint64_t kPatternNoiseStream = 0x9a77;

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  return m;
}

double angle_cw(const Vec2& from, const Vec2& to) {
  // Clockwise angle in [0, 2pi) turning `from` onto `to`.
  double a = std::atan2(from.y(), from.x()) - std::atan2(to.y(), to.x());
  while (a < 0.0) a += 2.0 * M_PI;
  while (a >= 2.0 * M_PI) a -= 2.0 * M_PI;
  return a;
}

// Traces boundary loops of a CCW triangle set and returns the loop of
// largest signed area as vertex indices.
std::vector<int> outer_loop(const std::vector<DelaunayTriangulation::Tri>& tris,
                            const std::vector<Vec2>& pts) {
  std::set<std::pair<int, int>> directed;
  for (const auto& t : tris)
    for (int k = 0; k < 3; ++k) directed.insert({t[k], t[(k + 1) % 3]});
  std::map<int, std::vector<int>> out;
  std::set<std::pair<int, int>> boundary;
  for (const auto& [a, b] : directed)
    if (!directed.count({b, a})) {
      out[a].push_back(b);
      boundary.insert({a, b});
    }
  std::set<std::pair<int, int>> used;
  std::vector<int> best;
  double best_area = 0.0;
  for (const auto& start : boundary) {
    if (used.count(start)) continue;
    std::vector<int> loop;
    std::pair<int, int> e = start;
    while (!used.count(e)) {
      used.insert(e);
      loop.push_back(e.first);
      const auto& cands = out[e.second];
      const Vec2 back = pts[static_cast<std::size_t>(e.first)] - pts[static_cast<std::size_t>(e.second)];
      int next = -1;
      double best_angle = std::numeric_limits<double>::infinity();
      for (int c : cands) {
        if (used.count({e.second, c})) continue;
        const Vec2 dir = pts[static_cast<std::size_t>(c)] - pts[static_cast<std::size_t>(e.second)];
        const double a = angle_cw(back, dir);
        if (a < best_angle) {
          best_angle = a;
          next = c;
        }
      }
      if (next < 0) break;
      e = {e.second, next};
    }
    Polygon2 poly;
    for (int i : loop) poly.push_back(pts[static_cast<std::size_t>(i)]);
    const double a = loop.size() >= 3 ? signed_area(poly) : 0.0;
    if (a > best_area) {
      best_area = a;
      best = std::move(loop);
    }
  }
  return best;
}

// Repeatedly drops the vertex nearest to the chord through its neighbors
// while that distance is below tol.
Polygon2 simplify(Polygon2 poly, double tol) {
  while (poly.size() > 3) {
    std::size_t drop = poly.size();
    double best = tol;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2& a = poly[(i + poly.size() - 1) % poly.size()];
      const Vec2& b = poly[(i + 1) % poly.size()];
      const double d = point_segment_distance(poly[i], a, b);
      if (d < best) {
        best = d;
        drop = i;
      }
    }
    if (drop == poly.size()) break;
    poly.erase(poly.begin() + static_cast<std::ptrdiff_t>(drop));
  }
  return poly;
}

}  // namespace

double median_spacing(const PointSet& uv) {
  if (uv.rows() < 2) return 0.0;
  std::vector<double> d(static_cast<std::size_t>(uv.rows()));
  for (Eigen::Index i = 0; i < uv.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < uv.rows(); ++j)
      if (j != i) best = std::min(best, (uv.row(i) - uv.row(j)).squaredNorm());
    d[static_cast<std::size_t>(i)] = std::sqrt(best);
  }
  return median(std::move(d));
}

ClusterResult cluster_panels(const GarmentParticles& x, const ClusterConfig& cfg) {
  if (cfg.min_pts < 1 || !(cfg.eps_factor > 0.0)) throw ValidationError("invalid cluster config");
  if (x.size() < cfg.min_pts) throw ValidationError("fewer particles than min_pts");
  const PointSet uv = project_domain(x);
  ClusterResult r;
  r.eps = cfg.eps_factor * median_spacing(uv);
  const KdTree tree(uv);
  const int n = x.size();
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    nbrs[static_cast<std::size_t>(i)] = tree.radius(uv.row(i), r.eps);
    std::sort(nbrs[static_cast<std::size_t>(i)].begin(), nbrs[static_cast<std::size_t>(i)].end());
  }
  auto core = [&](int i) { return static_cast<int>(nbrs[static_cast<std::size_t>(i)].size()) >= cfg.min_pts; };
  r.labels.assign(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    if (r.labels[static_cast<std::size_t>(i)] != -1 || !core(i)) continue;
    const int id = r.k++;
    std::deque<int> queue{i};
    r.labels[static_cast<std::size_t>(i)] = id;
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      if (!core(p)) continue;
      for (int q : nbrs[static_cast<std::size_t>(p)]) {
        if (r.labels[static_cast<std::size_t>(q)] != -1) continue;
        r.labels[static_cast<std::size_t>(q)] = id;
        queue.push_back(q);
      }
    }
  }
  if (r.k == 0) throw RuntimeFailure("clustering labeled every particle as an outlier");
  return r;
}

SewingPattern recover_delaunay(const GarmentParticles& x, const DelaunayRecoveryConfig& cfg,
                               std::vector<std::string>* warnings) {
  const ClusterResult clusters = cluster_panels(x, cfg.cluster);
  const PointSet uv = project_domain(x);
  SewingPattern out;
  for (int c = 0; c < clusters.k; ++c) {
    std::vector<Vec2> pts;
    std::vector<bool> boundary_src;
    for (int i = 0; i < x.size(); ++i) {
      if (clusters.labels[static_cast<std::size_t>(i)] != c) continue;
      pts.emplace_back(uv(i, 0), uv(i, 1));
      boundary_src.push_back(x.flags[i] > 0.5);
    }
    if (pts.size() < 3) {
      if (warnings) warnings->push_back("cluster " + std::to_string(c) + " has fewer than 3 points");
      continue;
    }
    DelaunayTriangulation dt;
    std::vector<bool> on_boundary;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const int v = dt.insert(pts[i]);
      if (v >= static_cast<int>(on_boundary.size())) on_boundary.resize(static_cast<std::size_t>(v) + 1, false);
      if (boundary_src[i]) on_boundary[static_cast<std::size_t>(v)] = true;
    }
    std::vector<DelaunayTriangulation::Tri> kept;
    for (const auto& t : dt.triangles()) {
      const bool all_boundary = on_boundary[static_cast<std::size_t>(t[0])] &&
                                on_boundary[static_cast<std::size_t>(t[1])] &&
                                on_boundary[static_cast<std::size_t>(t[2])];
      if (!all_boundary) kept.push_back(t);
    }
    const std::vector<Vec2> verts = dt.vertices();
    const std::vector<int> loop = outer_loop(kept, verts);
    if (loop.size() < 3) {
      if (warnings) warnings->push_back("cluster " + std::to_string(c) + " left no interior mesh");
      continue;
    }
    Polygon2 poly;
    for (int i : loop) poly.push_back(verts[static_cast<std::size_t>(i)]);
    Eigen::MatrixXd cuv(static_cast<Eigen::Index>(pts.size()), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) cuv.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
    poly = simplify(std::move(poly), cfg.simplify_factor * median_spacing(cuv));
    PatternPanel panel;
    panel.id = "panel_" + std::to_string(out.panels.size());
    panel.anchor = poly.front();
    for (std::size_t i = 0; i < poly.size(); ++i)
      panel.edges.push_back(PatternEdge::straight(poly[(i + 1) % poly.size()] - poly[i]));
    out.panels.push_back(std::move(panel));
  }
  return out;
}

std::vector<StitchPair> infer_stitches(const SewingPattern& p, const GarmentParticles& x,
                                       const StitchInferenceConfig& cfg) {
  const PointSet uv = project_domain(x);
  const PointSet xyz = project_image(x);
  const double band = cfg.support_factor * median_spacing(uv);
  struct EdgeRef {
    int panel, edge;
    Mat pts;
  };
  std::vector<EdgeRef> edges;
  for (std::size_t pi = 0; pi < p.panels.size(); ++pi) {
    const Polygon2 poly = p.panels[pi].polygon();
    for (std::size_t e = 0; e < poly.size(); ++e) {
      const Vec2& a = poly[e];
      const Vec2& b = poly[(e + 1) % poly.size()];
      std::vector<int> support;
      for (int i = 0; i < x.size(); ++i) {
        if (!(x.flags[i] > 0.5)) continue;
        if (point_segment_distance(Vec2(uv(i, 0), uv(i, 1)), a, b) <= band) support.push_back(i);
      }
      if (static_cast<int>(support.size()) < cfg.min_support) continue;
      Mat pts(static_cast<Eigen::Index>(support.size()), 3);
      for (std::size_t k = 0; k < support.size(); ++k) pts.row(static_cast<Eigen::Index>(k)) = xyz.row(support[k]);
      edges.push_back({static_cast<int>(pi), static_cast<int>(e), std::move(pts)});
    }
  }
  auto mean_nn = [](const Mat& a, const Mat& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      s += std::sqrt((b.rowwise() - a.row(i)).rowwise().squaredNorm().minCoeff());
    return s / static_cast<double>(a.rows());
  };
  const std::size_t m = edges.size();
  Mat gap = Mat::Constant(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m),
                          std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      const double g = 0.5 * (mean_nn(edges[i].pts, edges[j].pts) + mean_nn(edges[j].pts, edges[i].pts));
      gap(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g;
      gap(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = g;
    }
  std::vector<StitchPair> out;
  for (std::size_t i = 0; i < m; ++i) {
    Eigen::Index j = 0, back = 0;
    const double g = gap.row(static_cast<Eigen::Index>(i)).minCoeff(&j);
    if (!(g <= cfg.max_gap)) continue;
    gap.row(j).minCoeff(&back);
    if (back != static_cast<Eigen::Index>(i) || static_cast<std::size_t>(j) < i) continue;
    out.push_back({edges[i].panel, edges[i].edge, edges[static_cast<std::size_t>(j)].panel,
                   edges[static_cast<std::size_t>(j)].edge});
  }
  return out;
}

GarmentParticles add_pattern_noise(const GarmentParticles& x, double level, std::uint64_t seed,
                                   double scale_cm) {
  if (level < 0.0) throw ValidationError("noise level must be >= 0");
  GarmentParticles out = x;
  if (level == 0.0) return out;
  Rng rng(derive_seed(seed, kPatternNoiseStream));
  out.points.leftCols(2) += level * scale_cm * rng.normal_matrix(x.points.rows(), 2);
  return out;
}

PatternModel::PatternModel(PatternModelKind kind, const TransformerConfig& cfg,
                           const PatternDims& dims, std::uint64_t seed)
    : kind_(kind), dims_(dims), net_(cfg, seed, true) {
  if (cfg.in_dim != PatternDims::kChannels || cfg.out_dim != PatternDims::kChannels)
    throw ValidationError("pattern model needs 15 channels in and out");
  if (cfg.cond_in_dim != 6) throw ValidationError("pattern model conditions on 6-channel particles");
  if (cfg.pos_panels != dims.max_panels || cfg.pos_edges != dims.max_edges + 1)
    throw ValidationError("position embeddings must match the tensor layout");
}

TransformerConfig PatternModel::default_config(const PatternDims& dims, int width, int depth,
                                               int heads) {
  TransformerConfig c;
  c.in_dim = c.out_dim = PatternDims::kChannels;
  c.width = width;
  c.depth = depth;
  c.heads = heads;
  c.time_dim = 32;
  c.cond_in_dim = 6;
  c.pos_panels = dims.max_panels;
  c.pos_edges = dims.max_edges + 1;
  return c;
}

Mat PatternModel::features(const GarmentParticles& x) const {
  return particle_stats_.normalize(x.as_channels());
}

Mat PatternModel::normalize(const Mat& tensor) const {
  Mat out(tensor.rows(), tensor.cols());
  for (Eigen::Index r = 0; r < tensor.rows(); ++r) {
    const ChannelStats& s = r % (dims_.max_edges + 1) == 0 ? pose_stats_ : edge_stats_;
    out.row(r) = (tensor.row(r) - s.mean).array() / s.scale.array();
  }
  return out;
}

Mat PatternModel::denormalize(const Mat& tensor) const {
  Mat out(tensor.rows(), tensor.cols());
  for (Eigen::Index r = 0; r < tensor.rows(); ++r) {
    const ChannelStats& s = r % (dims_.max_edges + 1) == 0 ? pose_stats_ : edge_stats_;
    out.row(r) = (tensor.row(r).array() * s.scale.array()).matrix() + s.mean;
  }
  return out;
}

Mat PatternModel::evaluate(const Mat& x, double t, const GarmentParticles& particles) const {
  Conditioning c;
  c.features = features(particles);
  return net_.evaluate(x, t, c);
}

void PatternModel::fit_stats(const std::vector<GarmentParticles>& particles,
                             const std::vector<Mat>& tensors) {
  std::vector<Mat> pc;
  for (const auto& p : particles) pc.push_back(p.as_channels());
  particle_stats_ = ChannelStats::fit(pc);
  std::vector<Mat> pose, edge;
  for (const auto& t : tensors) {
    if (t.rows() != dims_.rows() || t.cols() != PatternDims::kChannels)
      throw ValidationError("pattern tensor has the wrong shape");
    Mat pr(dims_.max_panels, PatternDims::kChannels);
    Mat er(dims_.max_panels * dims_.max_edges, PatternDims::kChannels);
    for (int p = 0; p < dims_.max_panels; ++p) {
      const int base = p * (dims_.max_edges + 1);
      pr.row(p) = t.row(base);
      er.middleRows(p * dims_.max_edges, dims_.max_edges) = t.middleRows(base + 1, dims_.max_edges);
    }
    pose.push_back(std::move(pr));
    edge.push_back(std::move(er));
  }
  pose_stats_ = ChannelStats::fit(pose);
  edge_stats_ = ChannelStats::fit(edge);
}

void PatternModel::save(const std::string& path) const {
  nlohmann::json h{{"kind", kind_ == PatternModelKind::Flow ? "ppf" : "regression"},
                   {"config", net_.config().to_json()},
                   {"dims", {{"max_panels", dims_.max_panels}, {"max_edges", dims_.max_edges}}},
                   {"particle_stats", particle_stats_.to_json()},
                   {"pose_stats", pose_stats_.to_json()},
                   {"edge_stats", edge_stats_.to_json()},
                   {"layout", net_.params().layout()},
                   {"info", info_}};
  nn::write_checkpoint(path, h, net_.params().values());
}

PatternModel PatternModel::load(const std::string& path) {
  auto [h, values] = nn::read_checkpoint(path);
  const std::string kind = h.value("kind", std::string{});
  if (kind != "ppf" && kind != "regression") throw ValidationError(path + " is not a pattern model");
  PatternDims dims;
  dims.max_panels = h.at("dims").at("max_panels").get<int>();
  dims.max_edges = h.at("dims").at("max_edges").get<int>();
  PatternModel m(kind == "ppf" ? PatternModelKind::Flow : PatternModelKind::Regression,
                 TransformerConfig::from_json(h.at("config")), dims, 0);
  if (values.size() != m.net_.params().size())
    throw ValidationError("checkpoint parameter count does not match its config");
  m.net_.params().values() = std::move(values);
  m.particle_stats_ = ChannelStats::from_json(h.at("particle_stats"));
  m.pose_stats_ = ChannelStats::from_json(h.at("pose_stats"));
  m.edge_stats_ = ChannelStats::from_json(h.at("edge_stats"));
  m.info_ = h.value("info", nlohmann::json::object());
  return m;
}

Mat pattern_loss_weights(const Mat& tensor, const PatternDims& dims) {
  Mat w = Mat::Zero(tensor.rows(), tensor.cols());
  for (int p = 0; p < dims.max_panels; ++p) {
    const int base = p * (dims.max_edges + 1);
    bool present = false;
    for (int k = 0; k < dims.max_edges; ++k) {
      const int r = base + 1 + k;
      if (tensor(r, edge_ch::kValid) > 0.5) {
        w.row(r).setOnes();
        present = true;
      } else {
        w(r, edge_ch::kValid) = 1.0;
      }
    }
    if (present) w.row(base).setOnes();
  }
  return w;
}

void PatternTrainConfig::validate() const {
  if (batch < 1 || iters < 0 || warmup < 0) throw ValidationError("invalid training schedule");
  if (!(lr > 0.0)) throw ValidationError("learning rate must be > 0");
  if (noise_level < 0.0) throw ValidationError("noise level must be >= 0");
}

FlowTrainResult train_pattern_model(PatternModel& model, const std::vector<PatternTrainItem>& data,
                                    const PatternTrainConfig& cfg,
                                    const std::function<void(int, double)>& progress) {
  cfg.validate();
  if (data.empty()) throw ValidationError("training set is empty");
  std::vector<GarmentParticles> parts;
  std::vector<Mat> tensors;
  for (const auto& d : data) {
    d.particles.validate(std::numeric_limits<int>::max());
    parts.push_back(d.particles);
    tensors.push_back(d.tensor);
  }
  model.fit_stats(parts, tensors);
  std::vector<Mat> norm, weights;
  for (const auto& t : tensors) {
    norm.push_back(model.normalize(t));
    weights.push_back(pattern_loss_weights(t, model.dims()));
  }
  const bool flow = model.kind() == PatternModelKind::Flow;
  const Eigen::Index rows = norm.front().rows(), cols = norm.front().cols();

  FlowTrainResult result;
  {
    Rng mc(derive_seed(cfg.seed, 0x2e70));
    double total = 0.0, count = 0.0;
    const int draws = std::max<int>(64, static_cast<int>(norm.size()));
    for (int k = 0; k < draws; ++k) {
      const auto i = static_cast<std::size_t>(mc.uniform_int(0, static_cast<int>(norm.size()) - 1));
      const Mat target = flow ? Mat(norm[i] - mc.normal_matrix(rows, cols)) : norm[i];
      total += (target.array().square() * weights[i].array()).sum();
      count += weights[i].sum();
    }
    result.zero_init_loss = total / count;
  }

  Rng rng(cfg.seed);
  auto& store = model.net().params();
  nn::Adam opt(store.size(), cfg.lr);
  for (int it = 0; it < cfg.iters; ++it) {
    std::vector<double> grad(store.size(), 0.0);
    std::vector<std::size_t> picks;
    double denom = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      picks.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(norm.size()) - 1)));
      denom += weights[picks.back()].sum();
    }
    double loss = 0.0;
    for (std::size_t idx : picks) {
      const Mat& x1 = norm[idx];
      Conditioning c;
      const GarmentParticles cond_particles =
          cfg.noise_level > 0.0 ? add_pattern_noise(data[idx].particles, cfg.noise_level, rng.next_u64())
                                : data[idx].particles;
      c.features = model.features(cond_particles);
      nn::Tape tape(true);
      nn::Tape::Id out;
      Mat target;
      if (flow) {
        const double t = rng.uniform();
        const Mat x0 = rng.normal_matrix(rows, cols);
        out = model.net().forward(tape, t * x1 + (1.0 - t) * x0, t, c);
        target = x1 - x0;
      } else {
        out = model.net().forward(tape, Mat::Zero(rows, cols), 0.0, c);
        target = x1;
      }
      const auto l = tape.weighted_squared_error(out, target, weights[idx], denom);
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

SewingPattern ppf_sample(const PatternModel& model, const GarmentParticles& x, int steps,
                         std::uint64_t seed) {
  if (model.kind() != PatternModelKind::Flow) throw ValidationError("model is not a pattern flow");
  if (steps < 1) throw ValidationError("steps must be >= 1");
  Rng rng(seed);
  Mat state = rng.normal_matrix(model.dims().rows(), PatternDims::kChannels);
  Conditioning c;
  c.features = model.features(x);
  const double dt = 1.0 / steps;
  for (int k = 0; k < steps; ++k) {
    state = state + dt * model.net().evaluate(state, static_cast<double>(k) / steps, c);
    if (!state.allFinite()) throw RuntimeFailure("non-finite state during pattern sampling");
  }
  return decode_pattern(model.denormalize(state), model.dims());
}

SewingPattern recover_regression(const PatternModel& model, const GarmentParticles& x) {
  if (model.kind() != PatternModelKind::Regression)
    throw ValidationError("model is not a regression model");
  const Mat pred = model.evaluate(Mat::Zero(model.dims().rows(), PatternDims::kChannels), 0.0, x);
  return decode_pattern(model.denormalize(pred), model.dims());
}

}  // namespace gp
