#include "gp/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "gp/distances.hpp"
#include "gp/polygon.hpp"

namespace gp {

namespace {

// A cloud as distinct points with multiplicities; resampled clouds repeat
// points, and Chamfer sums only need each distinct point once.
struct WeightedCloud {
  RowMat pts;
  Eigen::VectorXd w;
};

WeightedCloud compress(const PointSet& p) {
  std::vector<int> order(static_cast<std::size_t>(p.rows()));
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](int a, int b) {
    for (Eigen::Index c = 0; c < p.cols(); ++c)
      if (p(a, c) != p(b, c)) return p(a, c) < p(b, c);
    return a < b;
  };
  std::sort(order.begin(), order.end(), less);
  std::vector<int> reps;
  std::vector<double> weights;
  for (int i : order) {
    if (!reps.empty() && p.row(reps.back()) == p.row(i)) {
      weights.back() += 1.0;
    } else {
      reps.push_back(i);
      weights.push_back(1.0);
    }
  }
  WeightedCloud out;
  out.pts.resize(static_cast<Eigen::Index>(reps.size()), p.cols());
  for (std::size_t k = 0; k < reps.size(); ++k) out.pts.row(static_cast<Eigen::Index>(k)) = p.row(reps[k]);
  out.w = Eigen::Map<const Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
  return out;
}

double weighted_chamfer(const WeightedCloud& a, const WeightedCloud& b) {
  Eigen::VectorXd amin = Eigen::VectorXd::Constant(a.pts.rows(), std::numeric_limits<double>::infinity());
  Eigen::VectorXd bmin = Eigen::VectorXd::Constant(b.pts.rows(), std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < a.pts.rows(); ++i) {
    const Eigen::VectorXd d = (b.pts.rowwise() - a.pts.row(i)).rowwise().squaredNorm();
    amin[i] = d.minCoeff();
    bmin = bmin.cwiseMin(d);
  }
  return a.w.dot(amin) + b.w.dot(bmin);
}

void require_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw ValidationError(std::string(what) + " set is empty");
}

}  // namespace

PointSet surface_sample(const GarmentParticles& x, int count, std::uint64_t seed) {
  if (count < 1) throw ValidationError("surface sample count must be >= 1");
  return farthest_point_resample(project_image(x), count, seed);
}

Mat pairwise_chamfer(const std::vector<PointSet>& a, const std::vector<PointSet>& b) {
  std::vector<WeightedCloud> ca, cb;
  for (const auto& p : a) {
    if (p.rows() == 0) throw ValidationError("empty point cloud");
    ca.push_back(compress(p));
  }
  for (const auto& p : b) {
    if (p.rows() == 0) throw ValidationError("empty point cloud");
    cb.push_back(compress(p));
  }
  Mat d(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < ca.size(); ++i)
    for (std::size_t j = 0; j < cb.size(); ++j)
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = weighted_chamfer(ca[i], cb[j]);
  return d;
}

double coverage(const Mat& d) {
  require_nonempty(static_cast<std::size_t>(d.rows()), "generated");
  require_nonempty(static_cast<std::size_t>(d.cols()), "reference");
  std::vector<bool> hit(static_cast<std::size_t>(d.cols()), false);
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    Eigen::Index j = 0;
    d.row(i).minCoeff(&j);
    hit[static_cast<std::size_t>(j)] = true;
  }
  return 100.0 * static_cast<double>(std::count(hit.begin(), hit.end(), true)) / static_cast<double>(d.cols());
}

double coverage(const std::vector<PointSet>& gen, const std::vector<PointSet>& ref) {
  require_nonempty(gen.size(), "generated");
  require_nonempty(ref.size(), "reference");
  return coverage(pairwise_chamfer(gen, ref));
}

double mmd(const Mat& d) {
  require_nonempty(static_cast<std::size_t>(d.rows()), "generated");
  require_nonempty(static_cast<std::size_t>(d.cols()), "reference");
  return d.colwise().minCoeff().mean();
}

double mmd(const std::vector<PointSet>& gen, const std::vector<PointSet>& ref) {
  require_nonempty(gen.size(), "generated");
  require_nonempty(ref.size(), "reference");
  return mmd(pairwise_chamfer(gen, ref));
}

OneNnaResult one_nna(const Mat& dgg, const Mat& dgr, const Mat& drr) {
  const Eigen::Index ng = dgg.rows(), nr = drr.rows();
  if (ng < 2 || nr < 2) throw ValidationError("1-NNA needs at least 2 clouds per set");
  if (dgg.cols() != ng || drr.cols() != nr || dgr.rows() != ng || dgr.cols() != nr)
    throw ValidationError("1-NNA distance matrices have inconsistent shapes");
  const Eigen::Index n = ng + nr;
  auto dist = [&](Eigen::Index i, Eigen::Index j) {
    if (i < ng && j < ng) return dgg(i, j);
    if (i >= ng && j >= ng) return drr(i - ng, j - ng);
    return i < ng ? dgr(i, j - ng) : dgr(j, i - ng);
  };
  OneNnaResult r;
  int correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    int at_best = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = dist(i, j);
      if (d < best_d) {
        best_d = d;
        best = j;
        at_best = 1;
      } else if (d == best_d) {
        ++at_best;
      }
    }
    if (at_best > 1) ++r.ties;
    if ((i < ng) == (best < ng)) ++correct;
  }
  r.percent = 100.0 * correct / static_cast<double>(n);
  return r;
}

OneNnaResult one_nna(const std::vector<PointSet>& gen, const std::vector<PointSet>& ref) {
  if (gen.size() < 2 || ref.size() < 2) throw ValidationError("1-NNA needs at least 2 clouds per set");
  return one_nna(pairwise_chamfer(gen, gen), pairwise_chamfer(gen, ref), pairwise_chamfer(ref, ref));
}

nlohmann::json GenEvalReport::to_json() const {
  return {{"cov", cov},         {"mmd", mmd},
          {"one_nna", one_nna}, {"one_nna_ties", one_nna_ties},
          {"n_generated", n_generated}, {"n_reference", n_reference}};
}

GenEvalReport evaluate_generation(const std::vector<PointSet>& gen, const std::vector<PointSet>& ref) {
  require_nonempty(gen.size(), "generated");
  require_nonempty(ref.size(), "reference");
  const Mat dgr = pairwise_chamfer(gen, ref);
  GenEvalReport r;
  r.cov = coverage(dgr);
  r.mmd = mmd(dgr);
  r.n_generated = static_cast<int>(gen.size());
  r.n_reference = static_cast<int>(ref.size());
  if (gen.size() >= 2 && ref.size() >= 2) {
    const auto nna = one_nna(pairwise_chamfer(gen, gen), dgr, pairwise_chamfer(ref, ref));
    r.one_nna = nna.percent;
    r.one_nna_ties = nna.ties;
  }
  return r;
}

std::vector<std::pair<int, int>> match_panels(const SewingPattern& pred, const SewingPattern& gt) {
  struct Cand {
    double d;
    int p, g;
  };
  std::vector<Cand> cands;
  const auto pp = pred.polygons();
  const auto gp = gt.polygons();
  for (std::size_t i = 0; i < pp.size(); ++i)
    for (std::size_t j = 0; j < gp.size(); ++j) {
      if (pp[i].size() < 3 || gp[j].size() < 3) continue;
      cands.push_back({(centroid(pp[i]) - centroid(gp[j])).norm(), static_cast<int>(i), static_cast<int>(j)});
    }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.d < b.d; });
  std::vector<bool> used_p(pp.size(), false), used_g(gp.size(), false);
  std::vector<std::pair<int, int>> out;
  for (const auto& c : cands) {
    if (used_p[static_cast<std::size_t>(c.p)] || used_g[static_cast<std::size_t>(c.g)]) continue;
    used_p[static_cast<std::size_t>(c.p)] = used_g[static_cast<std::size_t>(c.g)] = true;
    out.push_back({c.p, c.g});
  }
  return out;
}

double panel_iou(const SewingPattern& pred, const SewingPattern& gt, int* degenerate) {
  const std::size_t denom = std::max(pred.panels.size(), gt.panels.size());
  if (degenerate) *degenerate = 0;
  if (denom == 0) return 1.0;
  const auto pp = pred.polygons();
  const auto gp = gt.polygons();
  auto usable = [](const PatternPanel& panel, const Polygon2& poly) {
    return panel.valid && poly.size() >= 3 && area(poly) > 1e-12 && is_simple(poly);
  };
  double total = 0.0;
  for (const auto& [p, g] : match_panels(pred, gt)) {
    const auto pi = static_cast<std::size_t>(p), gi = static_cast<std::size_t>(g);
    if (!usable(pred.panels[pi], pp[pi]) || !usable(gt.panels[gi], gp[gi])) {
      if (degenerate) ++*degenerate;
      continue;
    }
    total += polygon_iou(pp[pi], gp[gi]);
  }
  return total / static_cast<double>(denom);
}

double panel_accuracy(const std::vector<SewingPattern>& preds, const std::vector<SewingPattern>& gts) {
  if (preds.size() != gts.size()) throw ValidationError("prediction and ground-truth counts differ");
  if (preds.empty()) throw ValidationError("no patterns to score");
  int ok = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) ok += preds[i].panels.size() == gts[i].panels.size();
  return 100.0 * ok / static_cast<double>(preds.size());
}

double stitch_accuracy(const std::vector<SewingPattern>& preds, const std::vector<SewingPattern>& gts) {
  if (preds.size() != gts.size()) throw ValidationError("prediction and ground-truth counts differ");
  int total = 0, hit = 0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const auto& pred = preds[k];
    const auto& gt = gts[k];
    total += static_cast<int>(gt.stitches.size());
    std::map<int, int> to_pred;
    for (const auto& [p, g] : match_panels(pred, gt)) to_pred[g] = p;
    // Each ground-truth edge maps to the matched panel's edge with the nearest midpoint.
    auto edge_of = [&](int g, int e) -> int {
      auto it = to_pred.find(g);
      if (it == to_pred.end()) return -1;
      const Polygon2 gp = gt.panels[static_cast<std::size_t>(g)].polygon();
      const Polygon2 pp = pred.panels[static_cast<std::size_t>(it->second)].polygon();
      const Vec2 mid = 0.5 * (gp[static_cast<std::size_t>(e)] + gp[(static_cast<std::size_t>(e) + 1) % gp.size()]);
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < pp.size(); ++j) {
        const double d = (0.5 * (pp[j] + pp[(j + 1) % pp.size()]) - mid).norm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(j);
        }
      }
      return best;
    };
    for (const auto& s : gt.stitches) {
      const int ea = edge_of(s.panel_a, s.edge_a), eb = edge_of(s.panel_b, s.edge_b);
      if (ea < 0 || eb < 0) continue;
      const int pa = to_pred[s.panel_a], pb = to_pred[s.panel_b];
      for (const auto& q : pred.stitches) {
        if ((q.panel_a == pa && q.edge_a == ea && q.panel_b == pb && q.edge_b == eb) ||
            (q.panel_a == pb && q.edge_a == eb && q.panel_b == pa && q.edge_b == ea)) {
          ++hit;
          break;
        }
      }
    }
  }
  if (total == 0) return 100.0;
  return 100.0 * hit / static_cast<double>(total);
}

}  // namespace gp
