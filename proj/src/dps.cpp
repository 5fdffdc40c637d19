#include "gp/dps.hpp"

#include <algorithm>

#include "gp/synthetic.hpp"

namespace gp {

namespace {

constexpr std::uint64_t kRenoiseStream = 0xe95;
constexpr std::uint64_t kResampleStream = 0xf95;

const std::vector<std::pair<DpsTask, std::string>>& task_names() {
  static const std::vector<std::pair<DpsTask, std::string>> names{
      {DpsTask::PointcloudCondition, "pointcloud_condition"},
      {DpsTask::Completion, "completion"},
      {DpsTask::PatternEdit, "pattern_edit"},
      {DpsTask::PatternCompletion, "pattern_completion"},
      {DpsTask::Silhouette, "silhouette"}};
  return names;
}

int resolve_count(const EditRequest& r, int n_max) {
  if (r.hyper.N > 0) return r.hyper.N;
  return std::min<int>(static_cast<int>(r.observation.rows()), n_max);
}

}  // namespace

std::string task_name(DpsTask t) {
  for (const auto& [k, v] : task_names())
    if (k == t) return v;
  throw ValidationError("unknown task");
}

DpsTask task_from_name(const std::string& name) {
  for (const auto& [k, v] : task_names())
    if (v == name) return k;
  throw ValidationError("unknown task '" + name + "'");
}

ObjectiveKind objective_for(DpsTask t) {
  switch (t) {
    case DpsTask::Completion:
    case DpsTask::PatternCompletion:
      return ObjectiveKind::ChamferOneSided;
    default:
      return ObjectiveKind::Emd;
  }
}

int observation_dim(DpsTask t) {
  switch (t) {
    case DpsTask::PointcloudCondition:
    case DpsTask::Completion:
      return 3;
    default:
      return 2;
  }
}

double DpsConfig::eta_for(ObjectiveKind k) const {
  if (eta) return *eta;
  return k == ObjectiveKind::Emd ? 0.05 : 0.015;
}

int DpsConfig::opt_n_for(ObjectiveKind k) const {
  if (opt_n) return *opt_n;
  return k == ObjectiveKind::Emd ? 2 : 10;
}

void DpsConfig::validate() const {
  if (T < 1) throw ValidationError("T must be >= 1");
  if (!(stop_t >= 0.0 && stop_t <= 1.0)) throw ValidationError("stop_t must lie in [0,1]");
  if (eta && !(*eta > 0.0)) throw ValidationError("eta must be > 0");
  if (opt_n && *opt_n < 0) throw ValidationError("opt_n must be >= 0");
  if (N < 0) throw ValidationError("N must be >= 0");
}

nlohmann::json DpsConfig::to_json() const {
  nlohmann::json j{{"T", T}, {"stop_t", stop_t}, {"N", N}, {"seed", seed}};
  if (eta) j["eta"] = *eta;
  if (opt_n) j["opt_n"] = *opt_n;
  return j;
}

DpsConfig DpsConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("hyper must be an object");
  DpsConfig c;
  c.T = j.value("T", c.T);
  c.stop_t = j.value("stop_t", c.stop_t);
  c.N = j.value("N", c.N);
  c.seed = j.value("seed", c.seed);
  if (j.contains("eta") && !j.at("eta").is_null()) c.eta = j.at("eta").get<double>();
  if (j.contains("opt_n") && !j.at("opt_n").is_null()) c.opt_n = j.at("opt_n").get<int>();
  c.validate();
  return c;
}

void EditRequest::validate() const {
  hyper.validate();
  if (observation.rows() < 1) throw ValidationError("observation is empty");
  if (!observation.allFinite()) throw ValidationError("observation has non-finite values");
  if (observation.cols() != observation_dim(task))
    throw ValidationError(task_name(task) + " needs a " + std::to_string(observation_dim(task)) +
                          "D observation");
  if (task == DpsTask::Silhouette) {
    if (!camera) throw ValidationError("silhouette task needs a camera");
    camera->validate();
  }
}

nlohmann::json EditRequest::to_json() const {
  nlohmann::json j{{"task", task_name(task)},
                   {"observation", point_set_to_json(observation)},
                   {"hyper", hyper.to_json()}};
  if (camera) j["camera"] = camera->to_json();
  if (!tokens.empty()) j["cond"] = tokens;
  return j;
}

EditRequest EditRequest::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("edit request must be an object");
  EditRequest r;
  try {
    r.task = task_from_name(j.at("task").get<std::string>());
    const auto& obs = j.at("observation");
    r.observation = point_set_from_json(obs.is_string() ? read_json_file(obs.get<std::string>()) : obs);
    if (j.contains("camera") && !j.at("camera").is_null()) r.camera = Camera::from_json(j.at("camera"));
    if (j.contains("cond") && !j.at("cond").is_null()) {
      const auto& c = j.at("cond");
      r.tokens = c.is_number_integer() ? label_tokens(c.get<int>()) : c.get<std::vector<int>>();
    }
    if (j.contains("hyper")) r.hyper = DpsConfig::from_json(j.at("hyper"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed edit request: ") + e.what());
  }
  r.validate();
  return r;
}

ForwardMap::ForwardMap(DpsTask task, std::optional<Camera> cam) : task_(task) {
  if (task == DpsTask::Silhouette) {
    if (!cam) throw ValidationError("silhouette forward map needs a camera");
    cam->validate();
    cam_ = *cam;
  }
}

int ForwardMap::out_dim() const { return observation_dim(task_); }

std::vector<int> ForwardMap::channels() const {
  switch (task_) {
    case DpsTask::PatternEdit:
    case DpsTask::PatternCompletion:
      return {0, 1};
    default:
      return {2, 3, 4};
  }
}

PointSet ForwardMap::apply(const Mat& coords) const {
  if (coords.cols() < 5) throw ValidationError("forward map needs 5 coordinates");
  switch (task_) {
    case DpsTask::PatternEdit:
    case DpsTask::PatternCompletion:
      return coords.leftCols(2);
    case DpsTask::Silhouette:
      return coords.middleCols(2, 3) * cam_.P;
    default:
      return coords.middleCols(2, 3);
  }
}

Mat ForwardMap::pullback(const Mat& grad_out) const {
  Mat g = Mat::Zero(grad_out.rows(), 5);
  switch (task_) {
    case DpsTask::PatternEdit:
    case DpsTask::PatternCompletion:
      g.leftCols(2) = grad_out;
      break;
    case DpsTask::Silhouette:
      g.middleCols(2, 3) = grad_out * cam_.P.transpose();
      break;
    default:
      g.middleCols(2, 3) = grad_out;
  }
  return g;
}

ForwardMap forward_map(DpsTask task, const std::optional<Camera>& cam) { return {task, cam}; }

Objective::Objective(ObjectiveKind kind, const PointSet& observation, int n, std::uint64_t seed)
    : kind_(kind), target_(observation) {
  if (observation.rows() < 1) throw ValidationError("observation is empty");
  if (kind == ObjectiveKind::Emd && observation.rows() != n) {
    if (n < 1) throw ValidationError("cannot resample the observation to zero points");
    target_ = farthest_point_resample(observation, n, seed);
  }
}

PointSetDistanceResult Objective::evaluate(const PointSet& y, bool with_gradient) const {
  if (kind_ == ObjectiveKind::ChamferOneSided) return chamfer_one_sided(y, target_, with_gradient);
  EmdOptions o;
  o.with_gradient = with_gradient;
  return emd(y, target_, o);
}

std::pair<Mat, Mat> posterior_estimates(const Mat& x, const Mat& v, double t) {
  return {x - t * v, x + (1.0 - t) * v};
}

nlohmann::json DpsTraceEntry::to_json() const {
  nlohmann::json j{{"step", step}, {"t", t}, {"guided", guided}, {"update_norm", update_norm}};
  if (guided) j["objective"] = objective;
  return j;
}

DpsResult dps_sample(const FlowModel& model, const EditRequest& request,
                     const DpsStepCallback& on_step) {
  request.validate();
  const DpsConfig& h = request.hyper;
  const int n = resolve_count(request, model.n_max());
  if (n > model.n_max()) throw ValidationError("N exceeds the model's n_max");
  const ObjectiveKind kind = objective_for(request.task);
  const ForwardMap fmap(request.task, request.camera);
  const Objective objective(kind, request.observation, n, derive_seed(h.seed, kResampleStream));
  const double eta = h.eta_for(kind);
  const int opt_n = h.opt_n_for(kind);
  const std::vector<int> tokens = request.tokens.empty() ? null_label_tokens() : request.tokens;

  const ChannelStats& stats = model.stats();
  // Gradients are taken in cm and rescaled by the mean variance of the
  // channels the forward map reads, so eta acts on normalized units.
  Eigen::RowVectorXd grad_scale = stats.scale.leftCols(5);
  double mean_var = 0.0;
  for (int c : fmap.channels()) mean_var += stats.scale[c] * stats.scale[c];
  mean_var /= static_cast<double>(fmap.channels().size());
  grad_scale /= mean_var;

  Mat x = initial_noise(n, h.seed);
  Rng renoise(derive_seed(h.seed, kRenoiseStream));
  const double dt = 1.0 / h.T;
  DpsResult result;
  for (int step = 0; step < h.T; ++step) {
    const double t = static_cast<double>(step) / h.T;
    const Mat v = model.velocity(x, t, tokens);
    DpsTraceEntry entry;
    entry.step = step;
    entry.t = t;
    entry.guided = opt_n > 0 && t <= h.stop_t;
    Mat next;
    if (!entry.guided) {
      next = x + dt * v;
    } else {
      auto [x0, x1] = posterior_estimates(x, v, t);
      for (int k = 0; k <= opt_n; ++k) {
        const Mat coords = stats.denormalize(x1).leftCols(5);
        const bool last = k == opt_n;
        const auto r = objective.evaluate(fmap.apply(coords), !last);
        entry.objective.push_back(r.value);
        if (last) break;
        const Mat g = fmap.pullback(*r.gradient);
        x1.leftCols(5) -= eta * (g.array().rowwise() * grad_scale.array()).matrix();
      }
      const Mat eps = renoise.normal_matrix(n, 6);
      x0 = std::sqrt(t + dt) * x0 + std::sqrt(std::max(0.0, 1.0 - t - dt)) * eps;
      next = (t + dt) * x1 + (1.0 - t - dt) * x0;
    }
    entry.update_norm = (next - x).norm();
    x = std::move(next);
    result.trace.push_back(entry);
    if (on_step) on_step(entry);
    if (!x.allFinite())
      throw RuntimeFailure("non-finite state at DPS step " + std::to_string(step) +
                           " (t=" + std::to_string(t) + ")");
  }
  result.particles = to_particles(model, x);
  result.state = std::move(x);
  result.final_objective =
      objective.evaluate(fmap.apply(result.particles.points), false).value;
  return result;
}

double evaluate_objective(const EditRequest& request, const GarmentParticles& x) {
  const ForwardMap fmap(request.task, request.camera);
  const Objective objective(objective_for(request.task), request.observation, x.size(),
                            derive_seed(request.hyper.seed, kResampleStream));
  return objective.evaluate(fmap.apply(x.points), false).value;
}

}  // namespace gp
