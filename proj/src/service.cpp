#include "gp/service.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <httplib.h>

#include "gp/interpolation.hpp"
#include "gp/synthetic.hpp"

namespace fs = std::filesystem;

namespace gp {

namespace {

JobService::Response json_response(int status, const nlohmann::json& j) {
  return {status, j.dump(), "application/json"};
}

JobService::Response error_response(int status, const std::string& msg) {
  return json_response(status, {{"error", msg}});
}

std::vector<int> parse_cond(const nlohmann::json& req) {
  if (!req.contains("cond") || req.at("cond").is_null()) return null_label_tokens();
  const auto& c = req.at("cond");
  if (c.is_number_integer()) {
    const int label = c.get<int>();
    if (label < 0 || label > kNullLabel) throw ValidationError("cond label out of range");
    return label_tokens(label);
  }
  if (c.is_string()) return label_tokens(static_cast<int>(family_from_name(c.get<std::string>())));
  if (c.is_array()) return c.get<std::vector<int>>();
  throw ValidationError("cond must be a label, a family name or a token list");
}

void check_tokens(const FlowModel& m, const std::vector<int>& tokens) {
  const int vocab = m.net().config().cond_vocab;
  for (int t : tokens)
    if (t < 0 || t >= vocab) throw ValidationError("condition token out of range");
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string job_kind_name(JobKind k) {
  switch (k) {
    case JobKind::Generate: return "generate";
    case JobKind::Edit: return "edit";
    case JobKind::Recover: return "recover";
    case JobKind::Interpolate: return "interpolate";
  }
  return "unknown";
}

std::string job_status_name(JobStatus s) {
  switch (s) {
    case JobStatus::Queued: return "queued";
    case JobStatus::Running: return "running";
    case JobStatus::Done: return "done";
    case JobStatus::Failed: return "failed";
  }
  return "unknown";
}

nlohmann::json Job::to_json() const {
  nlohmann::json j{{"id", id},
                   {"kind", job_kind_name(kind)},
                   {"status", job_status_name(status)},
                   {"progress", progress},
                   {"result", "/jobs/" + id + "/result"},
                   {"trace", "/jobs/" + id + "/trace"}};
  if (!error.empty()) j["error"] = error;
  return j;
}

ServiceConfig ServiceConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path);
  ServiceConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) throw ValidationError(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    try {
      if (key == "data_dir") c.data_dir = value;
      else if (key == "queue_capacity") c.queue_capacity = std::stoul(value);
      else if (key == "workers") c.workers = std::stoi(value);
      else if (key == "flow_model") c.flow_model = value;
      else if (key == "ppf_model") c.ppf_model = value;
      else if (key == "regression_model") c.regression_model = value;
      else if (key == "default_steps") c.default_steps = std::stoi(value);
      else throw ValidationError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const ValidationError*>(&e)) throw;
      throw ValidationError(path + ":" + std::to_string(lineno) + ": bad value for '" + key + "'");
    }
  }
  return c;
}

JobService::JobService(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.queue_capacity < 1 || cfg_.workers < 1) throw ValidationError("queue and workers must be >= 1");
  fs::create_directories(fs::path(cfg_.data_dir) / "jobs");
  if (!cfg_.flow_model.empty()) flow_ = std::make_shared<const FlowModel>(FlowModel::load(cfg_.flow_model));
  for (const auto& p : {cfg_.ppf_model, cfg_.regression_model})
    if (!p.empty()) set_pattern_model(std::make_shared<const PatternModel>(PatternModel::load(p)));
  load_existing();
  for (int i = 0; i < cfg_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

JobService::~JobService() {
  stop();
  {
    std::lock_guard lk(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& w : workers_) w.join();
}

void JobService::set_flow_model(std::shared_ptr<const FlowModel> m) {
  std::lock_guard lk(mu_);
  flow_ = std::move(m);
}

void JobService::set_pattern_model(std::shared_ptr<const PatternModel> m) {
  std::lock_guard lk(mu_);
  pattern_models_[m->kind()] = std::move(m);
}

std::string JobService::job_dir(const std::string& id) const {
  return (fs::path(cfg_.data_dir) / "jobs" / id).string();
}

std::string JobService::new_id() {
  static thread_local std::mt19937_64 gen(std::random_device{}());
  char buf[32];
  std::snprintf(buf, sizeof buf, "j%06llu-%06llx", static_cast<unsigned long long>(++counter_),
                static_cast<unsigned long long>(gen() & 0xffffffULL));
  return buf;
}

void JobService::persist(const Job& j) const {
  const fs::path dir = job_dir(j.id);
  fs::create_directories(dir);
  nlohmann::json rec = j.to_json();
  rec["request"] = j.request;
  const fs::path tmp = dir / "job.json.tmp";
  {
    std::ofstream out(tmp);
    out << rec.dump(2);
  }
  fs::rename(tmp, dir / "job.json");
}

void JobService::load_existing() {
  const fs::path root = fs::path(cfg_.data_dir) / "jobs";
  for (const auto& entry : fs::directory_iterator(root)) {
    const fs::path rec = entry.path() / "job.json";
    if (!fs::exists(rec)) continue;
    try {
      const auto j = nlohmann::json::parse(read_file(rec));
      Job job;
      job.id = j.at("id").get<std::string>();
      const std::string kind = j.at("kind").get<std::string>();
      for (JobKind k : {JobKind::Generate, JobKind::Edit, JobKind::Recover, JobKind::Interpolate})
        if (job_kind_name(k) == kind) job.kind = k;
      const std::string status = j.at("status").get<std::string>();
      job.status = status == "done" ? JobStatus::Done : JobStatus::Failed;
      job.progress = j.value("progress", 0.0);
      job.error = j.value("error", std::string{});
      if (status == "queued" || status == "running") job.error = "interrupted by a service restart";
      job.request = j.value("request", nlohmann::json::object());
      jobs_[job.id] = job;
      if (status != job_status_name(job.status)) persist(job);
      ++counter_;
    } catch (const std::exception&) {
      // Unreadable records are left on disk and ignored.
    }
  }
}

JobService::Response JobService::handle(const std::string& method, const std::string& path,
                                        const std::string& body) {
  try {
    auto parse_body = [&] {
      try {
        return nlohmann::json::parse(body);
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("request body is not JSON: ") + e.what());
      }
    };
    if (method == "GET") {
      if (path == "/health") return json_response(200, {{"status", "ok"}});
      if (path == "/models") return models_response();
      if (path == "/datasets") return datasets_response();
      if (path.rfind("/jobs/", 0) == 0) {
        const std::string rest = path.substr(6);
        const auto slash = rest.find('/');
        const std::string id = rest.substr(0, slash);
        const std::string tail = slash == std::string::npos ? "" : rest.substr(slash);
        if (tail.empty()) return job_response(id);
        if (tail == "/result") return result_response(id);
        if (tail == "/trace") return trace_response(id);
      }
      return error_response(404, "no route for GET " + path);
    }
    if (method == "POST") {
      if (path == "/generate") return submit(JobKind::Generate, parse_body());
      if (path == "/edit") return submit(JobKind::Edit, parse_body());
      if (path == "/interpolate") return submit(JobKind::Interpolate, parse_body());
      if (path == "/recover") return recover_now(parse_body());
      return error_response(404, "no route for POST " + path);
    }
    return error_response(400, "unsupported method " + method);
  } catch (const ValidationError& e) {
    return error_response(400, e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

JobService::Response JobService::submit(JobKind kind, const nlohmann::json& request) {
  if (!request.is_object()) throw ValidationError("request body must be an object");
  std::shared_ptr<const FlowModel> flow;
  {
    std::lock_guard lk(mu_);
    flow = flow_;
  }
  if (!flow) return error_response(409, "no flow model loaded");
  // Validate eagerly so malformed requests never become jobs.
  switch (kind) {
    case JobKind::Generate: {
      const int n = request.at("N").get<int>();
      if (n < 1 || n > flow->n_max()) throw ValidationError("N must lie in [1, n_max]");
      if (request.value("T", cfg_.default_steps) < 1) throw ValidationError("T must be >= 1");
      check_tokens(*flow, parse_cond(request));
      break;
    }
    case JobKind::Edit: {
      if (request.contains("observation") && request.at("observation").is_string())
        throw ValidationError("observation must be inline over HTTP");
      const EditRequest r = EditRequest::from_json(request);
      if (r.hyper.N > flow->n_max()) throw ValidationError("N exceeds the model's n_max");
      if (!r.tokens.empty()) check_tokens(*flow, r.tokens);
      break;
    }
    case JobKind::Interpolate: {
      for (const char* k : {"count_a", "count_b"}) {
        const int n = request.at(k).get<int>();
        if (n < 1 || n > flow->n_max()) throw ValidationError(std::string(k) + " must lie in [1, n_max]");
      }
      request.at("a").get<std::uint64_t>();
      request.at("b").get<std::uint64_t>();
      if (request.value("steps", 11) < 2) throw ValidationError("steps must be >= 2");
      check_tokens(*flow, parse_cond(request));
      break;
    }
    case JobKind::Recover:
      break;
  }
  Job job;
  {
    std::lock_guard lk(mu_);
    if (queue_.size() + running_ >= cfg_.queue_capacity) return error_response(503, "job queue is full");
    job.id = new_id();
    job.kind = kind;
    job.request = request;
    jobs_[job.id] = job;
    queue_.push_back(job.id);
  }
  const fs::path dir = job_dir(job.id);
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "request.json");
    out << request.dump(2);
  }
  persist(job);
  cv_.notify_all();
  return json_response(202, job.to_json());
}

JobService::Response JobService::recover_now(const nlohmann::json& request) {
  if (!request.is_object()) throw ValidationError("request body must be an object");
  const GarmentParticles x = GarmentParticles::from_json(request.at("particles"));
  x.validate(std::numeric_limits<int>::max());
  const std::string variant = request.value("variant", std::string("delaunay"));
  SewingPattern pattern;
  if (variant == "delaunay") {
    pattern = recover_delaunay(x);
    pattern.stitches = infer_stitches(pattern, x);
  } else if (variant == "flow" || variant == "regression") {
    const PatternModelKind kind = variant == "flow" ? PatternModelKind::Flow : PatternModelKind::Regression;
    std::shared_ptr<const PatternModel> m;
    {
      std::lock_guard lk(mu_);
      if (auto it = pattern_models_.find(kind); it != pattern_models_.end()) m = it->second;
    }
    if (!m) return error_response(409, "no " + variant + " pattern model loaded");
    pattern = kind == PatternModelKind::Flow
                  ? ppf_sample(*m, x, request.value("steps", cfg_.default_steps), request.value("seed", std::uint64_t{0}))
                  : recover_regression(*m, x);
  } else {
    throw ValidationError("unknown variant '" + variant + "'");
  }
  Job job;
  {
    std::lock_guard lk(mu_);
    job.id = new_id();
  }
  job.kind = JobKind::Recover;
  job.status = JobStatus::Done;
  job.progress = 1.0;
  job.request = request;
  const fs::path dir = job_dir(job.id);
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "result.json");
    out << pattern.to_json().dump();
  }
  persist(job);
  {
    std::lock_guard lk(mu_);
    jobs_[job.id] = job;
  }
  auto r = json_response(200, pattern.to_json());
  return r;
}

std::optional<Job> JobService::job(const std::string& id) const {
  std::lock_guard lk(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

bool JobService::wait(const std::string& id, double timeout_s) const {
  std::unique_lock lk(mu_);
  return cv_.wait_for(lk, std::chrono::duration<double>(timeout_s), [&] {
    auto it = jobs_.find(id);
    return it == jobs_.end() || it->second.status == JobStatus::Done || it->second.status == JobStatus::Failed;
  });
}

JobService::Response JobService::job_response(const std::string& id) const {
  auto j = job(id);
  if (!j) return error_response(404, "unknown job " + id);
  return json_response(200, j->to_json());
}

JobService::Response JobService::result_response(const std::string& id) const {
  auto j = job(id);
  if (!j) return error_response(404, "unknown job " + id);
  if (j->status == JobStatus::Failed) return json_response(500, j->to_json());
  if (j->status != JobStatus::Done) return json_response(202, j->to_json());
  return {200, read_file(fs::path(job_dir(id)) / "result.json"), "application/json"};
}

JobService::Response JobService::trace_response(const std::string& id) const {
  auto j = job(id);
  if (!j) return error_response(404, "unknown job " + id);
  const fs::path p = fs::path(job_dir(id)) / "trace.jsonl";
  return {200, fs::exists(p) ? read_file(p) : std::string{}, "application/x-ndjson"};
}

JobService::Response JobService::models_response() const {
  std::lock_guard lk(mu_);
  nlohmann::json out = nlohmann::json::object();
  if (flow_)
    out["flow"] = {{"loaded", true},
                   {"config", flow_->net().config().to_json()},
                   {"n_max", flow_->n_max()},
                   {"params", flow_->net().params().size()},
                   {"info", flow_->info()}};
  else
    out["flow"] = {{"loaded", false}};
  for (auto kind : {PatternModelKind::Flow, PatternModelKind::Regression}) {
    const std::string name = kind == PatternModelKind::Flow ? "ppf" : "regression";
    auto it = pattern_models_.find(kind);
    if (it == pattern_models_.end())
      out[name] = {{"loaded", false}};
    else
      out[name] = {{"loaded", true}, {"config", it->second->net().config().to_json()},
                   {"params", it->second->net().params().size()}};
  }
  return json_response(200, out);
}

JobService::Response JobService::datasets_response() const {
  nlohmann::json list = nlohmann::json::array();
  const fs::path root = fs::path(cfg_.data_dir) / "datasets";
  if (fs::exists(root)) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root))
      if (fs::exists(e.path() / "manifest.json")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      nlohmann::json item{{"name", d.filename().string()}};
      try {
        const auto m = nlohmann::json::parse(read_file(d / "manifest.json"));
        item["n_samples"] = m.contains("samples") ? m["samples"].size() : 0;
        if (m.contains("spec")) item["spec"] = m["spec"];
      } catch (const std::exception&) {
        item["error"] = "unreadable manifest";
      }
      list.push_back(item);
    }
  }
  return json_response(200, {{"datasets", list}});
}

void JobService::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lk(mu_);
      cv_.wait(lk, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
      ++running_;
      jobs_[id].status = JobStatus::Running;
    }
    persist(*job(id));
    cv_.notify_all();
    run(id);
    {
      std::lock_guard lk(mu_);
      --running_;
    }
    cv_.notify_all();
  }
}

void JobService::run(const std::string& id) {
  const Job snapshot = *job(id);
  const fs::path dir = job_dir(id);
  std::shared_ptr<const FlowModel> flow;
  {
    std::lock_guard lk(mu_);
    flow = flow_;
  }
  auto set_progress = [&](double p) {
    std::lock_guard lk(mu_);
    Job& j = jobs_[id];
    j.progress = std::max(j.progress, std::min(1.0, p));
  };
  auto finish = [&](JobStatus s, const std::string& error) {
    Job j;
    {
      std::lock_guard lk(mu_);
      Job& ref = jobs_[id];
      ref.status = s;
      ref.error = error;
      if (s == JobStatus::Done) ref.progress = 1.0;
      j = ref;
    }
    persist(j);
    cv_.notify_all();
  };
  try {
    if (!flow) throw RuntimeFailure("flow model unloaded before the job ran");
    const nlohmann::json& req = snapshot.request;
    nlohmann::json result;
    if (snapshot.kind == JobKind::Generate) {
      const int n = req.at("N").get<int>();
      const int steps = req.value("T", cfg_.default_steps);
      const std::vector<int> tokens = parse_cond(req);
      Mat x = initial_noise(n, req.value("seed", std::uint64_t{0}));
      const double dt = 1.0 / steps;
      for (int k = 0; k < steps; ++k) {
        x = euler_step(*flow, x, static_cast<double>(k) / steps, dt, tokens);
        if (!x.allFinite()) throw RuntimeFailure("non-finite state during sampling");
        set_progress(static_cast<double>(k + 1) / steps);
      }
      result = to_particles(*flow, x).to_json();
    } else if (snapshot.kind == JobKind::Edit) {
      const EditRequest r = EditRequest::from_json(req);
      std::ofstream trace(dir / "trace.jsonl");
      const DpsResult out = dps_sample(*flow, r, [&](const DpsTraceEntry& e) {
        trace << e.to_json().dump() << '\n';
        trace.flush();
        set_progress(static_cast<double>(e.step + 1) / r.hyper.T);
      });
      result = out.particles.to_json();
    } else if (snapshot.kind == JobKind::Interpolate) {
      const int count = req.value("steps", 11);
      const InterpolationPath path =
          make_path(*flow, req.at("a").get<std::uint64_t>(), req.at("count_a").get<int>(),
                    req.at("b").get<std::uint64_t>(), req.at("count_b").get<int>(), parse_cond(req),
                    req.value("timesteps", 5), req.value("T", cfg_.default_steps));
      nlohmann::json s_values = nlohmann::json::array(), samples = nlohmann::json::array();
      for (int k = 0; k < count; ++k) {
        const double s = k == count - 1 ? 1.0 : static_cast<double>(k) / (count - 1);
        s_values.push_back(s);
        samples.push_back(interpolate(*flow, path, s).to_json());
        set_progress(static_cast<double>(k + 1) / count);
      }
      result = {{"s", s_values}, {"samples", samples}, {"correspondence", path.correspondence}};
    }
    {
      std::ofstream out(dir / "result.json");
      out << result.dump();
    }
    finish(JobStatus::Done, "");
  } catch (const std::exception& e) {
    finish(JobStatus::Failed, e.what());
  }
}

void JobService::mount(httplib::Server& server) {
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    const Response r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server.Get(R"(/.*)", forward);
  server.Post(R"(/.*)", forward);
}

int JobService::listen_background(const std::string& host, int port) {
  server_ = std::make_unique<httplib::Server>();
  mount(*server_);
  if (port == 0)
    port = server_->bind_to_any_port(host);
  else if (!server_->bind_to_port(host, port))
    port = -1;
  if (port < 0) throw RuntimeFailure("cannot bind " + host + ":" + std::to_string(port));
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void JobService::stop() {
  if (server_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
}

}  // namespace gp
