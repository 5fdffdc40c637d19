#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gp/dps.hpp"
#include "gp/flow.hpp"
#include "gp/recovery.hpp"

namespace httplib {
class Server;
}

namespace gp {

enum class JobKind { Generate, Edit, Recover, Interpolate };
enum class JobStatus { Queued, Running, Done, Failed };

std::string job_kind_name(JobKind k);
std::string job_status_name(JobStatus s);

struct Job {
  std::string id;
  JobKind kind = JobKind::Generate;
  JobStatus status = JobStatus::Queued;
  double progress = 0.0;
  std::string error;
  nlohmann::json request;

  nlohmann::json to_json() const;
};

struct ServiceConfig {
  std::string data_dir = "gp_data";
  std::size_t queue_capacity = 4;  // queued plus running jobs
  int workers = 1;
  std::string flow_model;
  std::string ppf_model;
  std::string regression_model;
  int default_steps = 100;

  /// Reads `key = value` lines ('#' starts a comment).
  static ServiceConfig from_file(const std::string& path);
};

/// Disk-backed job service. Requests are validated on submission, queued
/// (bounded) and run by worker threads; each job writes request.json,
/// job.json, result.json and trace.jsonl under data_dir/jobs/<id>/.
class JobService {
 public:
  struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
  };

  explicit JobService(ServiceConfig cfg);
  ~JobService();
  JobService(const JobService&) = delete;
  JobService& operator=(const JobService&) = delete;

  void set_flow_model(std::shared_ptr<const FlowModel> m);
  void set_pattern_model(std::shared_ptr<const PatternModel> m);

  /// Routes one request; used by the HTTP layer and directly by tests.
  Response handle(const std::string& method, const std::string& path, const std::string& body);

  std::optional<Job> job(const std::string& id) const;
  /// Blocks until the job leaves queued/running or the timeout passes.
  bool wait(const std::string& id, double timeout_s) const;

  void mount(httplib::Server& server);
  /// Serves on a background thread until stop(); port 0 picks a free port.
  /// Returns the bound port; throws RuntimeFailure when binding fails.
  int listen_background(const std::string& host, int port = 0);
  void stop();

 private:
  Response submit(JobKind kind, const nlohmann::json& request);
  Response recover_now(const nlohmann::json& request);
  Response job_response(const std::string& id) const;
  Response result_response(const std::string& id) const;
  Response trace_response(const std::string& id) const;
  Response models_response() const;
  Response datasets_response() const;

  void worker_loop();
  void run(const std::string& id);
  void persist(const Job& j) const;
  void load_existing();
  std::string job_dir(const std::string& id) const;
  std::string new_id();

  ServiceConfig cfg_;
  std::shared_ptr<const FlowModel> flow_;
  std::map<PatternModelKind, std::shared_ptr<const PatternModel>> pattern_models_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::string, Job> jobs_;
  std::deque<std::string> queue_;
  std::size_t running_ = 0;
  bool stopping_ = false;
  std::uint64_t counter_ = 0;
  std::vector<std::thread> workers_;

  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
};

}  // namespace gp
