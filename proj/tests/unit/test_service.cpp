#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "../common/oracles.hpp"
#include "gp/service.hpp"

#include <httplib.h>

using namespace gp;
namespace fs = std::filesystem;

namespace {

struct ServiceFixture : ::testing::Test {
  fs::path dir;
  std::shared_ptr<const FlowModel> model;

  void SetUp() override {
    dir = fs::temp_directory_path() / ("gp_service_" + std::to_string(::getpid()) + "_" +
                                       ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    model = std::make_shared<const FlowModel>(oracle::tiny_flow(1, 64));
  }
  void TearDown() override { fs::remove_all(dir); }

  ServiceConfig config(std::size_t capacity = 4) const {
    ServiceConfig c;
    c.data_dir = dir.string();
    c.queue_capacity = capacity;
    return c;
  }
};

nlohmann::json body(const JobService::Response& r) { return nlohmann::json::parse(r.body); }

std::string submit(JobService& s, const std::string& path, const nlohmann::json& req) {
  const auto r = s.handle("POST", path, req.dump());
  EXPECT_EQ(r.status, 202) << r.body;
  return body(r).at("id").get<std::string>();
}

nlohmann::json edit_request(int opt_n, int T, std::uint64_t seed) {
  nlohmann::json obs = nlohmann::json::array();
  Rng rng(3);
  for (int i = 0; i < 20; ++i) obs.push_back({rng.normal(), rng.normal(), rng.normal()});
  return {{"task", "pointcloud_condition"},
          {"observation", {{"points", obs}}},
          {"cond", 1},
          {"hyper", {{"T", T}, {"opt_n", opt_n}, {"seed", seed}, {"N", 20}}}};
}

}  // namespace

TEST_F(ServiceFixture, HealthAndUnknownRoutes) {
  JobService s(config());
  EXPECT_EQ(s.handle("GET", "/health", "").status, 200);
  EXPECT_EQ(s.handle("GET", "/jobs/nope", "").status, 404);
  EXPECT_EQ(s.handle("GET", "/jobs/nope/result", "").status, 404);
  EXPECT_EQ(s.handle("GET", "/elsewhere", "").status, 404);
}

TEST_F(ServiceFixture, NoModelGives409AndBadBodies400) {
  JobService s(config());
  EXPECT_EQ(s.handle("POST", "/generate", R"({"N": 10})").status, 409);
  s.set_flow_model(model);
  EXPECT_EQ(s.handle("POST", "/generate", "not json").status, 400);
  EXPECT_EQ(s.handle("POST", "/generate", R"({"N": 0})").status, 400);
  EXPECT_EQ(s.handle("POST", "/generate", R"({"N": 1000})").status, 400);
  EXPECT_EQ(s.handle("POST", "/generate", R"({"N": 10, "cond": "cape"})").status, 400);
  auto sil = edit_request(2, 5, 1);
  sil["task"] = "silhouette";
  EXPECT_EQ(s.handle("POST", "/edit", sil.dump()).status, 400);
  auto path_obs = edit_request(2, 5, 1);
  path_obs["observation"] = "/etc/passwd";
  EXPECT_EQ(s.handle("POST", "/edit", path_obs.dump()).status, 400);
  EXPECT_EQ(s.handle("POST", "/recover", R"({"particles": {"points": [], "flags": []}})").status, 400);
  EXPECT_EQ(s.handle("GET", "/models", "").status, 200);
  EXPECT_TRUE(body(s.handle("GET", "/models", "")).at("flow").at("loaded").get<bool>());
}

TEST_F(ServiceFixture, EditWithoutGuidanceEqualsGenerate) {
  JobService s(config());
  s.set_flow_model(model);
  const std::string g = submit(s, "/generate", {{"N", 20}, {"cond", 1}, {"T", 12}, {"seed", 5}});
  const std::string e = submit(s, "/edit", edit_request(0, 12, 5));
  ASSERT_TRUE(s.wait(g, 60));
  ASSERT_TRUE(s.wait(e, 60));
  const auto rg = s.handle("GET", "/jobs/" + g + "/result", "");
  const auto re = s.handle("GET", "/jobs/" + e + "/result", "");
  ASSERT_EQ(rg.status, 200);
  ASSERT_EQ(re.status, 200);
  EXPECT_EQ(rg.body, re.body);
  EXPECT_EQ(rg.body, sample(*model, 20, label_tokens(1), 12, 5).to_json().dump());
}

TEST_F(ServiceFixture, ProgressIsMonotoneAndTraceIsJsonLines) {
  JobService s(config());
  s.set_flow_model(model);
  const std::string id = submit(s, "/edit", edit_request(2, 150, 2));
  double last = -1.0;
  std::string status;
  const std::set<std::string> allowed{"queued", "running", "done"};
  while (status != "done") {
    const auto j = body(s.handle("GET", "/jobs/" + id, ""));
    status = j.at("status").get<std::string>();
    ASSERT_TRUE(allowed.count(status)) << j.dump();
    const double p = j.at("progress").get<double>();
    EXPECT_GE(p, last);
    last = p;
    if (status != "done") {
      EXPECT_EQ(s.handle("GET", "/jobs/" + id + "/result", "").status, 202);
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  }
  EXPECT_EQ(last, 1.0);
  const auto trace = s.handle("GET", "/jobs/" + id + "/trace", "");
  std::istringstream lines(trace.body);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto e = nlohmann::json::parse(line);
    EXPECT_EQ(e.at("step").get<int>(), n++);
  }
  EXPECT_EQ(n, 150);
  EXPECT_TRUE(fs::exists(dir / "jobs" / id / "request.json"));
  EXPECT_TRUE(fs::exists(dir / "jobs" / id / "result.json"));
}

TEST_F(ServiceFixture, BoundedQueueRejectsWith503) {
  JobService s(config(2));
  s.set_flow_model(model);
  std::vector<std::string> ids;
  int rejected = 0;
  for (int i = 0; i < 4; ++i) {
    const auto r = s.handle("POST", "/edit", edit_request(2, 400, static_cast<std::uint64_t>(i)).dump());
    if (r.status == 503)
      ++rejected;
    else
      ids.push_back(body(r).at("id").get<std::string>());
  }
  EXPECT_EQ(ids.size(), 2u);
  EXPECT_EQ(rejected, 2);
  for (const auto& id : ids) ASSERT_TRUE(s.wait(id, 120));
  EXPECT_EQ(s.handle("POST", "/generate", R"({"N": 5, "T": 2})").status, 202);
}

TEST_F(ServiceFixture, RecoverIsSynchronousAndRecorded) {
  JobService s(config());
  const Dataset d = generate_dataset({.n_garments = 1, .seed = 2});
  const auto r = s.handle("POST", "/recover",
                          nlohmann::json{{"particles", d.samples[0].particles.to_json()}, {"variant", "delaunay"}}.dump());
  ASSERT_EQ(r.status, 200) << r.body;
  const SewingPattern p = SewingPattern::from_json(body(r));
  EXPECT_EQ(p.panels.size(), d.samples[0].pattern.panels.size());
  const auto flow = s.handle("POST", "/recover",
                             nlohmann::json{{"particles", d.samples[0].particles.to_json()}, {"variant", "flow"}}.dump());
  EXPECT_EQ(flow.status, 409);
  int recorded = 0;
  for (const auto& e : fs::directory_iterator(dir / "jobs")) recorded += fs::exists(e.path() / "result.json");
  EXPECT_EQ(recorded, 1);
}

TEST_F(ServiceFixture, RestartMarksInterruptedJobsFailedAndKeepsDoneOnes) {
  std::string done_id;
  {
    JobService s(config());
    s.set_flow_model(model);
    done_id = submit(s, "/generate", {{"N", 8}, {"T", 3}});
    ASSERT_TRUE(s.wait(done_id, 30));
  }
  // A record left behind by a process that died mid-job.
  fs::create_directories(dir / "jobs" / "stale");
  std::ofstream(dir / "jobs" / "stale" / "job.json")
      << nlohmann::json{{"id", "stale"}, {"kind", "edit"}, {"status", "running"}, {"progress", 0.4}}.dump();
  JobService s(config());
  EXPECT_EQ(body(s.handle("GET", "/jobs/" + done_id, "")).at("status"), "done");
  EXPECT_EQ(s.handle("GET", "/jobs/" + done_id + "/result", "").status, 200);
  const auto stale = body(s.handle("GET", "/jobs/stale", ""));
  EXPECT_EQ(stale.at("status"), "failed");
  EXPECT_FALSE(stale.at("error").get<std::string>().empty());
}

TEST_F(ServiceFixture, DatasetsAreListed) {
  write_dataset(generate_dataset({.n_garments = 2, .seed = 1}), (dir / "datasets" / "tiny").string());
  JobService s(config());
  const auto j = body(s.handle("GET", "/datasets", ""));
  ASSERT_EQ(j.at("datasets").size(), 1u);
  EXPECT_EQ(j["datasets"][0]["name"], "tiny");
  EXPECT_EQ(j["datasets"][0]["n_samples"], 2);
}

TEST_F(ServiceFixture, HttpHealthStaysLiveDuringALongJob) {
  JobService s(config());
  s.set_flow_model(model);
  const int port = s.listen_background("127.0.0.1");
  httplib::Client c("127.0.0.1", port);
  const auto post = c.Post("/edit", edit_request(2, 500, 9).dump(), "application/json");
  ASSERT_TRUE(post);
  ASSERT_EQ(post->status, 202);
  const std::string id = nlohmann::json::parse(post->body).at("id");
  int answered_while_running = 0;
  for (int i = 0; i < 20; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto h = c.Get("/health");
    ASSERT_TRUE(h);
    EXPECT_EQ(h->status, 200);
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.0);
    const auto j = nlohmann::json::parse(c.Get("/jobs/" + id)->body);
    answered_while_running += j.at("status") == "running";
  }
  EXPECT_GT(answered_while_running, 0);
  EXPECT_EQ(c.Get("/jobs/unknown")->status, 404);
  ASSERT_TRUE(s.wait(id, 120));
  EXPECT_EQ(c.Get("/jobs/" + id + "/result")->status, 200);
  s.stop();
}

TEST_F(ServiceFixture, ConfigFileParsesKeysAndRejectsUnknownOnes) {
  fs::create_directories(dir);
  const auto good = dir / "svc.conf";
  std::ofstream(good) << "# service\ndata_dir = /srv/gp\nqueue_capacity = 7  # bounded\n\nworkers=2\ndefault_steps = 40\n";
  const ServiceConfig c = ServiceConfig::from_file(good.string());
  EXPECT_EQ(c.data_dir, "/srv/gp");
  EXPECT_EQ(c.queue_capacity, 7u);
  EXPECT_EQ(c.workers, 2);
  EXPECT_EQ(c.default_steps, 40);
  const auto bad = dir / "bad.conf";
  std::ofstream(bad) << "queue_capacity = 3\ncolour = blue\n";
  EXPECT_THROW(ServiceConfig::from_file(bad.string()), ValidationError);
  std::ofstream(bad) << "workers = many\n";
  EXPECT_THROW(ServiceConfig::from_file(bad.string()), ValidationError);
  std::ofstream(bad) << "just text\n";
  EXPECT_THROW(ServiceConfig::from_file(bad.string()), ValidationError);
}
