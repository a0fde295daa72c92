#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <thread>

#include <gtest/gtest.h>
#include <json.hpp>

#include "hrtfgp/container.hpp"
#include "hrtfgp/features.hpp"
#include "hrtfgp/service.hpp"
#include "support/oracles.hpp"
#include "support/service_fixture.hpp"

// After Eigen: resolv.h, pulled in here, defines a _res macro.
#include <httplib.h>

namespace hrtfgp {
namespace {

using nlohmann::json;
using testing::TempDir;
using testing::tiny_generative_model;
using testing::tiny_prior;

ServiceConfig config_for(const std::filesystem::path& dir) {
  ServiceConfig c;
  c.data_dir = dir;
  c.duration_s = 0.1;
  c.default_pool_size = 40;
  c.default_rounds = 3;
  return c;
}

std::string two_target_plan(const std::string& key = "") {
  json j = {{"targets", {{{"azimuth", 30.0}, {"elevation", 0.0}}, {{"azimuth", 0.0}, {"elevation", 40.0}}}},
            {"rounds_per_target", 3},
            {"seed", 7},
            {"pool_size", 40}};
  if (!key.empty()) j["idempotency_key"] = key;
  return j.dump();
}

std::string response(Eigen::Index round, double az, double el) {
  return json{{"round", round}, {"azimuth", az}, {"elevation", el}}.dump();
}

// Reported directions for scripted runs, fixed by the round number.
std::pair<double, double> scripted_answer(Eigen::Index round) {
  std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(round));
  std::uniform_real_distribution<double> az(-180.0, 180.0);
  std::uniform_real_distribution<double> el(-60.0, 60.0);
  return {az(rng), el(rng)};
}

// Summary rebuilt from the raw log without any service code.
struct Fold {
  std::size_t rounds = 0;
  std::vector<std::vector<double>> eta;
  std::vector<std::vector<double>> ssle;
  std::vector<long> best;
};

Fold fold_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  const json header = json::parse(line);
  std::vector<Eigen::Vector3d> targets;
  for (const auto& t : header["plan"]["targets"]) {
    targets.emplace_back(t["vector"][0].get<double>(), t["vector"][1].get<double>(), t["vector"][2].get<double>());
  }
  Fold f;
  f.eta.resize(targets.size());
  f.ssle.resize(targets.size());
  f.best.assign(targets.size(), -1);
  std::vector<double> best_value(targets.size(), INFINITY);
  while (std::getline(in, line)) {
    const json r = json::parse(line);
    const auto k = r["target"].get<std::size_t>();
    const Eigen::Vector3d v(r["v"][0].get<double>(), r["v"][1].get<double>(), r["v"][2].get<double>());
    const double s = -targets[k].dot(v);
    f.ssle[k].push_back(s);
    f.eta[k].push_back(f.eta[k].empty() ? s : std::min(f.eta[k].back(), s));
    if (s < best_value[k]) {
      best_value[k] = s;
      f.best[k] = r["candidate_id"].get<long>();
    }
    ++f.rounds;
  }
  return f;
}

void expect_state_matches_fold(const json& state, const Fold& f) {
  EXPECT_EQ(state["round"].get<std::size_t>(), f.rounds);
  ASSERT_EQ(state["targets"].size(), f.eta.size());
  for (std::size_t k = 0; k < f.eta.size(); ++k) {
    const json& t = state["targets"][k];
    ASSERT_EQ(t["eta_trace"].size(), f.eta[k].size());
    for (std::size_t i = 0; i < f.eta[k].size(); ++i) {
      EXPECT_NEAR(t["eta_trace"][i].get<double>(), f.eta[k][i], 1e-15);
      EXPECT_NEAR(t["rounds"][i]["ssle"].get<double>(), f.ssle[k][i], 1e-15);
    }
    if (f.best[k] < 0) {
      EXPECT_TRUE(t["best"].is_null());
    } else {
      EXPECT_EQ(t["best"]["candidate_id"].get<long>(), f.best[k]);
    }
  }
}

std::uint16_t le16(const std::string& b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) | (static_cast<unsigned char>(b[at + 1]) << 8));
}

std::uint32_t le32(const std::string& b, std::size_t at) {
  return static_cast<std::uint32_t>(le16(b, at)) | (static_cast<std::uint32_t>(le16(b, at + 2)) << 16);
}

class ServiceTest : public ::testing::Test {
 protected:
  TempDir dir_{"service"};
  std::unique_ptr<SessionStore> store_ = make_store(dir_.path());

  static std::unique_ptr<SessionStore> make_store(const std::filesystem::path& dir) {
    return std::make_unique<SessionStore>(config_for(dir), tiny_generative_model(), tiny_prior());
  }

  std::string create(const std::string& body) { return json::parse(store_->create(body))["session_id"]; }
};

TEST_F(ServiceTest, PlanValidation) {
  EXPECT_THROW(store_->create(R"({"targets": []})"), InvalidArgument);
  EXPECT_THROW(store_->create("not json"), InvalidArgument);
  EXPECT_THROW(store_->create(R"({"targets": [{"azimuth": 190, "elevation": 0}]})"), InvalidArgument);
  EXPECT_THROW(store_->create(R"({"targets": [{"azimuth": 0, "elevation": 91}]})"), InvalidArgument);
  EXPECT_THROW(store_->create(R"({"targets": [{"azimuth": 0}]})"), InvalidArgument);
  EXPECT_THROW(store_->create(R"({"targets": [{"azimuth": 0, "elevation": 0}], "rounds_per_target": 0})"),
               InvalidArgument);
  EXPECT_THROW(store_->create(R"({"targets": [{"azimuth": 0, "elevation": 0}], "pool_size": 2})"),
               InvalidArgument);
  EXPECT_THROW(store_->create(R"({"targets": [{"azimuth": 0, "elevation": 0}], "seed": -1})"), InvalidArgument);
  EXPECT_TRUE(store_->ids().empty());
}

TEST_F(ServiceTest, FourteenTargetsOfTenRounds) {
  json plan = {{"rounds_per_target", 10}, {"pool_size", 20}};
  for (int i = 0; i < 7; ++i) plan["targets"].push_back({{"azimuth", -180.0 + 360.0 * i / 7.0}, {"elevation", 0.0}});
  for (int i = 0; i < 7; ++i) plan["targets"].push_back({{"azimuth", 0.0}, {"elevation", -45.0 + 20.0 * i}});
  const json d = json::parse(store_->create(plan.dump()));
  EXPECT_EQ(d["planned_rounds"].get<int>(), 140);
  EXPECT_EQ(d["status"], "awaiting_response");
  EXPECT_EQ(d["round"].get<int>(), 0);
}

TEST_F(ServiceTest, IdempotencyKeyReturnsTheSameSession) {
  const std::string a = create(two_target_plan("k1"));
  const std::string b = create(two_target_plan("k1"));
  const std::string c = create(two_target_plan("k2"));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(store_->ids().size(), 2u);
}

TEST_F(ServiceTest, QueryIsRepeatableAndEqualsADirectRender) {
  const std::string id = create(two_target_plan());
  const json q1 = json::parse(store_->query(id));
  const json q2 = json::parse(store_->query(id));
  EXPECT_EQ(q1, q2);
  EXPECT_EQ(q1["round"].get<int>(), 0);
  EXPECT_EQ(q1["candidate_id"].get<int>(), 0);

  const std::string wav = store_->query_wav(id, false);
  EXPECT_EQ(wav, store_->query_wav(id, false));
  SessionPlan plan = parse_session_plan(two_target_plan(), store_->config());
  const Eigen::MatrixXd pool = session_pool(tiny_generative_model(), plan, 0);
  const std::string direct =
      encode_wav(render_binaural(pool.row(0).transpose(), query_noise_seed(7, 0, 0), 0.1, 44100.0));
  EXPECT_EQ(wav, direct);
  EXPECT_EQ(store_->query_wav(id, true), encode_wav(render_reference_noise(reference_noise_seed(7, 0, 0), 0.1, 44100.0)));
  EXPECT_NE(store_->query_wav(id, true), wav);

  ASSERT_GE(wav.size(), 44u);
  EXPECT_EQ(wav.substr(0, 4), "RIFF");
  EXPECT_EQ(wav.substr(8, 4), "WAVE");
  EXPECT_EQ(le16(wav, 20), 1);  // PCM
  EXPECT_EQ(le16(wav, 22), 2);
  EXPECT_EQ(le32(wav, 24), 44100u);
  EXPECT_EQ(le16(wav, 34), 16);
}

TEST_F(ServiceTest, ResponsesAdvanceThePlan) {
  const std::string id = create(two_target_plan());
  EXPECT_THROW(store_->respond(id, response(0, 181.0, 0.0)), InvalidArgument);
  EXPECT_THROW(store_->respond(id, response(0, 0.0, -90.5)), InvalidArgument);
  EXPECT_THROW(store_->respond(id, R"({"azimuth": 0, "elevation": 0})"), InvalidArgument);

  const json r0 = json::parse(store_->respond(id, response(0, 30.0, 0.0)));
  EXPECT_NEAR(r0["ssle"].get<double>(), -1.0, 1e-12);
  EXPECT_EQ(r0["next_round"].get<int>(), 1);
  EXPECT_THROW(store_->respond(id, response(0, 30.0, 0.0)), Conflict);
  EXPECT_THROW(store_->respond(id, response(5, 30.0, 0.0)), Conflict);

  store_->respond(id, response(1, 10.0, 5.0));
  store_->respond(id, response(2, -20.0, 5.0));
  const json q = json::parse(store_->query(id));
  EXPECT_EQ(q["target"].get<int>(), 1);
  EXPECT_EQ(q["t"].get<int>(), 0);
  EXPECT_EQ(q["candidate_id"].get<int>(), 0);

  for (int r = 3; r < 6; ++r) {
    const auto [az, el] = scripted_answer(r);
    store_->respond(id, response(r, az, el));
  }
  const json done = json::parse(store_->state(id));
  EXPECT_EQ(done["status"], "complete");
  EXPECT_THROW(store_->query(id), Conflict);
  EXPECT_THROW(store_->respond(id, response(6, 0.0, 0.0)), Conflict);
  for (const auto& t : done["targets"]) {
    const auto& eta = t["eta_trace"];
    for (std::size_t i = 1; i < eta.size(); ++i) EXPECT_LE(eta[i].get<double>(), eta[i - 1].get<double>());
  }
}

TEST_F(ServiceTest, FreshStateAndUnknownIds) {
  const std::string id = create(two_target_plan());
  const json s = json::parse(store_->state(id));
  EXPECT_EQ(s["t"].get<int>(), 0);
  EXPECT_TRUE(s["targets"][0]["eta_trace"].empty());
  EXPECT_THROW(store_->state("nope"), NotFound);
  EXPECT_THROW(store_->query("nope"), NotFound);
  EXPECT_THROW(store_->respond("nope", response(0, 0, 0)), NotFound);
}

TEST_F(ServiceTest, StateEqualsAnIndependentFoldOfTheLog) {
  const std::string id = create(two_target_plan());
  for (Eigen::Index r = 0; r < 5; ++r) {
    const auto [az, el] = scripted_answer(r);
    store_->respond(id, response(r, az, el));
    expect_state_matches_fold(json::parse(store_->state(id)), fold_log(dir_.path() / (id + ".jsonl")));
  }
}

TEST_F(ServiceTest, RestartServesTheIdenticalNextQuery) {
  const std::string id = create(two_target_plan("restart"));
  for (Eigen::Index r = 0; r < 4; ++r) {
    const auto [az, el] = scripted_answer(r);
    store_->respond(id, response(r, az, el));
  }
  const std::string before_query = store_->query(id);
  const std::string before_state = store_->state(id);

  TempDir copy("service_copy");
  std::filesystem::copy(dir_.path(), copy.path(), std::filesystem::copy_options::recursive);
  auto restarted = make_store(copy.path());
  ASSERT_EQ(restarted->rehydrate(), 1u);
  EXPECT_EQ(restarted->query(id), before_query);
  EXPECT_EQ(restarted->state(id), before_state);
  EXPECT_EQ(json::parse(restarted->create(two_target_plan("restart")))["session_id"], id);

  // Both copies stay in lockstep for the rest of the plan.
  for (Eigen::Index r = 4; r < 6; ++r) {
    EXPECT_EQ(restarted->query_wav(id, false), store_->query_wav(id, false));
    const auto [az, el] = scripted_answer(r);
    EXPECT_EQ(restarted->respond(id, response(r, az, el)), store_->respond(id, response(r, az, el)));
  }
  EXPECT_EQ(restarted->state(id), store_->state(id));
}

TEST_F(ServiceTest, TornTailIsIgnoredOnRestart) {
  const std::string id = create(two_target_plan());
  store_->respond(id, response(0, 10.0, 0.0));
  const std::string next = store_->query(id);
  {
    std::ofstream out(dir_.path() / (id + ".jsonl"), std::ios::app);
    out << R"({"type":"round","t":1,"tar)";
  }
  auto restarted = make_store(dir_.path());
  ASSERT_EQ(restarted->rehydrate(), 1u);
  EXPECT_EQ(restarted->query(id), next);
}

TEST_F(ServiceTest, TamperedLogsAreSkipped) {
  const std::string id = create(two_target_plan());
  store_->respond(id, response(0, 10.0, 0.0));
  const auto path = dir_.path() / (id + ".jsonl");
  std::string text = container::read_text_file(path);
  const auto at = text.find("\"mp_digest\":\"") + 13;
  text[at] = text[at] == '0' ? '1' : '0';
  container::write_file_atomic(path, text);
  auto restarted = make_store(dir_.path());
  EXPECT_EQ(restarted->rehydrate(), 0u);
  EXPECT_THROW(restarted->query(id), NotFound);
}

TEST_F(ServiceTest, LogsFromAnotherModelAreSkipped) {
  const std::string id = create(two_target_plan());
  GenerativeModel other = tiny_generative_model();
  other.codec.mean[0] += 1e-3;
  SessionStore restarted(config_for(dir_.path()), other, tiny_prior());
  EXPECT_EQ(restarted.rehydrate(), 0u);
}

TEST(ServiceEnv, PortParsing) {
  ::unsetenv("HRTFGP_PORT");
  EXPECT_EQ(service_port_from_env(8080), 8080);
  ::setenv("HRTFGP_PORT", "9123", 1);
  EXPECT_EQ(service_port_from_env(8080), 9123);
  ::setenv("HRTFGP_PORT", "80x", 1);
  EXPECT_THROW(service_port_from_env(8080), InvalidArgument);
  ::unsetenv("HRTFGP_PORT");
  ::setenv("HRTFGP_DATA_DIR", "/tmp/elsewhere", 1);
  EXPECT_EQ(apply_service_env(ServiceConfig{}).data_dir, "/tmp/elsewhere");
  ::unsetenv("HRTFGP_DATA_DIR");
}

TEST(ServiceHttp, EndpointsUnderV1) {
  TempDir dir("http");
  SessionStore store(config_for(dir.path()), tiny_generative_model(), tiny_prior());
  HttpService http(store);
  const int port = http.bind_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread server([&] { http.listen_after_bind(); });
  http.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  auto created = cli.Post("/v1/sessions", two_target_plan(), "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  EXPECT_EQ(created->get_header_value("Access-Control-Allow-Origin"), "*");
  const std::string id = json::parse(created->body)["session_id"];

  auto with_header = cli.Post("/v1/sessions", httplib::Headers{{"Idempotency-Key", "h"}}, two_target_plan(),
                              "application/json");
  auto again = cli.Post("/v1/sessions", httplib::Headers{{"Idempotency-Key", "h"}}, two_target_plan(),
                        "application/json");
  EXPECT_EQ(json::parse(with_header->body)["session_id"], json::parse(again->body)["session_id"]);

  EXPECT_EQ(cli.Post("/v1/sessions", R"({"targets": []})", "application/json")->status, 400);
  EXPECT_EQ(cli.Get("/v1/sessions/ffff/state")->status, 404);

  auto q = cli.Get("/v1/sessions/" + id + "/query");
  ASSERT_EQ(q->status, 200);
  EXPECT_FALSE(json::parse(q->body)["wav"].get<std::string>().empty());
  auto wav = cli.Get("/v1/sessions/" + id + "/query.wav");
  ASSERT_EQ(wav->status, 200);
  EXPECT_EQ(wav->get_header_value("Content-Type"), "audio/wav");
  EXPECT_EQ(wav->body, store.query_wav(id, false));
  EXPECT_EQ(cli.Get("/v1/sessions/" + id + "/reference.wav")->body, store.query_wav(id, true));

  EXPECT_EQ(cli.Post("/v1/sessions/" + id + "/response", response(0, 200.0, 0.0), "application/json")->status, 400);
  EXPECT_EQ(cli.Post("/v1/sessions/" + id + "/response", response(0, 30.0, 0.0), "application/json")->status, 200);
  EXPECT_EQ(cli.Post("/v1/sessions/" + id + "/response", response(0, 30.0, 0.0), "application/json")->status, 409);

  auto st = cli.Get("/v1/sessions/" + id + "/state");
  ASSERT_EQ(st->status, 200);
  EXPECT_EQ(json::parse(st->body)["round"].get<int>(), 1);

  auto pre = cli.Options("/v1/sessions");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);
  EXPECT_NE(pre->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);

  http.stop();
  server.join();
}

}  // namespace
}  // namespace hrtfgp
