#include "hrtfgp/service.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cctype>
#include <cstdlib>
#include <random>

#include <boost/beast/core/detail/base64.hpp>
#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "hrtfgp/container.hpp"
#include "hrtfgp/experiments.hpp"
#include "hrtfgp/features.hpp"

namespace hrtfgp {

using nlohmann::json;

namespace {

constexpr int kLogVersion = 1;

std::string base64(const std::string& bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

json parse_body(std::string_view body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("request body is not JSON: ") + e.what());
  }
}

double number_field(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) throw InvalidArgument(std::string(key) + ": expected a number");
  const double v = j.at(key).get<double>();
  if (!std::isfinite(v)) throw InvalidArgument(std::string(key) + ": not finite");
  return v;
}

std::int64_t integer_field(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_integer()) {
    throw InvalidArgument(std::string(key) + ": expected an integer");
  }
  return j.at(key).get<std::int64_t>();
}

// Degrees, checked against the ranges of Direction.
Direction direction_from_degrees(double azimuth, double elevation) {
  if (azimuth < -180.0 || azimuth > 180.0) throw InvalidArgument("azimuth outside [-180, 180] degrees");
  if (elevation < -90.0 || elevation > 90.0) throw InvalidArgument("elevation outside [-90, 90] degrees");
  return Direction::from_angles(deg_to_rad(azimuth), deg_to_rad(elevation));
}

json direction_json(const Eigen::Vector3d& v) {
  const Direction d = Direction::normalized(v);
  return {{"azimuth", rad_to_deg(d.azimuth())}, {"elevation", rad_to_deg(d.elevation())}, {"vector", {v.x(), v.y(), v.z()}}};
}

json plan_json(const SessionPlan& plan) {
  json targets = json::array();
  for (const Direction& d : plan.targets) targets.push_back(direction_json(d.vector()));
  return {{"targets", targets},
          {"rounds_per_target", plan.rounds_per_target},
          {"seed", plan.seed},
          {"pool_size", plan.pool_size},
          {"idempotency_key", plan.idempotency_key}};
}

// Plans stored in a log header carry exact unit vectors.
SessionPlan plan_from_header(const json& j) {
  SessionPlan plan;
  try {
    for (const json& t : j.at("targets")) {
      const auto v = t.at("vector").get<std::vector<double>>();
      if (v.size() != 3) throw FormatError("targets", "expected 3-vectors");
      plan.targets.push_back(Direction::unit(v[0], v[1], v[2]));
    }
    plan.rounds_per_target = j.at("rounds_per_target").get<int>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.pool_size = j.at("pool_size").get<Eigen::Index>();
    plan.idempotency_key = j.at("idempotency_key").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError("plan", e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError("targets", e.what());
  }
  return plan;
}

std::string random_id() {
  std::random_device rd;
  const std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  return container::hex64(v);
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 &&
         std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-'; });
}

}  // namespace

SessionPlan parse_session_plan(std::string_view body, const ServiceConfig& config) {
  const json j = parse_body(body);
  if (!j.is_object()) throw InvalidArgument("plan must be a JSON object");
  SessionPlan plan;
  plan.rounds_per_target = config.default_rounds;
  plan.pool_size = config.default_pool_size;
  if (!j.contains("targets") || !j.at("targets").is_array()) throw InvalidArgument("targets: expected an array");
  for (const json& t : j.at("targets")) {
    if (!t.is_object()) throw InvalidArgument("targets: expected {azimuth, elevation} objects");
    plan.targets.push_back(direction_from_degrees(number_field(t, "azimuth"), number_field(t, "elevation")));
  }
  if (plan.targets.empty()) throw InvalidArgument("targets: empty plan");
  if (j.contains("rounds_per_target")) plan.rounds_per_target = static_cast<int>(integer_field(j, "rounds_per_target"));
  if (j.contains("pool_size")) plan.pool_size = integer_field(j, "pool_size");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw InvalidArgument("seed: expected a non-negative integer");
    plan.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("idempotency_key")) {
    if (!j.at("idempotency_key").is_string()) throw InvalidArgument("idempotency_key: expected a string");
    plan.idempotency_key = j.at("idempotency_key").get<std::string>();
  }
  if (plan.rounds_per_target < 1) throw InvalidArgument("rounds_per_target must be positive");
  if (plan.pool_size < plan.rounds_per_target) throw InvalidArgument("pool_size must be at least rounds_per_target");
  return plan;
}

std::uint64_t query_noise_seed(std::uint64_t plan_seed, Eigen::Index target, Eigen::Index t) {
  return derive_seed(derive_seed(plan_seed, static_cast<std::uint64_t>(target), static_cast<std::uint64_t>(t)), 1);
}

std::uint64_t reference_noise_seed(std::uint64_t plan_seed, Eigen::Index target, Eigen::Index t) {
  return derive_seed(derive_seed(plan_seed, static_cast<std::uint64_t>(target), static_cast<std::uint64_t>(t)), 2);
}

Eigen::MatrixXd session_pool(const GenerativeModel& model, const SessionPlan& plan, Eigen::Index target) {
  return candidate_pool(model, plan.targets.at(static_cast<std::size_t>(target)), plan.pool_size,
                        derive_seed(plan.seed, 0x9001, static_cast<std::uint64_t>(target)));
}

std::string model_digest(const GenerativeModel& model) {
  std::vector<std::byte> bytes;
  auto add = [&](const double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto bits = std::bit_cast<std::uint64_t>(p[i]);
      for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::byte>((bits >> (8 * b)) & 0xff));
    }
  };
  add(model.codec.mean.data(), model.codec.mean.size());
  add(model.codec.basis.data(), model.codec.basis.size());
  add(model.codec.variance.data(), model.codec.variance.size());
  add(model.mog.weights.data(), model.mog.weights.size());
  for (const auto& m : model.mog.means) add(m.data(), m.size());
  for (const auto& c : model.mog.covariances) add(c.data(), c.size());
  return container::hex64(container::fnv1a64(bytes));
}

struct SessionStore::Session {
  std::mutex mu;
  std::string id;
  SessionPlan plan;
  Hyperparams prior;
  std::filesystem::path log;
  std::vector<RoundRecord> records;
  std::unique_ptr<ActiveSession> active;  // current target

  bool have_query = false;
  Eigen::Index candidate = -1;
  std::string wav;
  std::string reference_wav;

  Eigen::Index round() const { return static_cast<Eigen::Index>(records.size()); }
  Eigen::Index planned() const { return static_cast<Eigen::Index>(plan.targets.size()) * plan.rounds_per_target; }
  bool complete() const { return round() >= planned(); }
  Eigen::Index target() const { return round() / plan.rounds_per_target; }
  Eigen::Index t() const { return round() % plan.rounds_per_target; }

  json descriptor() const {
    return {{"session_id", id},
            {"status", complete() ? "complete" : "awaiting_response"},
            {"round", round()},
            {"planned_rounds", planned()},
            {"plan", plan_json(plan)}};
  }
};

SessionStore::SessionStore(ServiceConfig config, GenerativeModel model, Hyperparams prior)
    : config_(std::move(config)), model_(std::move(model)), prior_(std::move(prior)) {
  if (config_.data_dir.empty()) throw InvalidArgument("service: data directory is not set");
  if (prior_.spec.dim() != model_.codec.width()) throw InvalidArgument("service: prior width differs from the model");
  std::filesystem::create_directories(config_.data_dir);
  model_digest_ = model_digest(model_);
}

SessionStore::~SessionStore() = default;

std::shared_ptr<SessionStore::Session> SessionStore::find(const std::string& id) const {
  std::shared_lock lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("unknown session " + id);
  return it->second;
}

std::vector<std::string> SessionStore::ids() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

std::shared_ptr<SessionStore::Session> SessionStore::open(const std::string& id, const SessionPlan& plan,
                                                          const Hyperparams& prior,
                                                          std::vector<RoundRecord> records) {
  auto s = std::make_shared<Session>();
  s->id = id;
  s->plan = plan;
  s->prior = prior;
  s->log = config_.data_dir / (id + ".jsonl");
  s->records = std::move(records);
  return s;
}

void SessionStore::prepare_query(Session& s) {
  if (s.have_query) return;
  if (s.complete()) throw Conflict("session " + s.id + " is complete");
  const Eigen::Index target = s.target();
  if (!s.active) {
    s.active = std::make_unique<ActiveSession>(TargetSet::uniform({s.plan.targets[static_cast<std::size_t>(target)]}),
                                               session_pool(model_, s.plan, target), s.prior);
    std::vector<RoundRecord> done;
    for (const RoundRecord& r : s.records) {
      if (r.target == target) done.push_back(r);
    }
    replay_rounds(*s.active, done);
  }
  s.candidate = s.active->select_query();
  const Eigen::VectorXd row = s.active->pool().row(s.candidate).transpose();
  s.wav = encode_wav(render_binaural(row, query_noise_seed(s.plan.seed, target, s.t()), config_.duration_s,
                                     config_.sample_rate));
  s.reference_wav = encode_wav(
      render_reference_noise(reference_noise_seed(s.plan.seed, target, s.t()), config_.duration_s, config_.sample_rate));
  s.have_query = true;
}

std::string SessionStore::create(std::string_view body) {
  const SessionPlan plan = parse_session_plan(body, config_);
  std::unique_lock lock(mu_);
  if (!plan.idempotency_key.empty()) {
    const auto it = idempotency_.find(plan.idempotency_key);
    if (it != idempotency_.end()) {
      const auto& s = sessions_.at(it->second);
      std::lock_guard session_lock(s->mu);
      return s->descriptor().dump();
    }
  }
  std::string id = random_id();
  while (sessions_.count(id) != 0 || std::filesystem::exists(config_.data_dir / (id + ".jsonl"))) id = random_id();

  auto s = open(id, plan, prior_, {});
  const json header = {{"type", "session"},
                       {"version", kLogVersion},
                       {"session_id", id},
                       {"plan", plan_json(plan)},
                       {"prior", json::parse(hyperparams_json(prior_))},
                       {"model_digest", model_digest_}};
  append_line_durable(s->log, header.dump());
  sessions_[id] = s;
  if (!plan.idempotency_key.empty()) idempotency_[plan.idempotency_key] = id;
  spdlog::info("session {}: {} targets x {} rounds", id, plan.targets.size(), plan.rounds_per_target);
  return s->descriptor().dump();
}

std::string SessionStore::query(const std::string& id) {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  prepare_query(*s);
  const json j = {{"session_id", s->id},
                  {"round", s->round()},
                  {"target", s->target()},
                  {"t", s->t()},
                  {"candidate_id", s->candidate},
                  {"mp_digest", mp_digest(s->active->pool().row(s->candidate))},
                  {"sample_rate", config_.sample_rate},
                  {"wav", base64(s->wav)},
                  {"alternates", base64(s->reference_wav)}};
  return j.dump();
}

std::string SessionStore::query_wav(const std::string& id, bool reference) {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  prepare_query(*s);
  return reference ? s->reference_wav : s->wav;
}

std::string SessionStore::respond(const std::string& id, std::string_view body) {
  const json j = parse_body(body);
  if (!j.is_object()) throw InvalidArgument("response must be a JSON object");
  const std::int64_t round = integer_field(j, "round");
  const Direction v = direction_from_degrees(number_field(j, "azimuth"), number_field(j, "elevation"));

  const auto s = find(id);
  std::lock_guard lock(s->mu);
  if (s->complete()) throw Conflict("session " + s->id + " is complete");
  if (round != s->round()) {
    throw Conflict(fmt::format("round {} does not match the current round {}", round, s->round()));
  }
  prepare_query(*s);

  const Eigen::Index target = s->target();
  const Eigen::Vector3d u = s->plan.targets[static_cast<std::size_t>(target)].vector();
  RoundRecord r;
  r.t = s->t();
  r.target = target;
  r.candidate_id = s->candidate;
  r.mp_digest = mp_digest(s->active->pool().row(s->candidate));
  r.v = v.vector();
  r.ssle_row = Eigen::VectorXd::Constant(1, ssle(u, r.v));
  r.eta = s->active->eta().cwiseMin(r.ssle_row);

  // Durable before anything changes in memory or is acknowledged.
  append_line_durable(s->log, encode_round(r));
  s->active->record(s->candidate, r.v);
  s->records.push_back(r);
  s->have_query = false;
  if (s->active->round() == s->plan.rounds_per_target) s->active.reset();

  json out = {{"session_id", s->id},
              {"round", round},
              {"target", target},
              {"ssle", r.ssle_row[0]},
              {"eta", r.eta[0]},
              {"complete", s->complete()}};
  out["next_round"] = s->complete() ? json(nullptr) : json(s->round());
  return out.dump();
}

std::string SessionStore::state(const std::string& id) {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  json targets = json::array();
  for (std::size_t k = 0; k < s->plan.targets.size(); ++k) {
    json rounds = json::array();
    json eta = json::array();
    json best = nullptr;
    double best_ssle = std::numeric_limits<double>::infinity();
    for (const RoundRecord& r : s->records) {
      if (r.target != static_cast<Eigen::Index>(k)) continue;
      rounds.push_back({{"t", r.t},
                        {"candidate_id", r.candidate_id},
                        {"mp_digest", r.mp_digest},
                        {"reported", direction_json(r.v)},
                        {"ssle", r.ssle_row[0]},
                        {"eta", r.eta[0]}});
      eta.push_back(r.eta[0]);
      if (r.ssle_row[0] < best_ssle) {
        best_ssle = r.ssle_row[0];
        best = {{"candidate_id", r.candidate_id}, {"mp_digest", r.mp_digest}, {"ssle", r.ssle_row[0]}};
      }
    }
    targets.push_back({{"direction", direction_json(s->plan.targets[k].vector())},
                       {"rounds", rounds},
                       {"eta_trace", eta},
                       {"best", best}});
  }
  json out = s->descriptor();
  out["t"] = s->complete() ? json(nullptr) : json(s->t());
  out["target"] = s->complete() ? json(nullptr) : json(s->target());
  out["targets"] = targets;
  return out.dump();
}

std::size_t SessionStore::rehydrate() {
  std::vector<std::filesystem::path> logs;
  for (const auto& entry : std::filesystem::directory_iterator(config_.data_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") logs.push_back(entry.path());
  }
  std::sort(logs.begin(), logs.end());
  std::size_t loaded = 0;
  for (const auto& path : logs) {
    try {
      const auto lines = read_lines(path);
      if (lines.empty()) throw FormatError("header", "empty log");
      json header;
      try {
        header = json::parse(lines.front());
      } catch (const json::exception& e) {
        throw FormatError("header", e.what());
      }
      if (header.value("type", "") != "session") throw FormatError("type", "first line is not a session header");
      if (header.value("version", 0) != kLogVersion) throw FormatError("version", "unsupported log version");
      if (header.value("model_digest", "") != model_digest_) {
        throw FormatError("model_digest", "log was written against a different generative model");
      }
      const std::string id = header.value("session_id", "");
      if (!valid_id(id) || path.stem() != id) throw FormatError("session_id", "does not match the file name");
      const SessionPlan plan = plan_from_header(header.at("plan"));
      const Hyperparams prior = parse_hyperparams_json(header.at("prior").dump());

      std::vector<RoundRecord> records;
      for (std::size_t i = 1; i < lines.size(); ++i) records.push_back(decode_round(lines[i]));
      for (std::size_t i = 0; i < records.size(); ++i) {
        const auto expected = static_cast<Eigen::Index>(i);
        if (records[i].target != expected / plan.rounds_per_target || records[i].t != expected % plan.rounds_per_target) {
          throw FormatError("t", "round records are out of sequence");
        }
      }
      auto s = open(id, plan, prior, std::move(records));
      if (s->round() > s->planned()) throw FormatError("t", "more rounds than planned");
      if (!s->complete()) prepare_query(*s);

      std::unique_lock lock(mu_);
      sessions_[id] = s;
      if (!plan.idempotency_key.empty()) idempotency_[plan.idempotency_key] = id;
      ++loaded;
    } catch (const Error& e) {
      spdlog::error("skipping session log {}: {}", path.string(), e.what());
    }
  }
  spdlog::info("rehydrated {} session(s) from {}", loaded, config_.data_dir.string());
  return loaded;
}

struct HttpService::Impl {
  SessionStore& store;
  httplib::Server server;
  explicit Impl(SessionStore& s) : store(s) {}
};

namespace {

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  auto fail = [&](int status, const std::string& what) {
    res.status = status;
    res.set_content(json{{"error", what}}.dump(), "application/json");
  };
  try {
    f();
  } catch (const InvalidArgument& e) {
    fail(400, e.what());
  } catch (const FormatError& e) {
    fail(400, e.what());
  } catch (const NotFound& e) {
    fail(404, e.what());
  } catch (const Conflict& e) {
    fail(409, e.what());
  } catch (const std::exception& e) {
    spdlog::error("request failed: {}", e.what());
    fail(500, e.what());
  }
}

}  // namespace

HttpService::HttpService(SessionStore& store) : impl_(std::make_unique<Impl>(store)) {
  auto& srv = impl_->server;
  auto& st = impl_->store;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type, Idempotency-Key"}});
  srv.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });
  srv.Get("/v1/sessions", [&st](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { res.set_content(json{{"sessions", st.ids()}}.dump(), "application/json"); });
  });
  srv.Post("/v1/sessions", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::string body = req.body;
      // A header key is folded into the body when the body has none.
      if (req.has_header("Idempotency-Key")) {
        json j = parse_body(body);
        if (j.is_object() && !j.contains("idempotency_key")) {
          j["idempotency_key"] = req.get_header_value("Idempotency-Key");
          body = j.dump();
        }
      }
      res.status = 201;
      res.set_content(st.create(body), "application/json");
    });
  });
  srv.Get(R"(/v1/sessions/([A-Za-z0-9-]+)/query)", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { res.set_content(st.query(req.matches[1]), "application/json"); });
  });
  srv.Get(R"(/v1/sessions/([A-Za-z0-9-]+)/query\.wav)", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { res.set_content(st.query_wav(req.matches[1], false), "audio/wav"); });
  });
  srv.Get(R"(/v1/sessions/([A-Za-z0-9-]+)/reference\.wav)",
          [&st](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { res.set_content(st.query_wav(req.matches[1], true), "audio/wav"); });
          });
  srv.Post(R"(/v1/sessions/([A-Za-z0-9-]+)/response)", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { res.set_content(st.respond(req.matches[1], req.body), "application/json"); });
  });
  srv.Get(R"(/v1/sessions/([A-Za-z0-9-]+)/state)", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { res.set_content(st.state(req.matches[1]), "application/json"); });
  });
}

HttpService::~HttpService() { stop(); }

int HttpService::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpService::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }

bool HttpService::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HttpService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void HttpService::wait_until_ready() const { impl_->server.wait_until_ready(); }

ServiceConfig apply_service_env(ServiceConfig config) {
  if (const char* dir = std::getenv("HRTFGP_DATA_DIR"); dir != nullptr && *dir != '\0') config.data_dir = dir;
  return config;
}

int service_port_from_env(int fallback) {
  const char* p = std::getenv("HRTFGP_PORT");
  if (p == nullptr || *p == '\0') return fallback;
  char* end = nullptr;
  const long port = std::strtol(p, &end, 10);
  if (*end != '\0' || port < 0 || port > 65535) throw InvalidArgument(std::string("HRTFGP_PORT is not a port: ") + p);
  return static_cast<int>(port);
}

bool serve_forever(SessionStore& store, const std::string& host, int port) {
  HttpService http(store);
  if (!http.bind(host, port)) {
    spdlog::error("cannot bind {}:{}", host, port);
    return false;
  }
  spdlog::info("listening on {}:{}", host, port);
  return http.listen_after_bind();
}

}  // namespace hrtfgp
