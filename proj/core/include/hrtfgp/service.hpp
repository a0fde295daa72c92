#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "hrtfgp/active.hpp"
#include "hrtfgp/direction.hpp"
#include "hrtfgp/error.hpp"
#include "hrtfgp/gp.hpp"
#include "hrtfgp/mog.hpp"
#include "hrtfgp/session_log.hpp"

namespace hrtfgp {

class NotFound : public Error {
 public:
  using Error::Error;
};

// The request is well formed but does not fit the session's current state.
class Conflict : public Error {
 public:
  using Error::Error;
};

struct ServiceConfig {
  std::filesystem::path data_dir;  // one <id>.jsonl per session
  double sample_rate = 44100.0;
  double duration_s = 1.0;
  Eigen::Index default_pool_size = 20000;
  int default_rounds = 10;
};

struct SessionPlan {
  std::vector<Direction> targets;
  int rounds_per_target = 10;
  std::uint64_t seed = 0;
  Eigen::Index pool_size = 20000;
  std::string idempotency_key;  // empty: none
};

// {"targets": [{"azimuth": deg, "elevation": deg}, ...], "rounds_per_target",
// "seed", "pool_size", "idempotency_key"}; missing optional fields take the
// config defaults. Throws InvalidArgument on anything malformed.
SessionPlan parse_session_plan(std::string_view body, const ServiceConfig& config);

// Noise seeds for the rendered query and the dry reference of one round.
std::uint64_t query_noise_seed(std::uint64_t plan_seed, Eigen::Index target, Eigen::Index t);
std::uint64_t reference_noise_seed(std::uint64_t plan_seed, Eigen::Index target, Eigen::Index t);

// Candidate pool of target k in a plan.
Eigen::MatrixXd session_pool(const GenerativeModel& model, const SessionPlan& plan, Eigen::Index target);

// Digest of every parameter of the generative model.
std::string model_digest(const GenerativeModel& model);

// Sessions held in memory and mirrored to append-only JSON-lines logs.
//
// The first log line is a header with the plan, the GP-SSLE prior and the
// model digest; every later line is a RoundRecord. Responses are appended and
// fsynced before the in-memory session moves on, so a restart replays the
// log and serves the same next query.
class SessionStore {
 public:
  SessionStore(ServiceConfig config, GenerativeModel model, Hyperparams prior);
  ~SessionStore();

  // Loads every log in data_dir. Logs that fail to replay are skipped with an
  // error message. Returns the number of sessions loaded.
  std::size_t rehydrate();

  // Returns the descriptor JSON. Repeating an idempotency key returns the
  // existing session.
  std::string create(std::string_view body);
  std::string query(const std::string& id);
  // Stereo WAV bytes of the current query, or of the dry reference.
  std::string query_wav(const std::string& id, bool reference);
  // {"round", "azimuth", "elevation"}; round must equal the current round.
  std::string respond(const std::string& id, std::string_view body);
  std::string state(const std::string& id);
  std::vector<std::string> ids() const;

  const ServiceConfig& config() const { return config_; }

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  std::shared_ptr<Session> open(const std::string& id, const SessionPlan& plan, const Hyperparams& prior,
                                std::vector<RoundRecord> records);
  void prepare_query(Session& s);

  ServiceConfig config_;
  GenerativeModel model_;
  Hyperparams prior_;
  std::string model_digest_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::string> idempotency_;
};

// HTTP front end under /v1 with permissive CORS.
class HttpService {
 public:
  explicit HttpService(SessionStore& store);
  ~HttpService();

  // Binds to an ephemeral port and returns it.
  int bind_any_port(const std::string& host);
  bool bind(const std::string& host, int port);
  // Blocks until stop().
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// When set, HRTFGP_DATA_DIR and HRTFGP_PORT replace the given defaults.
ServiceConfig apply_service_env(ServiceConfig config);
int service_port_from_env(int fallback);

// Binds and serves until the process is stopped. Returns false if binding fails.
bool serve_forever(SessionStore& store, const std::string& host, int port);

}  // namespace hrtfgp
