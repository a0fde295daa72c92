#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hrtfgp/direction.hpp"
#include "hrtfgp/gp.hpp"
#include "hrtfgp/incremental_gp.hpp"

namespace hrtfgp {

inline constexpr double kGpSsleNoise = 0.05;

// Target directions (rows) with simplex weights.
struct TargetSet {
  Eigen::MatrixXd U;        // p x 3 unit rows
  Eigen::VectorXd weights;  // p

  Eigen::Index size() const { return U.rows(); }
  void validate() const;

  // Equal weights 1/p.
  static TargetSet uniform(const std::vector<Direction>& targets);
};

// -u.v for unit vectors; -1 is a perfect localization.
double ssle(const Eigen::Vector3d& u, const Eigen::Vector3d& v);
inline double ssle(const Direction& u, const Direction& v) { return ssle(u.vector(), v.vector()); }

// E[min(g, eta)] for g ~ N(mu, C). eta = +inf (nothing observed yet) gives mu.
double expected_loss(double mu, double C, double eta);

// sum_u weights_u W(mean(c, u), var(c), eta_u) for every candidate row c.
Eigen::VectorXd weighted_expected_loss(const Eigen::MatrixXd& mean, const Eigen::VectorXd& var,
                                       const Eigen::VectorXd& eta, const Eigen::VectorXd& weights);

class Listener {
 public:
  virtual ~Listener() = default;
  // Reported direction for a rendered MP feature row.
  virtual Eigen::Vector3d respond(const Eigen::RowVectorXd& mp_row) = 0;
};

enum class ListenerMode { posterior_mean, posterior_sample };

std::string_view to_string(ListenerMode mode);
ListenerMode parse_listener_mode(std::string_view name);

// A GP-SSL model standing in for a human. posterior_sample draws each output
// from N(mean, var + sigma^2) before normalizing. A zero mean vector repeats
// the previous report (the front direction before any report).
std::unique_ptr<Listener> make_simulated_listener(GpModel ssl_model, ListenerMode mode,
                                                  std::uint64_t seed);

// Per-dimension geometric mean of length scales, geometric mean of signal
// scales, noise fixed at 0.05.
Hyperparams gp_ssle_prior_from_ssl(const std::vector<GpModel>& ssl_models);

// One active-learning run over a fixed candidate pool.
//
// The GP-SSLE shares one prior across the p targets. Before any response eta is
// +inf, every candidate scores its zero prior mean and the tie rule picks
// index 0, so callers put the non-individualized HRTF first.
class ActiveSession {
 public:
  ActiveSession(TargetSet targets, Eigen::MatrixXd pool, const Hyperparams& prior);

  // Weighted expected loss per candidate; +inf for spent candidates.
  Eigen::VectorXd acquisition() const;
  // Lowest-index minimizer of acquisition(). Throws when the pool is exhausted.
  Eigen::Index select_query() const;

  // Records the response to `candidate` and updates eta and the GP-SSLE.
  void record(Eigen::Index candidate, const Eigen::Vector3d& reported);

  // select_query, ask the listener, record. Returns the candidate index.
  Eigen::Index step(Listener& listener);

  Eigen::Index round() const { return static_cast<Eigen::Index>(queried_.size()); }
  const TargetSet& targets() const { return targets_; }
  const Eigen::MatrixXd& pool() const { return pool_; }
  const std::vector<Eigen::Index>& queried() const { return queried_; }
  const std::vector<Eigen::Vector3d>& reported() const { return reported_; }
  bool spent(Eigen::Index candidate) const { return spent_[static_cast<std::size_t>(candidate)]; }
  // p x t, entry (u, t) = -u.v_t.
  Eigen::MatrixXd ssle_matrix() const;
  // p, +inf before the first response.
  const Eigen::VectorXd& eta() const { return eta_; }
  // eta after each round, t x p.
  const std::vector<Eigen::VectorXd>& eta_trace() const { return eta_trace_; }
  // Candidate that produced eta for target u (-1 before any response).
  Eigen::Index best_candidate(Eigen::Index target) const;
  const IncrementalGp& gp() const { return gp_; }

 private:
  TargetSet targets_;
  Eigen::MatrixXd pool_;
  IncrementalGp gp_;
  std::vector<bool> spent_;
  std::vector<Eigen::Index> queried_;
  std::vector<Eigen::Vector3d> reported_;
  std::vector<Eigen::VectorXd> ssle_rows_;
  std::vector<Eigen::VectorXd> eta_trace_;
  Eigen::VectorXd eta_;
};

}  // namespace hrtfgp
