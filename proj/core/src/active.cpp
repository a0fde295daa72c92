#include "hrtfgp/active.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <spdlog/spdlog.h>

#include "hrtfgp/error.hpp"

namespace hrtfgp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_unit(const Eigen::Vector3d& v, const char* what) {
  if (!v.allFinite() || std::abs(v.norm() - 1.0) > Direction::kUnitTolerance) {
    throw InvalidArgument(std::string(what) + " is not a unit vector");
  }
}

class SimulatedListener final : public Listener {
 public:
  SimulatedListener(GpModel model, ListenerMode mode, std::uint64_t seed)
      : model_(std::move(model)), mode_(mode), rng_(seed) {
    if (model_.outputs() != 3) throw InvalidArgument("listener model must predict 3-vectors");
  }

  Eigen::Vector3d respond(const Eigen::RowVectorXd& mp_row) override {
    if (mp_row.size() != model_.X.cols()) throw InvalidArgument("listener: feature width mismatch");
    const PosteriorSummary p = predict(model_, mp_row);
    Eigen::Vector3d v = p.mean.row(0).transpose();
    if (mode_ == ListenerMode::posterior_sample) {
      const double sd = std::sqrt(p.var[0] + model_.noise_sd * model_.noise_sd);
      for (int c = 0; c < 3; ++c) v[c] += sd * normal_(rng_);
    }
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      spdlog::warn("simulated listener: zero-norm response, repeating the previous report");
      return last_;
    }
    last_ = v / n;
    return last_;
  }

 private:
  GpModel model_;
  ListenerMode mode_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  Eigen::Vector3d last_ = Eigen::Vector3d::UnitY();
};

}  // namespace

void TargetSet::validate() const {
  if (U.rows() < 1 || U.cols() != 3) throw InvalidArgument("targets: need p x 3 rows, p >= 1");
  if (weights.size() != U.rows()) throw InvalidArgument("targets: weight count mismatch");
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-12) {
    throw InvalidArgument("targets: weights are not on the simplex");
  }
  for (Eigen::Index i = 0; i < U.rows(); ++i) require_unit(U.row(i).transpose(), "target");
}

TargetSet TargetSet::uniform(const std::vector<Direction>& targets) {
  TargetSet out;
  const auto p = static_cast<Eigen::Index>(targets.size());
  if (p < 1) throw InvalidArgument("targets: empty list");
  out.U.resize(p, 3);
  for (Eigen::Index i = 0; i < p; ++i) out.U.row(i) = targets[static_cast<std::size_t>(i)].vector().transpose();
  out.weights = Eigen::VectorXd::Constant(p, 1.0 / static_cast<double>(p));
  return out;
}

double ssle(const Eigen::Vector3d& u, const Eigen::Vector3d& v) {
  require_unit(u, "target");
  require_unit(v, "reported direction");
  return std::clamp(-u.dot(v), -1.0, 1.0);
}

double expected_loss(double mu, double C, double eta) {
  if (!std::isfinite(mu)) throw InvalidArgument("expected_loss: non-finite mean");
  if (!(C >= 0.0) || !std::isfinite(C)) throw InvalidArgument("expected_loss: variance must be >= 0");
  if (std::isnan(eta)) throw InvalidArgument("expected_loss: eta is NaN");
  if (eta == kInf) return mu;
  if (C == 0.0) return std::min(mu, eta);
  const double s = std::sqrt(C);
  const double z = (eta - mu) / s;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return eta + (mu - eta) * cdf - s * pdf;
}

Eigen::VectorXd weighted_expected_loss(const Eigen::MatrixXd& mean, const Eigen::VectorXd& var,
                                       const Eigen::VectorXd& eta, const Eigen::VectorXd& weights) {
  if (mean.rows() != var.size() || mean.cols() != eta.size() || eta.size() != weights.size()) {
    throw InvalidArgument("weighted_expected_loss: shape mismatch");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mean.rows());
  for (Eigen::Index c = 0; c < mean.rows(); ++c) {
    // Round-off can leave tiny negative posterior variances.
    const double C = std::max(var[c], 0.0);
    for (Eigen::Index u = 0; u < mean.cols(); ++u) out[c] += weights[u] * expected_loss(mean(c, u), C, eta[u]);
  }
  return out;
}

std::string_view to_string(ListenerMode mode) {
  return mode == ListenerMode::posterior_mean ? "posterior_mean" : "posterior_sample";
}

ListenerMode parse_listener_mode(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "posterior_mean" || s == "mean") return ListenerMode::posterior_mean;
  if (s == "posterior_sample" || s == "sample") return ListenerMode::posterior_sample;
  throw InvalidArgument("unknown listener mode: " + std::string(name));
}

std::unique_ptr<Listener> make_simulated_listener(GpModel ssl_model, ListenerMode mode,
                                                  std::uint64_t seed) {
  return std::make_unique<SimulatedListener>(std::move(ssl_model), mode, seed);
}

Hyperparams gp_ssle_prior_from_ssl(const std::vector<GpModel>& ssl_models) {
  if (ssl_models.empty()) throw InvalidArgument("no GP-SSL models to average");
  const KernelSpec& first = ssl_models.front().spec;
  Eigen::VectorXd log_l = Eigen::VectorXd::Zero(first.dim());
  double log_alpha = 0.0;
  for (const GpModel& m : ssl_models) {
    if (m.spec.dim() != first.dim()) throw InvalidArgument("GP-SSL models disagree on feature width");
    if (m.spec.nu != first.nu) throw InvalidArgument("GP-SSL models disagree on smoothness");
    log_l += m.spec.length_scales.array().log().matrix();
    log_alpha += std::log(m.spec.signal_scale);
  }
  const double n = static_cast<double>(ssl_models.size());
  Hyperparams h;
  h.spec.nu = first.nu;
  h.spec.length_scales = (log_l / n).array().exp().matrix();
  h.spec.signal_scale = std::exp(log_alpha / n);
  h.noise_sd = kGpSsleNoise;
  return h;
}

ActiveSession::ActiveSession(TargetSet targets, Eigen::MatrixXd pool, const Hyperparams& prior)
    : targets_(std::move(targets)),
      pool_(std::move(pool)),
      gp_(prior.spec, prior.noise_sd, pool_, targets_.size()),
      spent_(static_cast<std::size_t>(pool_.rows()), false),
      eta_(Eigen::VectorXd::Constant(targets_.size(), kInf)) {
  targets_.validate();
  if (pool_.rows() < 1) throw InvalidArgument("empty candidate pool");
  if (!pool_.allFinite()) throw InvalidArgument("candidate pool has non-finite entries");
}

Eigen::VectorXd ActiveSession::acquisition() const {
  Eigen::VectorXd out = weighted_expected_loss(gp_.mean(), gp_.var(), eta_, targets_.weights);
  for (Eigen::Index c = 0; c < out.size(); ++c) {
    if (spent_[static_cast<std::size_t>(c)]) out[c] = kInf;
  }
  return out;
}

Eigen::Index ActiveSession::select_query() const {
  const Eigen::VectorXd a = acquisition();
  Eigen::Index best = -1;
  for (Eigen::Index c = 0; c < a.size(); ++c) {
    if (a[c] == kInf) continue;
    if (best < 0 || a[c] < a[best]) best = c;
  }
  if (best < 0) throw InvalidArgument("candidate pool exhausted");
  return best;
}

void ActiveSession::record(Eigen::Index candidate, const Eigen::Vector3d& reported) {
  if (candidate < 0 || candidate >= pool_.rows()) throw InvalidArgument("candidate index out of range");
  if (spent_[static_cast<std::size_t>(candidate)]) throw InvalidArgument("candidate already queried");
  require_unit(reported, "reported direction");
  Eigen::VectorXd row(targets_.size());
  for (Eigen::Index u = 0; u < targets_.size(); ++u) row[u] = ssle(targets_.U.row(u).transpose(), reported);

  gp_.include(pool_.row(candidate).transpose(), row.transpose());
  spent_[static_cast<std::size_t>(candidate)] = true;
  queried_.push_back(candidate);
  reported_.push_back(reported);
  ssle_rows_.push_back(row);
  eta_ = eta_.cwiseMin(row);
  eta_trace_.push_back(eta_);
}

Eigen::Index ActiveSession::step(Listener& listener) {
  const Eigen::Index c = select_query();
  record(c, listener.respond(pool_.row(c)));
  return c;
}

Eigen::MatrixXd ActiveSession::ssle_matrix() const {
  Eigen::MatrixXd out(targets_.size(), round());
  for (Eigen::Index t = 0; t < round(); ++t) out.col(t) = ssle_rows_[static_cast<std::size_t>(t)];
  return out;
}

Eigen::Index ActiveSession::best_candidate(Eigen::Index target) const {
  if (target < 0 || target >= targets_.size()) throw InvalidArgument("target index out of range");
  Eigen::Index best = -1;
  double value = kInf;
  for (std::size_t t = 0; t < ssle_rows_.size(); ++t) {
    if (ssle_rows_[t][target] < value) {
      value = ssle_rows_[t][target];
      best = queried_[t];
    }
  }
  return best;
}

}  // namespace hrtfgp
