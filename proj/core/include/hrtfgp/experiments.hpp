#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hrtfgp/active.hpp"
#include "hrtfgp/dataset.hpp"
#include "hrtfgp/features.hpp"
#include "hrtfgp/gp.hpp"
#include "hrtfgp/kernel.hpp"
#include "hrtfgp/mog.hpp"
#include "hrtfgp/selection.hpp"

namespace hrtfgp {

// {"nu", "length_scales", "signal_scale", "noise_sd"}.
std::string hyperparams_json(const Hyperparams& params);
Hyperparams parse_hyperparams_json(std::string_view text);

// Stateless seed mixing for derived streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// k distinct indices out of n, sorted ascending.
std::vector<Eigen::Index> random_subset(Eigen::Index n, Eigen::Index k, std::uint64_t seed);

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& M, const std::vector<Eigen::Index>& rows);

// Rows of the training third used by every experiment for a given seed.
std::vector<Eigen::Index> training_split(Eigen::Index n, double fraction, std::uint64_t seed);

// Hyperparameters trained on the split rows from the default initialization.
TrainResult train_on_split(const FeatureMatrix& f, MaternNu nu, const std::vector<Eigen::Index>& split,
                           const TrainOptions& options);

// One GP-SSL posterior per subject on MP features, each trained and fitted on
// its own random split.
std::vector<GpModel> train_ssl_models(const std::vector<HrtfSet>& subjects, MaternNu nu, double fraction,
                                      const TrainOptions& options, std::uint64_t seed);

struct CrossvalOptions {
  std::vector<FeatureKind> features{std::begin(kAllFeatureKinds), std::end(kAllFeatureKinds)};
  std::vector<MaternNu> kernels{std::begin(kAllNus), std::end(kAllNus)};
  double train_fraction = 1.0 / 3.0;
  std::uint64_t seed = 0;
  TrainOptions train;
};

struct CrossvalRow {
  FeatureKind feature = FeatureKind::mp;
  std::string method;  // OLS, NN or GP-<nu>
  double mean_error_deg = 0.0;
  double lmh = 0.0;  // NaN for the baselines
};

// Train on a random fraction, predict at every input, report the mean angular error.
std::vector<CrossvalRow> run_crossval(const HrtfSet& set, const CrossvalOptions& options);
std::string crossval_csv(const std::vector<CrossvalRow>& rows);

struct EigenCurve {
  FeatureKind feature = FeatureKind::mp;
  MaternNu nu = MaternNu::inf;
  Eigen::VectorXd eigenvalues;
  Eigen::VectorXd cumulative_energy;
  Eigen::Index count90 = 0;
  double trace = 0.0;
};

// Kernel PCA of the full noise-free Gram matrix under hyperparameters trained
// on the crossval split.
std::vector<EigenCurve> run_eigen(const HrtfSet& set, const CrossvalOptions& options);
std::string eigen_csv(const std::vector<EigenCurve>& curves);

struct GfsOptions {
  FeatureKind feature = FeatureKind::mp;
  RiskKind risk = RiskKind::prediction_error;
  MaternNu nu = MaternNu::inf;
  Eigen::Index subset_size = 50;
  int random_subsets = 20;
  double train_fraction = 1.0 / 3.0;
  std::uint64_t seed = 0;
  TrainOptions train;
};

struct GfsCurve {
  std::vector<Eigen::Index> order;
  Eigen::VectorXd gfs_error_deg;     // error at subset sizes 1..T
  Eigen::MatrixXd random_error_deg;  // random_subsets x T
  Eigen::VectorXd random_median_deg;
  double full_error_deg = 0.0;  // all N points included
  Eigen::Index crossing5 = -1;  // smallest size with error <= 5 deg, -1 if none
  Eigen::Index crossing1 = -1;
  Hyperparams params;
};

// Mean angular error over all inputs as a function of subset size, for the
// greedy order and for random orders.
GfsCurve run_gfs(const HrtfSet& set, const GfsOptions& options);
std::string gfs_csv(const GfsCurve& curve);

// Mean angular error over X of GP posteriors grown along `order`, one value per prefix.
Eigen::VectorXd prefix_errors(const KernelSpec& spec, double noise_sd, const FeatureMatrix& f,
                              const std::vector<Eigen::Index>& order);

struct WorldOptions {
  int population = 6;       // subjects pooled into the generative model
  int listeners = 5;        // disjoint subjects simulated as listeners
  Eigen::Index pca_components = kDefaultPcaComponents;
  MogFitOptions mog;
  MaternNu listener_nu = MaternNu::inf;
  double listener_train_fraction = 1.0 / 3.0;
  TrainOptions listener_train;
  std::uint64_t seed = 0;
};

// Synthetic subjects, their generative model and trained GP-SSL listeners.
struct TrialWorld {
  GenerativeModel generative;
  std::vector<HrtfSet> listeners;
  std::vector<GpModel> ssl_models;
  Hyperparams prior;  // GP-SSLE prior averaged from ssl_models
};

TrialWorld build_trial_world(const WorldOptions& options);

struct TrialOptions {
  int rounds = 50;
  Eigen::Index pool_size = 20000;
  ListenerMode mode = ListenerMode::posterior_mean;
  bool include_listener_rows = false;  // append the listener's own MP rows to the pool
  std::uint64_t seed = 0;
};

// Pool for one target: the non-individualized HRTF first, then samples.
Eigen::MatrixXd candidate_pool(const GenerativeModel& model, const Direction& target, Eigen::Index size,
                               std::uint64_t seed);

struct TargetOutcome {
  Direction target = Direction::unit(0, 1, 0);
  std::vector<Eigen::Index> queried;
  std::vector<double> error_deg;  // per round, reported vs target
  std::vector<double> eta;        // per round
  double initial_error_deg = 0.0;
  double best_error_deg = 0.0;
};

TargetOutcome run_target(const GenerativeModel& model, const Hyperparams& prior, Listener& listener,
                         const Direction& target, const TrialOptions& options, std::uint64_t pool_seed,
                         const Eigen::MatrixXd* extra_rows = nullptr);

struct TrialReport {
  std::vector<Eigen::Index> listener;  // per outcome
  std::vector<TargetOutcome> outcomes;
  double mean_initial_error_deg = 0.0;
  double mean_best_error_deg = 0.0;
  double improvement_ratio = 0.0;  // mean initial / mean best
};

// `targets_per_listener` on-grid targets drawn per listener.
TrialReport run_trials(const TrialWorld& world, int targets_per_listener, const TrialOptions& options);
std::string trial_json(const TrialReport& report);

}  // namespace hrtfgp
