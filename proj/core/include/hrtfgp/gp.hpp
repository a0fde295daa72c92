#pragma once

#include <vector>

#include <Eigen/Core>

#include "hrtfgp/kernel.hpp"

namespace hrtfgp {

// GP regression with a shared prior over the M output columns of Y.
struct GpModel {
  KernelSpec spec;
  double noise_sd = 0.0;
  Eigen::MatrixXd X;     // N x D'
  Eigen::MatrixXd Y;     // N x M
  Eigen::MatrixXd chol;  // lower factor of K(X, X) + (noise_sd^2 + jitter) I
  Eigen::MatrixXd beta;  // (K + noise) \ Y
  double log_det = 0.0;
  double jitter = 0.0;   // diagonal added on top of noise_sd^2

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index outputs() const { return Y.cols(); }
};

struct PosteriorSummary {
  Eigen::MatrixXd mean;  // N* x M
  Eigen::VectorXd var;   // N*, latent (noise free) variance
};

// Factorizes K(X, X) + sigma^2 I. When the factorization fails, or a pivot
// falls below 1e-6 alpha, a diagonal jitter starting at 1e-10 alpha^2 is added
// and raised tenfold up to 1e-4 alpha^2 before giving up with NumericalError.
GpModel fit_posterior(const KernelSpec& spec, double noise_sd, const Eigen::MatrixXd& X,
                      const Eigen::MatrixXd& Y);

PosteriorSummary predict(const GpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& Xs);

// Posterior means scaled to unit rows. Throws NumericalError on a zero row.
Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& mean);

// Per-row great-circle distance between (unnormalized) predictions and unit
// targets, radians.
Eigen::VectorXd angular_errors(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth);
double mean_angular_error_deg(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth);

// Log marginal likelihood summed over the M outputs and its gradient with
// respect to (log l_1, ..., log l_D', log alpha, log sigma).
struct LmhGrad {
  double value = 0.0;
  Eigen::VectorXd grad;
};
LmhGrad lmh_and_grad(const GpModel& model);
double lmh(const GpModel& model);

struct Hyperparams {
  KernelSpec spec;
  double noise_sd = 0.0;
};

// l_k = median absolute pairwise difference of column k (1 if that is zero),
// widened by D for K_1/2 and sqrt(D) for the smoother kernels, alpha = standard deviation of the entries of Y, sigma = alpha / 10.
Hyperparams initial_hyperparams(MaternNu nu, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

struct TrainOptions {
  int iterations = 50;
  double step = 0.1;      // log-space step along grad / max|grad|
  int max_halvings = 20;
  bool train_noise = true;
};

struct TrainResult {
  Hyperparams params;
  double lmh = 0.0;
  std::vector<double> trace;  // accepted LMH values, starting with the initial one
};

// Gradient ascent on the log marginal likelihood in log-parameter space.
// Each iteration halves the step until the likelihood increases, and stops
// early if no step helps. The returned parameters are the best seen.
TrainResult train_hyperparams(const Hyperparams& initial, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& Y, const TrainOptions& options = {});

struct KpcaResult {
  Eigen::VectorXd eigenvalues;        // descending, clipped at zero
  Eigen::MatrixXd eigenvectors;       // N x N, unit columns in the same order
  Eigen::VectorXd cumulative_energy;  // nondecreasing, last entry 1
};

// Eigen-decomposition of a noise-free Gram matrix. Rejects asymmetric input.
KpcaResult kernel_pca(const Eigen::MatrixXd& K);

// Smallest number of leading components whose cumulative energy reaches `fraction`.
Eigen::Index components_for_energy(const KpcaResult& result, double fraction);

}  // namespace hrtfgp
