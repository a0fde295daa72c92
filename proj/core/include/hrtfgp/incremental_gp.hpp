#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "hrtfgp/gp.hpp"
#include "hrtfgp/kernel.hpp"

namespace hrtfgp {

// Kernel quantities for one candidate point: covariances with the included
// points, its own noisy variance and its covariances with the test inputs.
struct KernelColumns {
  Eigen::VectorXd k;       // t
  double kappa = 0.0;      // k(x, x) + sigma^2
  Eigen::VectorXd k_star;  // N*
};

// Result of a speculative inclusion; the state is left untouched.
struct Speculation {
  Eigen::MatrixXd mean;  // N* x M
  Eigen::VectorXd var;   // N*
  Eigen::MatrixXd z;     // (t+1) x M, the new K^-1 Y
  double log_det = 0.0;
};

struct IncrementalCounters {
  std::uint64_t inclusions = 0;
  std::uint64_t update_ops = 0;    // multiply-adds spent in rank-one updates
  std::uint64_t refactor_ops = 0;  // multiply-adds spent in from-scratch refreshes
  std::uint64_t refactorizations = 0;
  std::uint64_t bordered_fallbacks = 0;
};

// GP posterior at a fixed set of test inputs X*, grown one training point at
// a time. The explicit inverse of the noisy Gram matrix is updated with two
// rank-one corrections per point: the new point is appended as a unit
// diagonal entry and the bordered matrix is reached by subtracting u u^T and
// adding v v^T. When those corrections lose accuracy the equivalent Schur
// complement form is used instead. Every `refactor_interval` inclusions the
// inverse and posterior are recomputed from scratch to cap drift.
class IncrementalGp {
 public:
  IncrementalGp(const KernelSpec& spec, double noise_sd, Eigen::MatrixXd X_star,
                Eigen::Index outputs, int refactor_interval = 64);

  KernelColumns columns_for(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  void include(const Eigen::Ref<const Eigen::VectorXd>& x,
               const Eigen::Ref<const Eigen::RowVectorXd>& y);
  void include(const Eigen::Ref<const Eigen::VectorXd>& x,
               const Eigen::Ref<const Eigen::RowVectorXd>& y, const KernelColumns& cols);

  Speculation speculate(const KernelColumns& cols,
                        const Eigen::Ref<const Eigen::RowVectorXd>& y) const;

  Eigen::Index size() const { return t_; }
  Eigen::Index outputs() const { return Y_.cols(); }
  const KernelSpec& spec() const { return spec_; }
  double noise_sd() const { return noise_sd_; }

  const Eigen::MatrixXd& K_inv() const { return K_inv_; }
  double log_det() const { return log_det_; }
  const Eigen::MatrixXd& z() const { return z_; }
  const Eigen::MatrixXd& mean() const { return mean_; }
  const Eigen::VectorXd& var() const { return var_; }
  PosteriorSummary posterior() const { return {mean_, var_}; }

  Eigen::Ref<const Eigen::MatrixXd> X() const { return X_.topRows(t_); }
  Eigen::Ref<const Eigen::MatrixXd> Y() const { return Y_.topRows(t_); }
  const Eigen::MatrixXd& X_star() const { return X_star_; }
  Eigen::Ref<const Eigen::MatrixXd> K_star() const { return K_star_.leftCols(t_); }

  const IncrementalCounters& counters() const { return counters_; }

  // Recomputes inverse, log-determinant and posterior from the included points.
  void refactor();

 private:
  struct Update {
    Eigen::VectorXd ubar;  // t+1
    Eigen::VectorXd vbar;  // t+1
    double du = 0.0;
    double dv = 0.0;
    bool bordered = false;
  };

  Update compute_update(const KernelColumns& cols) const;
  void reserve(Eigen::Index capacity);

  KernelSpec spec_;
  double noise_sd_;
  double prior_var_;
  int refactor_interval_;
  Eigen::MatrixXd X_star_;
  Eigen::Index t_ = 0;

  Eigen::MatrixXd X_;       // capacity x D'
  Eigen::MatrixXd Y_;       // capacity x M
  Eigen::MatrixXd K_star_;  // N* x capacity
  Eigen::MatrixXd K_inv_;   // t x t
  Eigen::MatrixXd z_;       // t x M
  double log_det_ = 0.0;
  Eigen::MatrixXd mean_;
  Eigen::VectorXd var_;
  IncrementalCounters counters_;
};

}  // namespace hrtfgp
