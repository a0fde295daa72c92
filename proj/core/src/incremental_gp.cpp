#include "hrtfgp/incremental_gp.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <spdlog/spdlog.h>

#include "hrtfgp/error.hpp"

namespace hrtfgp {

namespace {

std::uint64_t as_ops(Eigen::Index v) { return static_cast<std::uint64_t>(v); }

}  // namespace

IncrementalGp::IncrementalGp(const KernelSpec& spec, double noise_sd, Eigen::MatrixXd X_star,
                             Eigen::Index outputs, int refactor_interval)
    : spec_(spec),
      noise_sd_(noise_sd),
      prior_var_(spec.signal_scale * spec.signal_scale),
      refactor_interval_(refactor_interval),
      X_star_(std::move(X_star)) {
  spec_.validate();
  if (X_star_.rows() == 0) throw InvalidArgument("incremental GP needs at least one test input");
  if (X_star_.cols() != spec_.dim()) throw InvalidArgument("test inputs have the wrong width");
  if (outputs < 1) throw InvalidArgument("need at least one output");
  if (!(noise_sd >= 0.0)) throw InvalidArgument("noise_sd must be nonnegative");
  if (refactor_interval < 1) throw InvalidArgument("refactor interval must be >= 1");
  X_.resize(0, spec_.dim());
  Y_.resize(0, outputs);
  K_star_.resize(X_star_.rows(), 0);
  K_inv_.resize(0, 0);
  z_.resize(0, outputs);
  mean_ = Eigen::MatrixXd::Zero(X_star_.rows(), outputs);
  var_ = Eigen::VectorXd::Constant(X_star_.rows(), prior_var_);
  reserve(16);
}

void IncrementalGp::reserve(Eigen::Index capacity) {
  if (capacity <= X_.rows()) return;
  X_.conservativeResize(capacity, Eigen::NoChange);
  Y_.conservativeResize(capacity, Eigen::NoChange);
  K_star_.conservativeResize(Eigen::NoChange, capacity);
}

KernelColumns IncrementalGp::columns_for(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != spec_.dim()) throw InvalidArgument("input has the wrong width");
  if (!x.allFinite()) throw InvalidArgument("input must be finite");
  KernelColumns c;
  const Eigen::MatrixXd row = x.transpose();
  c.k = t_ > 0 ? Eigen::VectorXd(gram(spec_, X(), row)) : Eigen::VectorXd();
  c.kappa = prior_var_ + noise_sd_ * noise_sd_;
  c.k_star = gram(spec_, X_star_, row);
  return c;
}

IncrementalGp::Update IncrementalGp::compute_update(const KernelColumns& cols) const {
  const Eigen::Index t = t_;
  if (cols.k.size() != t || cols.k_star.size() != X_star_.rows()) {
    throw InvalidArgument("kernel columns do not match the state");
  }
  Update up;
  Eigen::VectorXd w(t + 1);
  w.head(t) = -cols.k;
  w[t] = 0.5 * (1.0 - cols.kappa);
  const double nw = w.norm();
  if (nw == 0.0) {
    up.ubar = Eigen::VectorXd::Zero(t + 1);
    up.vbar = Eigen::VectorXd::Zero(t + 1);
    return up;
  }

  // K-bar^-1 = blockdiag(K^-1, 1)
  auto apply_bar = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd y(t + 1);
    y.head(t) = K_inv_ * x.head(t);
    y[t] = x[t];
    return y;
  };

  const double c = std::sqrt(0.5 * nw);
  Eigen::VectorXd u = (c / nw) * w;
  Eigen::VectorXd v = u;
  u[t] += c;
  v[t] -= c;

  up.ubar = apply_bar(u);
  up.du = 1.0 / (1.0 - up.ubar.dot(u));
  up.vbar = apply_bar(v) + up.du * up.ubar * up.ubar.dot(v);
  up.dv = 1.0 / (1.0 + v.dot(up.vbar));

  const Eigen::VectorXd a = K_inv_ * cols.k;
  const double schur = cols.kappa - cols.k.dot(a);
  const double prod = up.du * up.dv;
  const bool degenerate = !std::isfinite(prod) || std::abs(up.du) < 1e-12 ||
                          std::abs(up.dv) < 1e-12 || prod <= 0.0 ||
                          std::abs(1.0 / prod - schur) > 1e-6 * std::abs(schur);
  if (!degenerate) return up;

  if (!(schur > 1e-14 * cols.kappa)) {
    throw NumericalError("numerically singular inclusion (Schur complement " +
                         std::to_string(schur) + ")");
  }
  up.bordered = true;
  up.ubar.resize(t + 1);
  up.ubar.head(t) = a;
  up.ubar[t] = -1.0;
  up.du = 1.0 / schur;
  up.vbar = Eigen::VectorXd::Unit(t + 1, t);
  up.dv = 1.0;
  return up;
}

Speculation IncrementalGp::speculate(const KernelColumns& cols,
                                     const Eigen::Ref<const Eigen::RowVectorXd>& y) const {
  if (y.size() != outputs()) throw InvalidArgument("target has the wrong width");
  const Update up = compute_update(cols);
  const Eigen::Index t = t_;

  Eigen::RowVectorXd uy = up.ubar.head(t).transpose() * Y() + up.ubar[t] * y;
  Eigen::RowVectorXd vy = up.vbar.head(t).transpose() * Y() + up.vbar[t] * y;
  const Eigen::VectorXd su = K_star() * up.ubar.head(t) + up.ubar[t] * cols.k_star;
  const Eigen::VectorXd sv = K_star() * up.vbar.head(t) + up.vbar[t] * cols.k_star;

  Speculation s;
  s.mean = mean_ + cols.k_star * y + up.du * su * uy - up.dv * sv * vy;
  s.var = var_ - cols.k_star.cwiseAbs2() - up.du * su.cwiseAbs2() + up.dv * sv.cwiseAbs2();
  s.z.resize(t + 1, outputs());
  s.z.topRows(t) = z_;
  s.z.row(t) = y;
  s.z += up.du * up.ubar * uy - up.dv * up.vbar * vy;
  s.log_det = log_det_ - (up.du == 0.0 ? 0.0 : std::log(up.du * up.dv));
  return s;
}

void IncrementalGp::include(const Eigen::Ref<const Eigen::VectorXd>& x,
                            const Eigen::Ref<const Eigen::RowVectorXd>& y) {
  include(x, y, columns_for(x));
}

void IncrementalGp::include(const Eigen::Ref<const Eigen::VectorXd>& x,
                            const Eigen::Ref<const Eigen::RowVectorXd>& y,
                            const KernelColumns& cols) {
  if (x.size() != spec_.dim()) throw InvalidArgument("input has the wrong width");
  if (!x.allFinite() || !y.allFinite()) throw InvalidArgument("inclusion must be finite");
  if (y.size() != outputs()) throw InvalidArgument("target has the wrong width");

  const Update up = compute_update(cols);
  const Eigen::Index t = t_;
  const Eigen::Index ns = X_star_.rows();
  const Eigen::Index m = outputs();

  if (t + 1 > X_.rows()) reserve(2 * X_.rows());
  X_.row(t) = x.transpose();
  Y_.row(t) = y;
  K_star_.col(t) = cols.k_star;

  const Eigen::RowVectorXd uy = up.ubar.transpose() * Y_.topRows(t + 1);
  const Eigen::RowVectorXd vy = up.vbar.transpose() * Y_.topRows(t + 1);
  const Eigen::VectorXd su = K_star_.leftCols(t + 1) * up.ubar;
  const Eigen::VectorXd sv = K_star_.leftCols(t + 1) * up.vbar;

  K_inv_.conservativeResize(t + 1, t + 1);
  K_inv_.row(t).setZero();
  K_inv_.col(t).setZero();
  K_inv_(t, t) = 1.0;
  K_inv_.noalias() += up.du * up.ubar * up.ubar.transpose();
  K_inv_.noalias() -= up.dv * up.vbar * up.vbar.transpose();
  if (up.du != 0.0) log_det_ -= std::log(up.du * up.dv);

  z_.conservativeResize(t + 1, Eigen::NoChange);
  z_.row(t) = y;
  z_.noalias() += up.du * up.ubar * uy;
  z_.noalias() -= up.dv * up.vbar * vy;

  mean_.noalias() += cols.k_star * y;
  mean_.noalias() += up.du * su * uy;
  mean_.noalias() -= up.dv * sv * vy;
  var_ -= cols.k_star.cwiseAbs2();
  var_ -= up.du * su.cwiseAbs2();
  var_ += up.dv * sv.cwiseAbs2();

  t_ = t + 1;
  ++counters_.inclusions;
  if (up.bordered) ++counters_.bordered_fallbacks;
  const Eigen::Index n1 = t + 1;
  counters_.update_ops += as_ops(4 * n1 * n1 + 2 * ns * n1 + 2 * n1 * m + 3 * ns * m);

  if (counters_.inclusions % static_cast<std::uint64_t>(refactor_interval_) == 0) refactor();
}

void IncrementalGp::refactor() {
  const Eigen::Index t = t_;
  const Eigen::Index ns = X_star_.rows();
  ++counters_.refactorizations;
  if (t == 0) return;
  Eigen::MatrixXd K = gram(spec_, X());
  K.diagonal().array() += noise_sd_ * noise_sd_;
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) {
    spdlog::warn("refactorization at t={} failed; keeping the updated inverse", t);
    return;
  }
  K_inv_ = llt.solve(Eigen::MatrixXd::Identity(t, t));
  log_det_ = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  z_ = K_inv_ * Y();
  mean_ = K_star() * z_;
  const Eigen::MatrixXd KS = K_star() * K_inv_;
  var_ = (prior_var_ - KS.cwiseProduct(K_star()).rowwise().sum().array()).matrix();
  counters_.refactor_ops += as_ops(t * t * t + ns * t * t + ns * t * outputs());
}

}  // namespace hrtfgp
