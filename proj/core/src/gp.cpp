#include "hrtfgp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>

#include "hrtfgp/direction.hpp"
#include "hrtfgp/error.hpp"

namespace hrtfgp {

GpModel fit_posterior(const KernelSpec& spec, double noise_sd, const Eigen::MatrixXd& X,
                      const Eigen::MatrixXd& Y) {
  spec.validate();
  if (X.rows() < 1) throw InvalidArgument("need at least one training input");
  if (X.rows() != Y.rows()) throw InvalidArgument("X and Y row counts differ");
  if (!X.allFinite() || !Y.allFinite()) throw InvalidArgument("training data must be finite");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) {
    throw InvalidArgument("noise_sd must be nonnegative");
  }

  GpModel model;
  model.spec = spec;
  model.noise_sd = noise_sd;
  model.X = X;
  model.Y = Y;

  const double amp = spec.signal_scale * spec.signal_scale;
  Eigen::MatrixXd K = gram(spec, X);
  K.diagonal().array() += noise_sd * noise_sd;

  double jitter = 0.0;
  for (;;) {
    Eigen::MatrixXd Kj = K;
    Kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(Kj);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd L = llt.matrixL();
      const double min_pivot = L.diagonal().minCoeff();
      if (min_pivot * min_pivot >= 1e-12 * amp) {
        model.chol = std::move(L);
        model.jitter = jitter;
        break;
      }
    }
    jitter = jitter == 0.0 ? 1e-10 * amp : jitter * 10.0;
    if (jitter > 1e-4 * amp * (1.0 + 1e-9)) {
      throw NumericalError("covariance is not positive definite even with jitter 1e-4 alpha^2 (N=" +
                           std::to_string(X.rows()) + ")");
    }
  }
  model.log_det = 2.0 * model.chol.diagonal().array().log().sum();
  model.beta = model.chol.triangularView<Eigen::Lower>().solve(Y);
  model.chol.triangularView<Eigen::Lower>().transpose().solveInPlace(model.beta);
  return model;
}

PosteriorSummary predict(const GpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& Xs) {
  if (Xs.cols() != model.X.cols()) throw InvalidArgument("test inputs have the wrong width");
  const Eigen::MatrixXd Ks = gram(model.spec, Xs, model.X);
  PosteriorSummary out;
  out.mean = Ks * model.beta;
  const Eigen::MatrixXd V = model.chol.triangularView<Eigen::Lower>().solve(Ks.transpose());
  const double amp = model.spec.signal_scale * model.spec.signal_scale;
  out.var = (amp - V.colwise().squaredNorm().array()).max(0.0).matrix().transpose();
  return out;
}

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& mean) {
  Eigen::MatrixXd out = mean;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (!(n > 0.0)) throw NumericalError("cannot normalize a zero posterior mean");
    out.row(i) /= n;
  }
  return out;
}

Eigen::VectorXd angular_errors(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != 3 || truth.cols() != 3) {
    throw InvalidArgument("angular errors need matching N x 3 matrices");
  }
  Eigen::VectorXd e(predicted.rows());
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    e[i] = angular_separation(Eigen::Vector3d(predicted.row(i).transpose()),
                              Eigen::Vector3d(truth.row(i).transpose()));
  }
  return e;
}

double mean_angular_error_deg(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth) {
  return rad_to_deg(angular_errors(predicted, truth).mean());
}

double lmh(const GpModel& model) {
  const double n = static_cast<double>(model.size());
  const double m = static_cast<double>(model.outputs());
  const double fit = (model.Y.array() * model.beta.array()).sum();
  return -0.5 * m * model.log_det - 0.5 * fit - 0.5 * m * n * std::log(2.0 * std::numbers::pi);
}

LmhGrad lmh_and_grad(const GpModel& model) {
  const Eigen::Index n = model.size();
  const Eigen::Index d = model.X.cols();
  const double m = static_cast<double>(model.outputs());

  Eigen::MatrixXd Kinv = Eigen::MatrixXd::Identity(n, n);
  model.chol.triangularView<Eigen::Lower>().solveInPlace(Kinv);
  model.chol.triangularView<Eigen::Lower>().transpose().solveInPlace(Kinv);

  // dL/dtheta = 1/2 sum_ij W_ij dK_ij/dtheta
  const Eigen::MatrixXd W = model.beta * model.beta.transpose() - m * Kinv;
  const Eigen::MatrixXd K = gram(model.spec, model.X);
  const Eigen::MatrixXd WK = W.cwiseProduct(K);

  LmhGrad out;
  out.value = lmh(model);
  out.grad = Eigen::VectorXd::Zero(d + 2);

  const Eigen::MatrixXd Xt = model.X.transpose();
  const Eigen::VectorXd& ell = model.spec.length_scales;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double c = WK(i, j);
      if (c == 0.0) continue;
      for (Eigen::Index k = 0; k < d; ++k) {
        acc[k] += c * matern_log_length_derivative(model.spec.nu, Xt(k, i) - Xt(k, j), ell[k]);
      }
    }
  }
  // Each off-diagonal pair appears twice in the full sum, cancelling the 1/2.
  out.grad.head(d) = acc;
  out.grad[d] = WK.sum();
  out.grad[d + 1] = model.noise_sd * model.noise_sd * W.trace();
  return out;
}

Hyperparams initial_hyperparams(MaternNu nu, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  if (X.rows() < 1 || X.rows() != Y.rows()) throw InvalidArgument("bad training shapes");
  Hyperparams h;
  h.spec.nu = nu;
  h.spec.length_scales.resize(X.cols());
  const Eigen::Index n = X.rows();
  // Per-dimension medians alone make the summed distance grow with D, which
  // drives every off-diagonal kernel entry to zero for wide feature vectors.
  const double d = static_cast<double>(X.cols());
  const double widen = nu == MaternNu::half ? d : std::sqrt(d);
  std::vector<double> diffs;
  diffs.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index k = 0; k < X.cols(); ++k) {
    diffs.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = j + 1; i < n; ++i) diffs.push_back(std::abs(X(i, k) - X(j, k)));
    double med = 0.0;
    if (!diffs.empty()) {
      auto mid = diffs.begin() + static_cast<std::ptrdiff_t>(diffs.size() / 2);
      std::nth_element(diffs.begin(), mid, diffs.end());
      med = *mid;
    }
    h.spec.length_scales[k] = (med > 0.0 ? med : 1.0) * widen;
  }
  const double mean = Y.mean();
  const double var = (Y.array() - mean).square().mean();
  h.spec.signal_scale = var > 0.0 ? std::sqrt(var) : 1.0;
  h.noise_sd = 0.1 * h.spec.signal_scale;
  return h;
}

}  // namespace hrtfgp
