#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "hrtfgp/error.hpp"
#include "hrtfgp/gp.hpp"

namespace hrtfgp {

namespace {

Eigen::VectorXd pack(const Hyperparams& h) {
  const Eigen::Index d = h.spec.dim();
  Eigen::VectorXd theta(d + 2);
  theta.head(d) = h.spec.length_scales.array().log().matrix();
  theta[d] = std::log(h.spec.signal_scale);
  theta[d + 1] = h.noise_sd > 0.0 ? std::log(h.noise_sd) : 0.0;
  return theta;
}

Hyperparams unpack(const Eigen::VectorXd& theta, const Hyperparams& like, bool train_noise) {
  const Eigen::Index d = like.spec.dim();
  Hyperparams h = like;
  h.spec.length_scales = theta.head(d).array().exp().matrix();
  h.spec.signal_scale = std::exp(theta[d]);
  if (train_noise) h.noise_sd = std::exp(theta[d + 1]);
  return h;
}

struct Evaluation {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad;
};

Evaluation evaluate(const Hyperparams& h, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  Evaluation e;
  try {
    const LmhGrad g = lmh_and_grad(fit_posterior(h.spec, h.noise_sd, X, Y));
    if (std::isfinite(g.value) && g.grad.allFinite()) {
      e.value = g.value;
      e.grad = g.grad;
    }
  } catch (const Error&) {
    // Unfactorizable or invalid parameters count as -inf.
  }
  return e;
}

}  // namespace

TrainResult train_hyperparams(const Hyperparams& initial, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& Y, const TrainOptions& options) {
  if (options.iterations < 1) throw InvalidArgument("iterations must be >= 1");
  if (options.train_noise && !(initial.noise_sd > 0.0)) {
    throw InvalidArgument("a trainable noise level must start positive");
  }
  initial.spec.validate();

  const Eigen::Index d = initial.spec.dim();
  Eigen::VectorXd theta = pack(initial);
  Evaluation current = evaluate(initial, X, Y);
  if (!std::isfinite(current.value)) {
    throw NumericalError("log marginal likelihood is not finite at the initial hyperparameters");
  }

  TrainResult result;
  result.params = initial;
  result.lmh = current.value;
  result.trace.push_back(current.value);

  for (int it = 0; it < options.iterations; ++it) {
    Eigen::VectorXd g = current.grad;
    if (!options.train_noise) g[d + 1] = 0.0;
    const double gmax = g.cwiseAbs().maxCoeff();
    if (!(gmax > 0.0) || options.step == 0.0) break;

    double step = options.step;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h, step *= 0.5) {
      const Eigen::VectorXd trial = theta + (step / gmax) * g;
      const Hyperparams params = unpack(trial, result.params, options.train_noise);
      Evaluation next = evaluate(params, X, Y);
      if (next.value > current.value) {
        theta = trial;
        current = std::move(next);
        result.params = params;
        result.lmh = current.value;
        result.trace.push_back(current.value);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      spdlog::debug("training stalled after {} iterations", it);
      break;
    }
  }
  return result;
}

}  // namespace hrtfgp
