#include "hrtfgp/selection.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "hrtfgp/direction.hpp"
#include "hrtfgp/error.hpp"
#include "hrtfgp/matern_integrals.hpp"

namespace hrtfgp {

std::string_view to_string(RiskKind kind) {
  switch (kind) {
    case RiskKind::prediction_error: return "prediction_error";
    case RiskKind::generalized_error: return "generalized_error";
    case RiskKind::normalized_error: return "normalized_error";
  }
  return "?";
}

RiskKind parse_risk_kind(std::string_view name) {
  if (name == "pred" || name == "prediction_error") return RiskKind::prediction_error;
  if (name == "gen" || name == "generalized_error") return RiskKind::generalized_error;
  if (name == "norm" || name == "normalized_error") return RiskKind::normalized_error;
  throw InvalidArgument("unknown risk '" + std::string(name) + "'");
}

RiskContext make_risk_context(RiskKind kind, const KernelSpec& spec, double noise_sd,
                              const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                              const std::optional<Eigen::MatrixXd>& eval_points) {
  if (X.rows() == 0 || X.rows() != Y.rows()) throw InvalidArgument("bad selection data shapes");
  RiskContext ctx;
  ctx.kind = kind;
  ctx.spec = spec;
  ctx.noise_sd = noise_sd;
  ctx.X = X;
  ctx.Y = Y;
  ctx.gram = gram(spec, X);
  ctx.eval_is_X = !(kind == RiskKind::generalized_error && eval_points.has_value());
  ctx.eval_points = ctx.eval_is_X ? X : *eval_points;
  ctx.gram_star = ctx.eval_is_X ? ctx.gram : gram(spec, ctx.eval_points, X);

  if (kind == RiskKind::generalized_error) {
    ctx.full_mean = predict(fit_posterior(spec, noise_sd, X, Y), ctx.eval_points).mean;
  } else if (kind == RiskKind::normalized_error) {
    const GpModel full = fit_posterior(spec, noise_sd, X, Y);
    ctx.Q = normalized_product_integrals(spec, X, X);
    ctx.Qz = ctx.Q * full.beta;
    ctx.full_norm2 = (full.beta.array() * ctx.Qz.array()).colwise().sum();
    if ((ctx.full_norm2.array() <= 0.0).any()) {
      throw NumericalError("full-data mean function has zero norm");
    }
  }
  return ctx;
}

SelectionState::SelectionState(const RiskContext& ctx)
    : gp(ctx.spec, ctx.noise_sd, ctx.eval_points, ctx.Y.cols()),
      is_included(static_cast<std::size_t>(ctx.X.rows()), false) {}

KernelColumns SelectionState::columns(const RiskContext& ctx, Eigen::Index candidate) const {
  KernelColumns c;
  c.k.resize(static_cast<Eigen::Index>(included.size()));
  for (std::size_t i = 0; i < included.size(); ++i) {
    c.k[static_cast<Eigen::Index>(i)] = ctx.gram(included[i], candidate);
  }
  c.kappa = ctx.gram(candidate, candidate) + ctx.noise_sd * ctx.noise_sd;
  c.k_star = ctx.gram_star.col(candidate);
  return c;
}

void SelectionState::include(const RiskContext& ctx, Eigen::Index candidate) {
  if (is_included[static_cast<std::size_t>(candidate)]) {
    throw InvalidArgument("candidate already included");
  }
  gp.include(ctx.X.row(candidate).transpose(), ctx.Y.row(candidate), columns(ctx, candidate));
  included.push_back(candidate);
  is_included[static_cast<std::size_t>(candidate)] = true;
}

double risk_eval(const RiskContext& ctx, const SelectionState& state, Eigen::Index candidate) {
  if (candidate < 0 || candidate >= ctx.X.rows()) throw InvalidArgument("candidate out of range");
  if (state.is_included[static_cast<std::size_t>(candidate)]) {
    throw InvalidArgument("candidate already included");
  }
  const Speculation s = state.gp.speculate(state.columns(ctx, candidate), ctx.Y.row(candidate));
  switch (ctx.kind) {
    case RiskKind::prediction_error:
      return (s.mean - ctx.Y).squaredNorm();
    case RiskKind::generalized_error:
      return (s.mean - ctx.full_mean).squaredNorm();
    case RiskKind::normalized_error: {
      const auto t = static_cast<Eigen::Index>(state.included.size());
      std::vector<Eigen::Index> rows = state.included;
      rows.push_back(candidate);
      Eigen::MatrixXd Qaa(t + 1, t + 1);
      Eigen::MatrixXd Qab(t + 1, ctx.Qz.cols());
      for (Eigen::Index i = 0; i <= t; ++i) {
        Qab.row(i) = ctx.Qz.row(rows[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j <= t; ++j) {
          Qaa(i, j) = ctx.Q(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(j)]);
        }
      }
      double risk = 0.0;
      for (Eigen::Index m = 0; m < s.z.cols(); ++m) {
        const double na = s.z.col(m).dot(Qaa * s.z.col(m));
        if (!(na > 0.0)) throw NumericalError("subset mean function has zero norm");
        const double cross = s.z.col(m).dot(Qab.col(m));
        risk += 2.0 - 2.0 * cross / std::sqrt(na * ctx.full_norm2[m]);
      }
      return risk;
    }
  }
  return 0.0;
}

SelectionResult greedy_forward_select(const RiskContext& ctx, Eigen::Index T) {
  const Eigen::Index n = ctx.X.rows();
  if (T < 1 || T > n) throw InvalidArgument("subset size must lie in [1, N]");
  SelectionState state(ctx);
  SelectionResult out;
  const bool track_angles = ctx.eval_is_X && ctx.Y.cols() == 3;
  for (Eigen::Index it = 0; it < T; ++it) {
    Eigen::Index best = -1;
    double best_risk = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < n; ++c) {
      if (state.is_included[static_cast<std::size_t>(c)]) continue;
      const double r = risk_eval(ctx, state, c);
      if (r < best_risk || best < 0) {
        best_risk = r;
        best = c;
      }
    }
    state.include(ctx, best);
    out.order.push_back(best);
    out.risk.push_back(best_risk);
    if (track_angles) {
      double err = 0.0;
      bool ok = true;
      for (Eigen::Index i = 0; i < n && ok; ++i) {
        const Eigen::Vector3d p = state.gp.mean().row(i).transpose();
        if (!(p.norm() > 0.0)) {
          ok = false;
          break;
        }
        err += angular_separation(p, Eigen::Vector3d(ctx.Y.row(i).transpose()));
      }
      out.angular_error_deg.push_back(ok ? rad_to_deg(err / static_cast<double>(n))
                                         : std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

SelectionResult greedy_forward_select(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                      Eigen::Index T, RiskKind kind, const KernelSpec& spec,
                                      double noise_sd) {
  return greedy_forward_select(make_risk_context(kind, spec, noise_sd, X, Y), T);
}

}  // namespace hrtfgp
