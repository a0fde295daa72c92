#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hrtfgp/gp.hpp"
#include "hrtfgp/incremental_gp.hpp"

namespace hrtfgp {

enum class RiskKind { prediction_error, generalized_error, normalized_error };

std::string_view to_string(RiskKind kind);
// Accepts "pred"/"prediction_error", "gen"/"generalized_error", "norm"/"normalized_error".
RiskKind parse_risk_kind(std::string_view name);

// Everything the risk functionals need about the full data set, prepared once.
struct RiskContext {
  RiskKind kind = RiskKind::prediction_error;
  KernelSpec spec;
  double noise_sd = 0.0;
  Eigen::MatrixXd X;            // N x D' candidates
  Eigen::MatrixXd Y;            // N x M
  Eigen::MatrixXd eval_points;  // X*, the test inputs of the incremental state
  Eigen::MatrixXd gram;         // K(X, X), noise free
  Eigen::MatrixXd gram_star;    // K(X*, X)
  // generalized_error: full-data posterior mean at X*.
  Eigen::MatrixXd full_mean;
  // normalized_error: diagonal-normalized product-integral matrix over X,
  // its product with the full-data K^-1 Y, and the full mean's squared norm per output.
  Eigen::MatrixXd Q;
  Eigen::MatrixXd Qz;
  Eigen::RowVectorXd full_norm2;
  bool eval_is_X = true;
};

// `eval_points` only matters for generalized_error and defaults to X.
RiskContext make_risk_context(RiskKind kind, const KernelSpec& spec, double noise_sd,
                              const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                              const std::optional<Eigen::MatrixXd>& eval_points = std::nullopt);

// Incremental GP over a subset of the context's rows.
struct SelectionState {
  IncrementalGp gp;
  std::vector<Eigen::Index> included;
  std::vector<bool> is_included;

  explicit SelectionState(const RiskContext& ctx);
  KernelColumns columns(const RiskContext& ctx, Eigen::Index candidate) const;
  void include(const RiskContext& ctx, Eigen::Index candidate);
};

// Risk of the state after a speculative inclusion of `candidate`.
double risk_eval(const RiskContext& ctx, const SelectionState& state, Eigen::Index candidate);

struct SelectionResult {
  std::vector<Eigen::Index> order;
  std::vector<double> risk;  // risk of each selected prefix
  // Mean angular error of the prefix posterior over X (empty when X* != X or M != 3).
  std::vector<double> angular_error_deg;
};

// Greedy forward selection: T rounds, each appending the excluded candidate
// with the smallest risk. Ties go to the lowest index.
SelectionResult greedy_forward_select(const RiskContext& ctx, Eigen::Index T);
SelectionResult greedy_forward_select(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                      Eigen::Index T, RiskKind kind, const KernelSpec& spec,
                                      double noise_sd);

}  // namespace hrtfgp
