#pragma once

#include <Eigen/Core>

#include "hrtfgp/dataset.hpp"

namespace hrtfgp {

inline constexpr Eigen::Index kDefaultPcaComponents = 16;

// Log-magnitude pairs [log|H_L|, log|H_R|] of every direction, floored at
// `eps` (1e-6 of the set's peak magnitude when eps <= 0).
Eigen::MatrixXd log_magnitude_pairs(const HrtfSet& set, double eps = 0.0);

// Principal components of mean-centred log-magnitude rows.
struct PcaCodec {
  Eigen::VectorXd mean;      // 2D
  Eigen::MatrixXd basis;     // 2D x q, orthonormal columns
  Eigen::VectorXd variance;  // per retained component, descending

  Eigen::Index q() const { return basis.cols(); }
  Eigen::Index width() const { return basis.rows(); }

  // Each column's largest-magnitude entry is made positive so the basis is
  // a deterministic function of the data.
  static PcaCodec fit(const Eigen::MatrixXd& log_rows, Eigen::Index q = kDefaultPcaComponents);

  Eigen::MatrixXd encode(const Eigen::MatrixXd& log_rows) const;  // N x q
  Eigen::MatrixXd decode_log(const Eigen::MatrixXd& pcs) const;   // N x 2D
  // Decoded log-magnitudes exponentiated into MP feature rows.
  Eigen::MatrixXd decode(const Eigen::MatrixXd& pcs) const;

  void validate() const;
};

}  // namespace hrtfgp
