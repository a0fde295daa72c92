#pragma once

#include <Eigen/Core>

namespace hrtfgp {

// Ordinary least squares with an intercept, solved from the normal equations.
class OlsRegressor {
 public:
  static OlsRegressor fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);
  Eigen::MatrixXd predict(const Eigen::MatrixXd& Xs) const;
  const Eigen::MatrixXd& coefficients() const { return W_; }  // (D'+1) x M, intercept last

 private:
  Eigen::MatrixXd W_;
};

// 1-nearest neighbour under Euclidean feature distance. Ties go to the lower row.
class NearestNeighbor {
 public:
  static NearestNeighbor fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);
  Eigen::MatrixXd predict(const Eigen::MatrixXd& Xs) const;

 private:
  Eigen::MatrixXd X_;
  Eigen::MatrixXd Y_;
};

}  // namespace hrtfgp
