#include "hrtfgp/baselines.hpp"

#include <limits>

#include <Eigen/Cholesky>

#include "hrtfgp/error.hpp"

namespace hrtfgp {

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd A(X.rows(), X.cols() + 1);
  A.leftCols(X.cols()) = X;
  A.col(X.cols()).setOnes();
  return A;
}

}  // namespace

OlsRegressor OlsRegressor::fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  if (X.rows() != Y.rows() || X.rows() == 0) throw InvalidArgument("bad OLS training shapes");
  const Eigen::MatrixXd A = with_intercept(X);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A.transpose() * A);
  if (ldlt.info() != Eigen::Success) throw NumericalError("normal equations are singular");
  OlsRegressor r;
  r.W_ = ldlt.solve(A.transpose() * Y);
  return r;
}

Eigen::MatrixXd OlsRegressor::predict(const Eigen::MatrixXd& Xs) const {
  if (Xs.cols() + 1 != W_.rows()) throw InvalidArgument("test inputs have the wrong width");
  return with_intercept(Xs) * W_;
}

NearestNeighbor NearestNeighbor::fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  if (X.rows() != Y.rows() || X.rows() == 0) throw InvalidArgument("bad NN training shapes");
  NearestNeighbor nn;
  nn.X_ = X;
  nn.Y_ = Y;
  return nn;
}

Eigen::MatrixXd NearestNeighbor::predict(const Eigen::MatrixXd& Xs) const {
  if (Xs.cols() != X_.cols()) throw InvalidArgument("test inputs have the wrong width");
  Eigen::MatrixXd out(Xs.rows(), Y_.cols());
  for (Eigen::Index i = 0; i < Xs.rows(); ++i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < X_.rows(); ++j) {
      const double d = (X_.row(j) - Xs.row(i)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    out.row(i) = Y_.row(best);
  }
  return out;
}

}  // namespace hrtfgp
