#include <algorithm>

#include <Eigen/Eigenvalues>

#include "hrtfgp/error.hpp"
#include "hrtfgp/gp.hpp"

namespace hrtfgp {

KpcaResult kernel_pca(const Eigen::MatrixXd& K) {
  if (K.rows() != K.cols() || K.rows() == 0) throw InvalidArgument("Gram matrix must be square");
  const double scale = K.cwiseAbs().maxCoeff();
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (scale > 0.0 ? scale : 1.0)) {
    throw InvalidArgument("Gram matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
  if (eig.info() != Eigen::Success) throw NumericalError("eigen-decomposition failed");

  const Eigen::Index n = K.rows();
  KpcaResult out;
  out.eigenvalues = eig.eigenvalues().reverse().cwiseMax(0.0);
  out.eigenvectors = eig.eigenvectors().rowwise().reverse();
  out.cumulative_energy.resize(n);
  const double total = out.eigenvalues.sum();
  double running = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    running += out.eigenvalues[i];
    // Rounding can carry the partial sums just past the total.
    out.cumulative_energy[i] = total > 0.0 ? std::min(running / total, 1.0) : 1.0;
  }
  out.cumulative_energy[n - 1] = 1.0;
  return out;
}

Eigen::Index components_for_energy(const KpcaResult& result, double fraction) {
  for (Eigen::Index i = 0; i < result.cumulative_energy.size(); ++i) {
    if (result.cumulative_energy[i] >= fraction) return i + 1;
  }
  return result.cumulative_energy.size();
}

}  // namespace hrtfgp
