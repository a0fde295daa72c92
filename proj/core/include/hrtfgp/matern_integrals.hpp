#pragma once

#include <Eigen/Core>

#include "hrtfgp/kernel.hpp"

namespace hrtfgp {

// Integral over the real line of K_nu(|x_a - x|, l_a) K_nu(|x_b - x|, l_b).
//
// nu = 1/2 uses (l_a e^{-d/l_a} - l_b e^{-d/l_b}) 2 l_a l_b / (l_a^2 - l_b^2),
// whose denominator is a difference of squares. Equal length scales use the
// analytic limits, and nearly equal ones (relative gap below 1e-3) integrate
// the three exponential-polynomial pieces exactly to avoid cancellation.
double matern_product_integral(MaternNu nu, double x_a, double x_b, double l_a, double l_b);

// Q_ij = prod_k F(X_a(i, k), X_b(j, k), l_k, l_k) divided by the common
// diagonal value prod_k F(0, 0, l_k, l_k), evaluated in log space so that
// wide inputs neither overflow nor underflow. Both mean functions share one
// kernel, so this rescaling leaves normalized L2 distances unchanged.
Eigen::MatrixXd normalized_product_integrals(const KernelSpec& spec, const Eigen::MatrixXd& A,
                                             const Eigen::MatrixXd& B);

}  // namespace hrtfgp
