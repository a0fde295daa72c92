#pragma once

#include <string_view>

#include <Eigen/Core>

namespace hrtfgp {

// Smoothness of the Matern class.
enum class MaternNu { half, three_half, inf };

std::string_view to_string(MaternNu nu);
// Accepts "half"/"m12", "three_half"/"m32" and "inf"/"rbf".
MaternNu parse_matern_nu(std::string_view name);
inline constexpr MaternNu kAllNus[] = {MaternNu::half, MaternNu::three_half, MaternNu::inf};

// Product of independent one-dimensional Matern covariances,
//   k(x, x') = alpha^2 prod_k K_nu(|x_k - x'_k|, l_k).
struct KernelSpec {
  MaternNu nu = MaternNu::inf;
  Eigen::VectorXd length_scales;
  double signal_scale = 1.0;

  Eigen::Index dim() const { return length_scales.size(); }
  void validate() const;
};

// One-dimensional factor K_nu(r, l) with unit amplitude.
double matern_factor(MaternNu nu, double r, double length_scale);

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& x_prime);

// Cross covariance between the rows of A and the rows of B.
Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& A,
                     const Eigen::Ref<const Eigen::MatrixXd>& B);
// Symmetric covariance of the rows of A (noise free).
Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& A);

// d K_nu(r, l) / d log l divided by K_nu(r, l).
double matern_log_length_derivative(MaternNu nu, double r, double length_scale);

}  // namespace hrtfgp
