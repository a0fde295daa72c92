#include "hrtfgp/matern_integrals.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "hrtfgp/error.hpp"

namespace hrtfgp {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

using Poly = std::array<double, 3>;  // c0 + c1 y + c2 y^2

Poly multiply(double a0, double a1, double b0, double b1) {
  return {a0 * b0, a0 * b1 + a1 * b0, a1 * b1};
}

// int_0^inf poly(y) e^{-s y} dy
double tail(const Poly& c, double s) {
  return c[0] / s + c[1] / (s * s) + 2.0 * c[2] / (s * s * s);
}

// int_0^d poly(y) e^{-c y} dy for c >= 0
double segment(const Poly& poly, double c, double d) {
  std::array<double, 3> I{};
  const double cd = c * d;
  if (cd < 0.5) {
    for (int n = 0; n < 3; ++n) {
      double term = std::pow(d, n + 1);
      double sum = term / (n + 1);
      for (int k = 1; k < 40; ++k) {
        term *= -cd / k;
        const double add = term / (n + k + 1);
        sum += add;
        if (std::abs(add) < 1e-18 * std::abs(sum)) break;
      }
      I[static_cast<std::size_t>(n)] = sum;
    }
  } else {
    const double e = std::exp(-cd);
    I[0] = -std::expm1(-cd) / c;
    I[1] = (I[0] - d * e) / c;
    I[2] = (2.0 * I[1] - d * d * e) / c;
  }
  return poly[0] * I[0] + poly[1] * I[1] + poly[2] * I[2];
}

// Exact piecewise integration with x_a = 0, x_b = d >= 0, kernels
// (1 + la t) e^{-p t} and (1 + lb t) e^{-q t} in t = |x - centre|.
double piecewise(double d, double p, double la, double q, double lb) {
  const double s = p + q;
  const double left = std::exp(-q * d) * tail(multiply(1.0, la, 1.0 + lb * d, lb), s);
  const double right = std::exp(-p * d) * tail(multiply(1.0 + la * d, la, 1.0, lb), s);
  double middle = 0.0;
  if (d > 0.0) {
    if (p >= q) {
      middle = std::exp(-q * d) * segment(multiply(1.0, la, 1.0 + lb * d, -lb), p - q, d);
    } else {
      middle = std::exp(-p * d) * segment(multiply(1.0 + la * d, -la, 1.0, lb), q - p, d);
    }
  }
  return left + middle + right;
}

double f_half(double d, double la, double lb) {
  if (la == lb) return (la + d) * std::exp(-d / la);
  if (std::abs(la - lb) <= 1e-3 * std::max(la, lb)) {
    return piecewise(d, 1.0 / la, 0.0, 1.0 / lb, 0.0);
  }
  return (la * std::exp(-d / la) - lb * std::exp(-d / lb)) * 2.0 * la * lb / (la * la - lb * lb);
}

double f_three_half(double d, double la, double lb) {
  if (la == lb) {
    const double l = la;
    return (3.0 * d * d * d + 6.0 * kSqrt3 * d * d * l + 15.0 * d * l * l + 5.0 * kSqrt3 * l * l * l) *
           std::exp(-kSqrt3 * d / l) / (6.0 * l * l);
  }
  if (std::abs(la - lb) <= 1e-3 * std::max(la, lb)) {
    const double p = kSqrt3 / la;
    const double q = kSqrt3 / lb;
    return piecewise(d, p, p, q, q);
  }
  const double diff = la * la - lb * lb;
  const double alpha = -kSqrt3 * d;
  const double beta = 4.0 * la * lb / diff;
  const double a = la * la * (la - beta * lb - alpha) * std::exp(-kSqrt3 * d / la);
  const double b = lb * lb * (lb + beta * la - alpha) * std::exp(-kSqrt3 * d / lb);
  return (a + b) * 4.0 * la * lb / (kSqrt3 * diff * diff);
}

double f_inf(double d, double la, double lb) {
  const double s2 = la * la + lb * lb;
  return std::exp(-d * d / (2.0 * s2)) * la * lb * std::sqrt(2.0 * std::numbers::pi / s2);
}

double product_integral(MaternNu nu, double d, double la, double lb) {
  switch (nu) {
    case MaternNu::half: return f_half(d, la, lb);
    case MaternNu::three_half: return f_three_half(d, la, lb);
    case MaternNu::inf: return f_inf(d, la, lb);
  }
  return 0.0;
}

}  // namespace

double matern_product_integral(MaternNu nu, double x_a, double x_b, double l_a, double l_b) {
  if (!(l_a > 0.0) || !(l_b > 0.0)) throw InvalidArgument("length scales must be positive");
  if (!std::isfinite(x_a) || !std::isfinite(x_b)) throw InvalidArgument("inputs must be finite");
  return product_integral(nu, std::abs(x_a - x_b), l_a, l_b);
}

Eigen::MatrixXd normalized_product_integrals(const KernelSpec& spec, const Eigen::MatrixXd& A,
                                             const Eigen::MatrixXd& B) {
  spec.validate();
  if (A.cols() != spec.dim() || B.cols() != spec.dim()) {
    throw InvalidArgument("inputs have the wrong width");
  }
  const Eigen::Index d = spec.dim();
  Eigen::VectorXd log_diag(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double l = spec.length_scales[k];
    log_diag[k] = std::log(product_integral(spec.nu, 0.0, l, l));
  }
  const double log_norm = log_diag.sum();
  Eigen::MatrixXd Q(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double l = spec.length_scales[k];
        s += std::log(product_integral(spec.nu, std::abs(A(i, k) - B(j, k)), l, l));
      }
      Q(i, j) = std::exp(s - log_norm);
    }
  }
  return Q;
}

}  // namespace hrtfgp
