#include "hrtfgp/kernel.hpp"

#include <cmath>
#include <string>

#include "hrtfgp/error.hpp"

namespace hrtfgp {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

void check_dims(const KernelSpec& spec, Eigen::Index cols) {
  if (cols != spec.dim()) {
    throw InvalidArgument("input has " + std::to_string(cols) + " columns, kernel expects " +
                          std::to_string(spec.dim()));
  }
}

// Value of the kernel between two rows that were already divided by l
// (and, for nu = 3/2, multiplied by sqrt(3)).
template <typename A, typename B>
double scaled_pair(MaternNu nu, const A& a, const B& b) {
  const Eigen::Index d = a.size();
  switch (nu) {
    case MaternNu::half: {
      double s = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) s += std::abs(a[k] - b[k]);
      return std::exp(-s);
    }
    case MaternNu::three_half: {
      double s = 0.0;
      double p = 1.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double t = std::abs(a[k] - b[k]);
        s += t;
        p *= 1.0 + t;
      }
      return p * std::exp(-s);
    }
    case MaternNu::inf: {
      double s = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double t = a[k] - b[k];
        s += t * t;
      }
      return std::exp(-0.5 * s);
    }
  }
  return 0.0;
}

Eigen::MatrixXd scaled_inputs(const KernelSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& A) {
  Eigen::RowVectorXd factor = spec.length_scales.cwiseInverse().transpose();
  if (spec.nu == MaternNu::three_half) factor *= kSqrt3;
  // Column-major transpose so that each input is a contiguous column.
  return (A.array().rowwise() * factor.array()).matrix().transpose();
}

}  // namespace

std::string_view to_string(MaternNu nu) {
  switch (nu) {
    case MaternNu::half: return "half";
    case MaternNu::three_half: return "three_half";
    case MaternNu::inf: return "inf";
  }
  return "?";
}

MaternNu parse_matern_nu(std::string_view name) {
  if (name == "half" || name == "m12") return MaternNu::half;
  if (name == "three_half" || name == "m32") return MaternNu::three_half;
  if (name == "inf" || name == "rbf") return MaternNu::inf;
  throw InvalidArgument("unknown kernel '" + std::string(name) + "'");
}

void KernelSpec::validate() const {
  if (length_scales.size() == 0) throw InvalidArgument("kernel needs at least one length scale");
  if (!(length_scales.array() > 0.0).all() || !length_scales.allFinite()) {
    throw InvalidArgument("length scales must be positive and finite");
  }
  if (!(signal_scale > 0.0) || !std::isfinite(signal_scale)) {
    throw InvalidArgument("signal scale must be positive and finite");
  }
}

double matern_factor(MaternNu nu, double r, double length_scale) {
  const double a = std::abs(r) / length_scale;
  switch (nu) {
    case MaternNu::half: return std::exp(-a);
    case MaternNu::three_half: return (1.0 + kSqrt3 * a) * std::exp(-kSqrt3 * a);
    case MaternNu::inf: return std::exp(-0.5 * a * a);
  }
  return 0.0;
}

double matern_log_length_derivative(MaternNu nu, double r, double length_scale) {
  const double a = std::abs(r) / length_scale;
  switch (nu) {
    case MaternNu::half: return a;
    case MaternNu::three_half: {
      const double s = kSqrt3 * a;
      return s * s / (1.0 + s);
    }
    case MaternNu::inf: return a * a;
  }
  return 0.0;
}

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& x_prime) {
  if (x.size() != x_prime.size()) throw InvalidArgument("input dimensions differ");
  check_dims(spec, x.size());
  double value = spec.signal_scale * spec.signal_scale;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    value *= matern_factor(spec.nu, x[k] - x_prime[k], spec.length_scales[k]);
  }
  return value;
}

Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& A,
                     const Eigen::Ref<const Eigen::MatrixXd>& B) {
  check_dims(spec, A.cols());
  check_dims(spec, B.cols());
  const Eigen::MatrixXd sa = scaled_inputs(spec, A);
  const Eigen::MatrixXd sb = scaled_inputs(spec, B);
  const double amp = spec.signal_scale * spec.signal_scale;
  Eigen::MatrixXd K(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      K(i, j) = amp * scaled_pair(spec.nu, sa.col(i), sb.col(j));
    }
  }
  return K;
}

Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& A) {
  check_dims(spec, A.cols());
  const Eigen::MatrixXd sa = scaled_inputs(spec, A);
  const double amp = spec.signal_scale * spec.signal_scale;
  const Eigen::Index n = A.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    K(j, j) = amp;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      K(i, j) = amp * scaled_pair(spec.nu, sa.col(i), sa.col(j));
      K(j, i) = K(i, j);
    }
  }
  return K;
}

}  // namespace hrtfgp
