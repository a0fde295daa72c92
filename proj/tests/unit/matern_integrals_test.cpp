#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "hrtfgp/error.hpp"
#include "hrtfgp/matern_integrals.hpp"
#include "support/oracles.hpp"

namespace hrtfgp {
namespace {

using testing::quadrature_product_integral;
using testing::relative_error;

TEST(MaternIntegrals, GaussianSelfConvolution) {
  EXPECT_NEAR(matern_product_integral(MaternNu::inf, 0.3, 0.3, 1.0, 1.0), std::sqrt(std::numbers::pi),
              1e-15);
}

TEST(MaternIntegrals, ExponentialPairAtCoincidentCentres) {
  // The difference-of-squares denominator gives 2 l_a l_b / (l_a + l_b).
  EXPECT_NEAR(matern_product_integral(MaternNu::half, 0.0, 0.0, 2.0, 1.0), 4.0 / 3.0, 1e-15);
  EXPECT_NEAR(quadrature_product_integral(MaternNu::half, 0.0, 0.0, 2.0, 1.0), 4.0 / 3.0, 1e-12);
}

TEST(MaternIntegrals, ThreeHalfEqualScalesFixture) {
  const double expected = 1.2534217510635883;
  EXPECT_NEAR(quadrature_product_integral(MaternNu::three_half, 0.0, 0.7, 1.0, 1.0), expected, 1e-12);
  EXPECT_LT(relative_error(matern_product_integral(MaternNu::three_half, 0.0, 0.7, 1.0, 1.0), expected),
            1e-13);
}

TEST(MaternIntegrals, SymmetricAndPositive) {
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> x(-2.0, 2.0);
  std::uniform_real_distribution<double> l(0.2, 3.0);
  for (MaternNu nu : kAllNus) {
    for (int i = 0; i < 50; ++i) {
      const double xa = x(rng), xb = x(rng), la = l(rng), lb = l(rng);
      const double f = matern_product_integral(nu, xa, xb, la, lb);
      EXPECT_GT(f, 0.0);
      EXPECT_NEAR(f, matern_product_integral(nu, xb, xa, lb, la), 1e-14 * f);
    }
  }
}

TEST(MaternIntegrals, AgreesWithQuadratureIncludingNearEqualScales) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> x(-3.0, 3.0);
  std::uniform_real_distribution<double> log_l(-1.5, 1.5);
  std::uniform_real_distribution<double> tiny(-1e-8, 1e-8);
  for (MaternNu nu : kAllNus) {
    for (int i = 0; i < 60; ++i) {
      const double xa = x(rng), xb = x(rng), la = std::exp(log_l(rng));
      double lb = std::exp(log_l(rng));
      if (i % 4 == 0) lb = la * (1.0 + tiny(rng));
      if (i % 4 == 1) lb = la * (1.0 + 1e-4 * tiny(rng) * 1e8);
      if (i % 4 == 2) lb = la;
      const double closed = matern_product_integral(nu, xa, xb, la, lb);
      const double quad = quadrature_product_integral(nu, xa, xb, la, lb);
      EXPECT_LT(relative_error(closed, quad), 1e-6)
          << to_string(nu) << " xa=" << xa << " xb=" << xb << " la=" << la << " lb=" << lb;
    }
  }
}

TEST(MaternIntegrals, RejectsNonPositiveScales) {
  EXPECT_THROW(matern_product_integral(MaternNu::half, 0, 0, 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(matern_product_integral(MaternNu::inf, 0, 0, 1.0, -1.0), InvalidArgument);
}

TEST(MaternIntegrals, NormalizedMatrixIsProductOfRatios) {
  std::mt19937_64 rng(32);
  for (MaternNu nu : kAllNus) {
    KernelSpec spec{nu, Eigen::Vector2d(0.7, 1.9), 2.0};
    const Eigen::MatrixXd A = testing::random_matrix(rng, 5, 2);
    const Eigen::MatrixXd Q = normalized_product_integrals(spec, A, A);
    for (int i = 0; i < 5; ++i) {
      EXPECT_NEAR(Q(i, i), 1.0, 1e-14);
      for (int j = 0; j < 5; ++j) {
        double expected = 1.0;
        for (int k = 0; k < 2; ++k) {
          const double l = spec.length_scales[k];
          expected *= quadrature_product_integral(nu, A(i, k), A(j, k), l, l) /
                      quadrature_product_integral(nu, 0.0, 0.0, l, l);
        }
        EXPECT_NEAR(Q(i, j), expected, 1e-9);
        EXPECT_EQ(Q(i, j), Q(j, i));
      }
    }
  }
}

}  // namespace
}  // namespace hrtfgp
