#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "hrtfgp/dataset.hpp"
#include "hrtfgp/error.hpp"
#include "hrtfgp/mog.hpp"
#include "hrtfgp/pca_codec.hpp"
#include "support/oracles.hpp"

namespace hrtfgp {
namespace {

using testing::random_matrix;

Eigen::MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index d, double floor) {
  const Eigen::MatrixXd A = random_matrix(rng, d, d);
  return A * A.transpose() + floor * Eigen::MatrixXd::Identity(d, d);
}

Eigen::MatrixXd gaussian_rows(std::mt19937_64& rng, Eigen::Index n, const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& cov) {
  std::normal_distribution<double> normal;
  const Eigen::MatrixXd L = cov.llt().matrixL();
  Eigen::MatrixXd out(n, mean.size());
  Eigen::VectorXd e(mean.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < e.size(); ++j) e[j] = normal(rng);
    out.row(i) = (mean + L * e).transpose();
  }
  return out;
}

MogModel hand_built(std::mt19937_64& rng, Eigen::Index q, int m) {
  MogModel model;
  model.q = q;
  model.weights = (random_matrix(rng, m, 1, 0.2, 1.0)).col(0);
  model.weights /= model.weights.sum();
  for (int k = 0; k < m; ++k) {
    model.means.push_back(random_matrix(rng, q + 3, 1, -2, 2).col(0));
    model.covariances.push_back(random_spd(rng, q + 3, 0.2));
  }
  return model;
}

TEST(Pca, FullBasisReconstructsExactly) {
  std::mt19937_64 rng(70);
  const Eigen::MatrixXd rows = random_matrix(rng, 40, 12);
  const PcaCodec codec = PcaCodec::fit(rows, 12);
  EXPECT_LE((codec.decode_log(codec.encode(rows)) - rows).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((codec.basis.transpose() * codec.basis - Eigen::MatrixXd::Identity(12, 12))
                .cwiseAbs()
                .maxCoeff(),
            1e-8);
}

TEST(Pca, MeanRowEncodesToZero) {
  std::mt19937_64 rng(71);
  const Eigen::MatrixXd rows = random_matrix(rng, 30, 8);
  const PcaCodec codec = PcaCodec::fit(rows, 4);
  EXPECT_LE(codec.encode(codec.mean.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Pca, ReconstructionErrorShrinksWithQ) {
  SphereModelParams p;
  const HrtfSet set = synth_sphere_hrtf(equiangular_grid(12, 7), p, 32, kDefaultSampleRate);
  const Eigen::MatrixXd rows = log_magnitude_pairs(set);
  double previous = std::numeric_limits<double>::infinity();
  for (Eigen::Index q = 1; q <= 40; ++q) {
    const PcaCodec codec = PcaCodec::fit(rows, q);
    const double err = (codec.decode_log(codec.encode(rows)) - rows).squaredNorm();
    EXPECT_LE(err, previous * (1.0 + 1e-12) + 1e-18) << "q " << q;
    previous = err;
  }
}

TEST(Pca, DecodeExponentiates) {
  std::mt19937_64 rng(72);
  const Eigen::MatrixXd rows = random_matrix(rng, 20, 6);
  const PcaCodec codec = PcaCodec::fit(rows, 3);
  const Eigen::MatrixXd pcs = random_matrix(rng, 5, 3);
  EXPECT_LE((codec.decode(pcs) - codec.decode_log(pcs).array().exp().matrix()).norm(), 1e-14);
}

TEST(Pca, RejectsBadComponentCounts) {
  const Eigen::MatrixXd rows = Eigen::MatrixXd::Random(5, 4);
  EXPECT_THROW(PcaCodec::fit(rows, 0), InvalidArgument);
  EXPECT_THROW(PcaCodec::fit(rows, 5), InvalidArgument);
}

TEST(Pca, DefaultsToSixteenComponents) {
  EXPECT_EQ(kDefaultPcaComponents, 16);
  EXPECT_EQ(kDefaultMogComponents, 64);
  EXPECT_EQ(MogFitOptions{}.components, 64);
}

TEST(Mog, SingleComponentIsSampleMoments) {
  std::mt19937_64 rng(73);
  const Eigen::MatrixXd Z = random_matrix(rng, 300, 5);
  MogFitOptions opt;
  opt.components = 1;
  const MogFitResult r = fit_mog(Z, 2, opt);
  const Eigen::VectorXd mean = Z.colwise().mean().transpose();
  const Eigen::MatrixXd c = Z.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov = c.transpose() * c / 300.0;
  const Eigen::MatrixXd expected = cov + 1e-6 * cov.trace() / 5.0 * Eigen::MatrixXd::Identity(5, 5);
  EXPECT_LE((r.model.means[0] - mean).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((r.model.covariances[0] - expected).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_DOUBLE_EQ(r.model.weights[0], 1.0);
  EXPECT_TRUE(r.converged);
}

TEST(Mog, RecoversTwoSeparatedClusters) {
  std::mt19937_64 rng(74);
  Eigen::VectorXd m1(4), m2(4);
  m1 << -3, 0, 1, 0;
  m2 << 3, 1, -1, 0.5;
  const Eigen::MatrixXd cov = 0.25 * Eigen::MatrixXd::Identity(4, 4);
  Eigen::MatrixXd Z(2000, 4);
  Z.topRows(600) = gaussian_rows(rng, 600, m1, cov);
  Z.bottomRows(1400) = gaussian_rows(rng, 1400, m2, cov);
  MogFitOptions opt;
  opt.components = 2;
  opt.seed = 3;
  const MogModel m = fit_mog(Z, 1, opt).model;
  const int a = m.means[0][0] < m.means[1][0] ? 0 : 1;
  EXPECT_LE((m.means[a] - m1).cwiseAbs().maxCoeff(), 0.1);
  EXPECT_LE((m.means[1 - a] - m2).cwiseAbs().maxCoeff(), 0.1);
  EXPECT_NEAR(m.weights[a], 0.3, 0.05);
  EXPECT_NEAR(m.weights[1 - a], 0.7, 0.05);
}

TEST(Mog, LogLikelihoodNeverDecreases) {
  std::mt19937_64 rng(75);
  for (int trial = 0; trial < 5; ++trial) {
    const MogModel truth = hand_built(rng, 3, 4);
    Eigen::MatrixXd Z(1200, 6);
    for (int k = 0; k < 4; ++k) {
      Z.middleRows(300 * k, 300) = gaussian_rows(rng, 300, truth.means[k], truth.covariances[k]);
    }
    MogFitOptions opt;
    opt.components = 6;
    opt.seed = static_cast<std::uint64_t>(trial);
    const MogFitResult r = fit_mog(Z, 3, opt);
    ASSERT_TRUE(r.reinitialized_at.empty());
    for (std::size_t i = 1; i < r.log_likelihood.size(); ++i) {
      EXPECT_GE(r.log_likelihood[i], r.log_likelihood[i - 1] - 1e-9 * std::abs(r.log_likelihood[i - 1]))
          << "trial " << trial << " iteration " << i;
    }
    EXPECT_NEAR(r.log_likelihood.back(), mog_log_likelihood(r.model, Z),
                1e-9 * std::abs(r.log_likelihood.back()));
  }
}

TEST(Mog, FitIsDeterministicPerSeed) {
  std::mt19937_64 rng(76);
  const Eigen::MatrixXd Z = random_matrix(rng, 400, 5);
  MogFitOptions opt;
  opt.components = 3;
  opt.seed = 9;
  const MogModel a = fit_mog(Z, 2, opt).model;
  const MogModel b = fit_mog(Z, 2, opt).model;
  EXPECT_EQ(a.weights, b.weights);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(a.covariances[k], b.covariances[k]);
}

TEST(Mog, RejectsBadArguments) {
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Random(50, 5);
  MogFitOptions opt;
  opt.components = 0;
  EXPECT_THROW(fit_mog(Z, 2, opt), InvalidArgument);
  opt.components = 2;
  EXPECT_THROW(fit_mog(Z, 3, opt), InvalidArgument);
}

TEST(Mog, SingleComponentConditioningMatchesTextbook) {
  std::mt19937_64 rng(77);
  const MogModel m = hand_built(rng, 2, 1);
  const Eigen::Vector3d u = Eigen::Vector3d(0.3, -0.5, 0.8).normalized();
  const ConditionalMog c = condition(m, u);

  const Eigen::MatrixXd& S = m.covariances[0];
  const Eigen::MatrixXd S_uu_inv = S.bottomRightCorner(3, 3).fullPivLu().inverse();
  const Eigen::VectorXd mean =
      m.means[0].head(2) + S.topRightCorner(2, 3) * S_uu_inv * (u - m.means[0].tail(3));
  const Eigen::MatrixXd cov = S.topLeftCorner(2, 2) - S.topRightCorner(2, 3) * S_uu_inv * S.bottomLeftCorner(3, 2);
  EXPECT_LE((c.means[0] - mean).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((c.covariances[0] - cov).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_DOUBLE_EQ(c.weights[0], 1.0);
}

TEST(Mog, ConditionalWeightsStayOnTheSimplex) {
  std::mt19937_64 rng(78);
  const MogModel m = hand_built(rng, 4, 8);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Vector3d u = Eigen::Vector3d(normal(rng), normal(rng), normal(rng)).normalized() *
                              std::exp(3.0 * normal(rng));
    const ConditionalMog c = condition(m, u);
    EXPECT_NEAR(c.weights.sum(), 1.0, 1e-12);
    EXPECT_GE(c.weights.minCoeff(), 0.0);
  }
}

TEST(Mog, ConditionalDensityIntegratesToOne) {
  std::mt19937_64 rng(79);
  const MogModel m = hand_built(rng, 2, 3);
  const ConditionalMog c = condition(m, Eigen::Vector3d(0.0, 0.6, 0.8));

  // Importance sampling under a broad Gaussian proposal.
  const Eigen::VectorXd centre = c.mixture_mean();
  double spread = 0.0;
  for (const auto& cov : c.covariances) spread = std::max(spread, cov.diagonal().maxCoeff());
  for (const auto& mu : c.means) spread = std::max(spread, (mu - centre).squaredNorm());
  const double s = 2.0 * std::sqrt(spread);
  std::normal_distribution<double> normal;
  const int n = 400000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d e(normal(rng), normal(rng));
    const Eigen::VectorXd w = centre + s * e;
    const double log_q = -0.5 * e.squaredNorm() - std::log(2.0 * std::numbers::pi * s * s);
    const double ratio = std::exp(c.log_density(w) - log_q);
    sum += ratio;
  }
  EXPECT_NEAR(sum / n, 1.0, 0.01);
}

TEST(Mog, FarDirectionFollowsNearestComponent) {
  std::mt19937_64 rng(80);
  MogModel m = hand_built(rng, 2, 4);
  const Eigen::Vector3d u(40.0, -25.0, 30.0);
  const ConditionalMog c = condition(m, u);
  // Direct evaluation: log pi_k - 1/2 (Mahalanobis + log det).
  Eigen::VectorXd score(4);
  for (int k = 0; k < 4; ++k) {
    const Eigen::Matrix3d S = m.covariances[k].bottomRightCorner(3, 3);
    const Eigen::Vector3d r = u - m.means[k].tail(3);
    score[k] = std::log(m.weights[k]) - 0.5 * (r.dot(S.inverse() * r) + std::log(S.determinant()));
  }
  Eigen::Index best = 0;
  Eigen::Index got = 0;
  score.maxCoeff(&best);
  c.weights.maxCoeff(&got);
  EXPECT_EQ(got, best);
  EXPECT_GT(c.weights[best], 0.99);
}

TEST(Mog, SamplingIsSeededAndUnbiased) {
  std::mt19937_64 rng(81);
  const MogModel m = hand_built(rng, 3, 5);
  const ConditionalMog c = condition(m, Eigen::Vector3d(1.0, 0.0, 0.0));
  const Eigen::Index n = 20000;
  const Eigen::MatrixXd a = sample_pcs(c, n, 17);
  EXPECT_EQ(a, sample_pcs(c, n, 17));
  EXPECT_NE(a, sample_pcs(c, n, 18));

  const Eigen::VectorXd mean = c.mixture_mean();
  Eigen::MatrixXd second = -mean * mean.transpose();
  for (int k = 0; k < 5; ++k) {
    second += c.weights[k] * (c.covariances[k] + c.means[k] * c.means[k].transpose());
  }
  const Eigen::VectorXd sample_mean = a.colwise().mean().transpose();
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double se = std::sqrt(second(j, j) / static_cast<double>(n));
    EXPECT_LE(std::abs(sample_mean[j] - mean[j]), 3.0 * se) << "coordinate " << j;
  }
}

TEST(Mog, NonindividualizedDecodesTheMixtureMean) {
  std::mt19937_64 rng(82);
  const Eigen::MatrixXd logs = random_matrix(rng, 50, 8, -1, 1);
  const PcaCodec codec = PcaCodec::fit(logs, 3);
  const MogModel one = hand_built(rng, 3, 1);
  const ConditionalMog c1 = condition(one, Eigen::Vector3d(0.0, 0.0, 1.0));
  EXPECT_LE((nonindividualized(c1, codec) - codec.decode(c1.means[0].transpose())).norm(), 1e-14);

  const MogModel many = hand_built(rng, 3, 4);
  const ConditionalMog c = condition(many, Eigen::Vector3d(0.0, 1.0, 0.0));
  const Eigen::MatrixXd pcs = sample_pcs(c, 200000, 5);
  const Eigen::RowVectorXd mc = codec.decode(pcs.colwise().mean());
  const Eigen::RowVectorXd exact = nonindividualized(c, codec);
  EXPECT_LE(((mc - exact).array() / exact.array()).abs().maxCoeff(), 0.02);
  EXPECT_EQ(sample_candidates(c, codec, 7, 3), codec.decode(sample_pcs(c, 7, 3)));
}

TEST(Mog, SymmetricPopulationGivesSymmetricMedianPlaneHrtf) {
  std::vector<HrtfSet> population;
  for (const auto& p : synth_population_params(4, 2024)) {
    population.push_back(synth_sphere_hrtf(equiangular_grid(24, 11), p, 32, kDefaultSampleRate));
  }
  MogFitOptions opt;
  opt.components = 6;
  opt.seed = 1;
  const GenerativeFit g = fit_generative_model(population, 8, opt);
  for (const Eigen::Vector3d u : {Eigen::Vector3d(0, 1, 0), Eigen::Vector3d(0, 0.6, 0.8),
                                  Eigen::Vector3d(0, -0.8, 0.6)}) {
    const Eigen::RowVectorXd mp = nonindividualized(condition(g.model.mog, u), g.model.codec);
    const Eigen::ArrayXd left = mp.head(32).transpose().array().log();
    const Eigen::ArrayXd right = mp.tail(32).transpose().array().log();
    // 1 dB in natural-log units.
    EXPECT_LE((left - right).abs().maxCoeff(), std::log(10.0) / 20.0) << u.transpose();
  }
}

TEST(Mog, SaveLoadRoundTrip) {
  std::vector<HrtfSet> population;
  for (const auto& p : synth_population_params(2, 5)) {
    population.push_back(synth_sphere_hrtf(equiangular_grid(12, 5), p, 16, kDefaultSampleRate));
  }
  MogFitOptions opt;
  opt.components = 3;
  const GenerativeModel model = fit_generative_model(population, 4, opt).model;
  testing::TempDir tmp("mog");
  save_generative_model(model, tmp.path() / "gen.json");
  const GenerativeModel back = load_generative_model(tmp.path() / "gen.json");
  EXPECT_EQ(back.mog.components(), 3);
  EXPECT_NEAR(back.mog.weights.sum(), 1.0, 1e-12);
  EXPECT_LE((back.codec.basis - model.codec.basis).cwiseAbs().maxCoeff(), 1e-6);
  for (int k = 0; k < 3; ++k) {
    EXPECT_LE((back.mog.covariances[k] - model.mog.covariances[k]).cwiseAbs().maxCoeff(),
              1e-6 * model.mog.covariances[k].cwiseAbs().maxCoeff());
  }
  const Eigen::Vector3d u(0.6, 0.0, 0.8);
  const Eigen::RowVectorXd a = nonindividualized(condition(model.mog, u), model.codec);
  const Eigen::RowVectorXd b = nonindividualized(condition(back.mog, u), back.codec);
  EXPECT_LE(((a - b).array() / a.array()).abs().maxCoeff(), 1e-4);

  std::filesystem::remove(tmp.path() / "gen.weights.f32");
  EXPECT_THROW(load_generative_model(tmp.path() / "gen.json"), Error);
}

}  // namespace
}  // namespace hrtfgp
