#include "hrtfgp/mog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Cholesky>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "hrtfgp/container.hpp"
#include "hrtfgp/error.hpp"

namespace hrtfgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// log N(z_i | mean, cov) for every row of Z. Returns false if cov is not PD.
bool gaussian_log_density(const Eigen::MatrixXd& Z, const Eigen::VectorXd& mean,
                          const Eigen::MatrixXd& cov, Eigen::VectorXd& out) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
  if ((diag.array() <= 0.0).any()) return false;
  const double log_det = 2.0 * diag.array().log().sum();
  const Eigen::MatrixXd diff = (Z.rowwise() - mean.transpose()).transpose();
  const Eigen::MatrixXd white = llt.matrixL().solve(diff);
  out = -0.5 * (white.colwise().squaredNorm().transpose().array() + log_det +
                static_cast<double>(Z.cols()) * kLog2Pi);
  return true;
}

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// N x M log(pi_k N(z_i | ...)). Components with a non-PD covariance get -inf.
Eigen::MatrixXd joint_log_terms(const MogModel& model, const Eigen::MatrixXd& Z) {
  Eigen::MatrixXd terms(Z.rows(), model.components());
  Eigen::VectorXd col;
  for (int k = 0; k < model.components(); ++k) {
    if (model.weights[k] > 0.0 && gaussian_log_density(Z, model.means[k], model.covariances[k], col)) {
      terms.col(k) = col.array() + std::log(model.weights[k]);
    } else {
      terms.col(k).setConstant(-std::numeric_limits<double>::infinity());
    }
  }
  return terms;
}

std::vector<Eigen::Index> kmeanspp(const Eigen::MatrixXd& Z, int m, std::mt19937_64& rng) {
  const Eigen::Index n = Z.rows();
  std::vector<Eigen::Index> centres;
  centres.push_back(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
  Eigen::VectorXd d2 = (Z.rowwise() - Z.row(centres[0])).rowwise().squaredNorm();
  while (static_cast<int>(centres.size()) < m) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        r -= d2[pick];
        if (r < 0.0) break;
      }
    } else {
      pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
    }
    centres.push_back(pick);
    d2 = d2.cwiseMin((Z.rowwise() - Z.row(pick)).rowwise().squaredNorm());
  }
  return centres;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& Z, const Eigen::VectorXd& mean) {
  const Eigen::MatrixXd c = Z.rowwise() - mean.transpose();
  return c.transpose() * c / static_cast<double>(Z.rows());
}

}  // namespace

void MogModel::validate() const {
  const int m = components();
  if (m < 1) throw InvalidArgument("mog: no components");
  if (q < 1) throw InvalidArgument("mog: q must be positive");
  if (static_cast<int>(means.size()) != m || static_cast<int>(covariances.size()) != m) {
    throw InvalidArgument("mog: component arrays disagree");
  }
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-12) {
    throw InvalidArgument("mog: weights are not on the simplex");
  }
  for (int k = 0; k < m; ++k) {
    if (means[k].size() != dim() || covariances[k].rows() != dim() || covariances[k].cols() != dim()) {
      throw InvalidArgument("mog: component " + std::to_string(k) + " has the wrong shape");
    }
  }
}

MogFitResult fit_mog(const Eigen::MatrixXd& Z, Eigen::Index q, const MogFitOptions& options) {
  const int m = options.components;
  const Eigen::Index n = Z.rows();
  const Eigen::Index d = q + 3;
  if (m < 1) throw InvalidArgument("mog: M must be at least 1");
  if (q < 1 || Z.cols() != d) throw InvalidArgument("mog: rows must be [q PCs, 3 direction]");
  if (n < m) throw InvalidArgument("mog: fewer rows than components");
  if (!Z.allFinite()) throw InvalidArgument("mog: non-finite rows");
  if (options.max_iterations < 1) throw InvalidArgument("mog: max_iterations must be >= 1");
  if (n < 10 * m) spdlog::warn("mog: {} rows for {} components, fewer than 10 per component", n, m);

  const Eigen::VectorXd global_mean = Z.colwise().mean().transpose();
  const Eigen::MatrixXd global_cov = covariance(Z, global_mean);
  const double trace = global_cov.trace();
  const double load = options.loading * (trace > 0.0 ? trace : 1.0) / static_cast<double>(d);
  const Eigen::MatrixXd loading = load * Eigen::MatrixXd::Identity(d, d);

  std::mt19937_64 rng(options.seed);
  MogFitResult result;
  MogModel& model = result.model;
  model.q = q;
  model.weights = Eigen::VectorXd::Constant(m, 1.0 / m);
  for (Eigen::Index c : kmeanspp(Z, m, rng)) {
    model.means.push_back(Z.row(c).transpose());
    model.covariances.push_back(global_cov + loading);
  }

  for (int it = 0;; ++it) {
    // E-step.
    Eigen::MatrixXd resp = joint_log_terms(model, Z);
    Eigen::VectorXd row_ll(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      row_ll[i] = log_sum_exp(resp.row(i));
      resp.row(i) = (resp.row(i).array() - row_ll[i]).exp();
    }
    const double ll = row_ll.sum();
    if (!std::isfinite(ll)) throw NumericalError("mog: log-likelihood is not finite");
    const bool improved_little = !result.log_likelihood.empty() && ll >= result.log_likelihood.back() &&
                                 ll - result.log_likelihood.back() <= options.tolerance * std::abs(ll);
    result.log_likelihood.push_back(ll);
    if (improved_little) {
      result.converged = true;
      break;
    }
    if (it == options.max_iterations) break;

    // M-step.
    const Eigen::VectorXd counts = resp.colwise().sum().transpose();
    bool reseeded = false;
    for (int k = 0; k < m; ++k) {
      bool collapsed = counts[k] < 1.0;
      if (!collapsed) {
        model.means[k] = Z.transpose() * resp.col(k) / counts[k];
        const Eigen::MatrixXd c = Z.rowwise() - model.means[k].transpose();
        model.covariances[k] =
            c.transpose() * (c.array().colwise() * resp.col(k).array()).matrix() / counts[k] + loading;
        model.covariances[k] = 0.5 * (model.covariances[k] + model.covariances[k].transpose());
        Eigen::LLT<Eigen::MatrixXd> llt(model.covariances[k]);
        collapsed = llt.info() != Eigen::Success;
      }
      if (collapsed) {
        // Reseed at the worst-explained row with the data covariance.
        Eigen::Index worst = 0;
        row_ll.minCoeff(&worst);
        model.means[k] = Z.row(worst).transpose();
        model.covariances[k] = global_cov + loading;
        row_ll[worst] = std::numeric_limits<double>::infinity();
        spdlog::info("mog: component {} collapsed at iteration {}, reseeded", k, it);
        reseeded = true;
      }
      model.weights[k] = std::max(counts[k], 1.0) / static_cast<double>(n);
    }
    model.weights /= model.weights.sum();
    if (reseeded) result.reinitialized_at.push_back(it);
  }
  model.weights /= model.weights.sum();
  return result;
}

double mog_log_likelihood(const MogModel& model, const Eigen::MatrixXd& Z) {
  model.validate();
  if (Z.cols() != model.dim()) throw InvalidArgument("mog: row width mismatch");
  const Eigen::MatrixXd terms = joint_log_terms(model, Z);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) ll += log_sum_exp(terms.row(i));
  return ll;
}

Eigen::VectorXd ConditionalMog::mixture_mean() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(means.front().size());
  for (std::size_t k = 0; k < means.size(); ++k) out += weights[static_cast<Eigen::Index>(k)] * means[k];
  return out;
}

double ConditionalMog::log_density(const Eigen::VectorXd& w) const {
  Eigen::RowVectorXd terms(weights.size());
  Eigen::VectorXd one;
  const Eigen::MatrixXd row = w.transpose();
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    const auto uk = static_cast<std::size_t>(k);
    if (weights[k] > 0.0 && gaussian_log_density(row, means[uk], covariances[uk], one)) {
      terms[k] = std::log(weights[k]) + one[0];
    } else {
      terms[k] = -std::numeric_limits<double>::infinity();
    }
  }
  return log_sum_exp(terms);
}

ConditionalMog condition(const MogModel& model, const Eigen::Vector3d& u) {
  model.validate();
  if (!u.allFinite()) throw InvalidArgument("mog: non-finite direction");
  const Eigen::Index q = model.q;
  const int m = model.components();
  ConditionalMog out;
  Eigen::VectorXd log_w(m);
  for (int k = 0; k < m; ++k) {
    const Eigen::VectorXd& mu = model.means[k];
    const Eigen::MatrixXd& S = model.covariances[k];
    const Eigen::Matrix3d S_u = S.bottomRightCorner(3, 3);
    Eigen::LLT<Eigen::Matrix3d> llt(S_u);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("mog: direction block of component " + std::to_string(k) + " is singular");
    }
    const Eigen::Vector3d r = u - mu.tail(3);
    const Eigen::MatrixXd S_wu = S.topRightCorner(q, 3);
    const Eigen::MatrixXd gain = llt.solve(S_wu.transpose()).transpose();  // q x 3
    out.means.push_back(mu.head(q) + gain * r);
    Eigen::MatrixXd c = S.topLeftCorner(q, q) - gain * S_wu.transpose();
    out.covariances.push_back(0.5 * (c + c.transpose()));

    const Eigen::Matrix3d L = llt.matrixL();
    const double log_det = 2.0 * L.diagonal().array().log().sum();
    const double maha = llt.matrixL().solve(r).squaredNorm();
    log_w[k] = std::log(model.weights[k]) - 0.5 * (maha + log_det + 3.0 * kLog2Pi);
  }
  const double lse = log_sum_exp(log_w.transpose());
  out.weights = (log_w.array() - lse).exp();
  out.weights /= out.weights.sum();
  return out;
}

Eigen::MatrixXd sample_pcs(const ConditionalMog& cond, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("sample count must be positive");
  const Eigen::Index q = cond.means.front().size();
  std::vector<Eigen::MatrixXd> factors;
  for (const auto& c : cond.covariances) {
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) throw NumericalError("mog: conditional covariance is not PD");
    factors.push_back(llt.matrixL());
  }
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> pick(cond.weights.data(), cond.weights.data() + cond.weights.size());
  std::normal_distribution<double> normal;
  Eigen::MatrixXd out(n, q);
  Eigen::VectorXd e(q);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(pick(rng));
    for (Eigen::Index j = 0; j < q; ++j) e[j] = normal(rng);
    out.row(i) = (cond.means[k] + factors[k] * e).transpose();
  }
  return out;
}

Eigen::MatrixXd sample_candidates(const ConditionalMog& cond, const PcaCodec& codec, Eigen::Index n,
                                  std::uint64_t seed) {
  return codec.decode(sample_pcs(cond, n, seed));
}

Eigen::RowVectorXd nonindividualized(const ConditionalMog& cond, const PcaCodec& codec) {
  return codec.decode(cond.mixture_mean().transpose());
}

GenerativeFit fit_generative_model(const std::vector<HrtfSet>& population, Eigen::Index q,
                                   const MogFitOptions& options) {
  if (population.empty()) throw InvalidArgument("empty population");
  Eigen::Index rows = 0;
  for (const auto& s : population) {
    if (s.bins() != population.front().bins()) throw InvalidArgument("population bin counts differ");
    rows += s.size();
  }
  const Eigen::Index width = 2 * population.front().bins();
  Eigen::MatrixXd logs(rows, width);
  Eigen::MatrixXd dirs(rows, 3);
  Eigen::Index at = 0;
  for (const auto& s : population) {
    logs.middleRows(at, s.size()) = log_magnitude_pairs(s);
    for (Eigen::Index i = 0; i < s.size(); ++i) dirs.row(at + i) = s.direction(i).vector().transpose();
    at += s.size();
  }
  GenerativeFit out;
  out.model.codec = PcaCodec::fit(logs, q);
  Eigen::MatrixXd Z(rows, q + 3);
  Z.leftCols(q) = out.model.codec.encode(logs);
  Z.rightCols(3) = dirs;
  out.fit = fit_mog(Z, q, options);
  out.model.mog = out.fit.model;
  return out;
}

namespace {

std::vector<float> to_f32(const Eigen::MatrixXd& m) {
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(static_cast<float>(m(r, c)));
  return out;
}

}  // namespace

void save_generative_model(const GenerativeModel& model, const std::filesystem::path& manifest_path) {
  model.codec.validate();
  model.mog.validate();
  const Eigen::Index q = model.mog.q;
  const Eigen::Index d = model.mog.dim();
  const int m = model.mog.components();
  if (model.codec.q() != q) throw InvalidArgument("codec and mixture disagree on q");

  Eigen::MatrixXd means(m, d);
  Eigen::MatrixXd covs(m, d * d);
  for (int k = 0; k < m; ++k) {
    means.row(k) = model.mog.means[k].transpose();
    for (Eigen::Index r = 0; r < d; ++r) covs.row(k).segment(r * d, d) = model.mog.covariances[k].row(r);
  }
  const std::filesystem::path dir =
      manifest_path.has_parent_path() ? manifest_path.parent_path() : std::filesystem::path(".");
  std::filesystem::create_directories(dir);
  const std::string stem = manifest_path.stem().string();
  nlohmann::json blobs;
  auto write = [&](const std::string& field, const std::vector<float>& values) {
    const std::string name = stem + "." + field + ".f32";
    container::write_f32_blob(dir / name, values);
    blobs[field] = name;
  };
  write("codec_mean", to_f32(model.codec.mean.transpose()));
  write("codec_basis", to_f32(model.codec.basis));
  write("codec_variance", to_f32(model.codec.variance.transpose()));
  write("weights", to_f32(model.mog.weights.transpose()));
  write("means", to_f32(means));
  write("covariances", to_f32(covs));
  const nlohmann::json manifest = {{"kind", "generative_model"}, {"q", q},           {"width", model.codec.width()},
                                   {"components", m},            {"blobs", blobs}};
  container::write_file_atomic(manifest_path, manifest.dump(2) + "\n");
}

GenerativeModel load_generative_model(const std::filesystem::path& manifest_path) {
  nlohmann::json manifest;
  Eigen::Index q = 0;
  Eigen::Index width = 0;
  int m = 0;
  try {
    manifest = nlohmann::json::parse(container::read_text_file(manifest_path));
    for (const char* key : {"q", "width", "components", "blobs"}) {
      if (!manifest.contains(key)) throw FormatError(key, "missing from manifest");
    }
    q = manifest.at("q").get<Eigen::Index>();
    width = manifest.at("width").get<Eigen::Index>();
    m = manifest.at("components").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest", e.what());
  }
  if (q < 1) throw FormatError("q", "must be positive");
  if (width < q) throw FormatError("width", "must be at least q");
  if (m < 1) throw FormatError("components", "must be positive");
  const Eigen::Index d = q + 3;
  const auto& blobs = manifest.at("blobs");
  const std::filesystem::path dir = manifest_path.parent_path();
  auto load = [&](const std::string& field, Eigen::Index rows, Eigen::Index cols) {
    if (!blobs.contains(field)) throw FormatError(field, "missing from blobs");
    const auto values = container::read_f32_blob(dir / blobs.at(field).get<std::string>(), field);
    if (static_cast<Eigen::Index>(values.size()) != rows * cols) {
      throw FormatError(field, "expected " + std::to_string(rows * cols) + " values, found " +
                                   std::to_string(values.size()));
    }
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = values[static_cast<std::size_t>(r * cols + c)];
    if (!out.allFinite()) throw FormatError(field, "non-finite value");
    return out;
  };
  GenerativeModel model;
  model.codec.mean = load("codec_mean", 1, width).transpose();
  model.codec.basis = load("codec_basis", width, q);
  model.codec.variance = load("codec_variance", 1, q).transpose();
  model.mog.q = q;
  model.mog.weights = load("weights", 1, m).transpose();
  if ((model.mog.weights.array() < 0.0).any()) throw FormatError("weights", "negative weight");
  model.mog.weights /= model.mog.weights.sum();
  const Eigen::MatrixXd means = load("means", m, d);
  const Eigen::MatrixXd covs = load("covariances", m, d * d);
  for (int k = 0; k < m; ++k) {
    model.mog.means.push_back(means.row(k).transpose());
    Eigen::MatrixXd c(d, d);
    for (Eigen::Index r = 0; r < d; ++r) c.row(r) = covs.row(k).segment(r * d, d);
    model.mog.covariances.push_back(0.5 * (c + c.transpose()));
  }
  model.codec.validate();
  model.mog.validate();
  return model;
}

}  // namespace hrtfgp
