#include "hrtfgp/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "hrtfgp/baselines.hpp"
#include "hrtfgp/error.hpp"
#include "hrtfgp/incremental_gp.hpp"

namespace hrtfgp {

namespace {

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

Eigen::Index first_at_or_below(const Eigen::VectorXd& curve, double level) {
  for (Eigen::Index i = 0; i < curve.size(); ++i) {
    if (curve[i] <= level) return i + 1;
  }
  return -1;
}

double eta_to_error_deg(double eta) { return rad_to_deg(std::acos(std::clamp(-eta, -1.0, 1.0))); }

}  // namespace

std::string hyperparams_json(const Hyperparams& params) {
  const Eigen::VectorXd& l = params.spec.length_scales;
  const nlohmann::json j = {{"nu", to_string(params.spec.nu)},
                            {"length_scales", std::vector<double>(l.data(), l.data() + l.size())},
                            {"signal_scale", params.spec.signal_scale},
                            {"noise_sd", params.noise_sd}};
  return j.dump(2) + "\n";
}

Hyperparams parse_hyperparams_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("hyperparams", e.what());
  }
  Hyperparams h;
  try {
    h.spec.nu = parse_matern_nu(j.at("nu").get<std::string>());
    const auto l = j.at("length_scales").get<std::vector<double>>();
    h.spec.length_scales = Eigen::Map<const Eigen::VectorXd>(l.data(), static_cast<Eigen::Index>(l.size()));
    h.spec.signal_scale = j.at("signal_scale").get<double>();
    h.noise_sd = j.at("noise_sd").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("hyperparams", e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError("nu", e.what());
  }
  h.spec.validate();
  if (!(h.noise_sd >= 0.0)) throw FormatError("noise_sd", "must be >= 0");
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ b);
}

std::vector<Eigen::Index> random_subset(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
  if (k < 0 || k > n) throw InvalidArgument("subset size out of range");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& M, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), M.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = M.row(rows[i]);
  return out;
}

std::vector<Eigen::Index> training_split(Eigen::Index n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("train fraction must be in (0, 1]");
  const auto k = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(n))));
  return random_subset(n, k, seed);
}

TrainResult train_on_split(const FeatureMatrix& f, MaternNu nu, const std::vector<Eigen::Index>& split,
                           const TrainOptions& options) {
  const Eigen::MatrixXd X = take_rows(f.X, split);
  const Eigen::MatrixXd Y = take_rows(f.Y, split);
  return train_hyperparams(initial_hyperparams(nu, X, Y), X, Y, options);
}

std::vector<CrossvalRow> run_crossval(const HrtfSet& set, const CrossvalOptions& options) {
  const auto split = training_split(set.size(), options.train_fraction, options.seed);
  std::vector<CrossvalRow> rows;
  for (FeatureKind kind : options.features) {
    const FeatureMatrix f = extract_features(set, kind);
    const Eigen::MatrixXd X = take_rows(f.X, split);
    const Eigen::MatrixXd Y = take_rows(f.Y, split);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rows.push_back({kind, "OLS", mean_angular_error_deg(OlsRegressor::fit(X, Y).predict(f.X), f.Y), nan});
    rows.push_back({kind, "NN", mean_angular_error_deg(NearestNeighbor::fit(X, Y).predict(f.X), f.Y), nan});
    for (MaternNu nu : options.kernels) {
      const TrainResult tr = train_on_split(f, nu, split, options.train);
      const GpModel m = fit_posterior(tr.params.spec, tr.params.noise_sd, X, Y);
      const double err = mean_angular_error_deg(predict(m, f.X).mean, f.Y);
      rows.push_back({kind, "GP-" + std::string(to_string(nu)), err, tr.lmh});
      spdlog::info("crossval {} GP-{}: {:.3f} deg, LMH {:.2f}", to_string(kind), to_string(nu), err, tr.lmh);
    }
  }
  return rows;
}

std::string crossval_csv(const std::vector<CrossvalRow>& rows) {
  std::string out = "feature,method,mean_error_deg,lmh\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{:.17g},{}\n", to_string(r.feature), r.method, r.mean_error_deg,
                       std::isnan(r.lmh) ? std::string() : fmt::format("{:.17g}", r.lmh));
  }
  return out;
}

std::vector<EigenCurve> run_eigen(const HrtfSet& set, const CrossvalOptions& options) {
  const auto split = training_split(set.size(), options.train_fraction, options.seed);
  std::vector<EigenCurve> curves;
  for (FeatureKind kind : options.features) {
    const FeatureMatrix f = extract_features(set, kind);
    for (MaternNu nu : options.kernels) {
      const TrainResult tr = train_on_split(f, nu, split, options.train);
      const Eigen::MatrixXd K = gram(tr.params.spec, f.X);
      const KpcaResult k = kernel_pca(K);
      EigenCurve c;
      c.feature = kind;
      c.nu = nu;
      c.eigenvalues = k.eigenvalues;
      c.cumulative_energy = k.cumulative_energy;
      c.count90 = components_for_energy(k, 0.9);
      c.trace = K.trace();
      curves.push_back(std::move(c));
    }
  }
  return curves;
}

std::string eigen_csv(const std::vector<EigenCurve>& curves) {
  std::string out = "feature,kernel,index,eigenvalue,cumulative_energy\n";
  for (const auto& c : curves) {
    for (Eigen::Index i = 0; i < c.eigenvalues.size(); ++i) {
      out += fmt::format("{},{},{},{:.17g},{:.17g}\n", to_string(c.feature), to_string(c.nu), i + 1,
                         c.eigenvalues[i], c.cumulative_energy[i]);
    }
  }
  return out;
}

Eigen::VectorXd prefix_errors(const KernelSpec& spec, double noise_sd, const FeatureMatrix& f,
                              const std::vector<Eigen::Index>& order) {
  IncrementalGp gp(spec, noise_sd, f.X, f.Y.cols());
  Eigen::VectorXd out(static_cast<Eigen::Index>(order.size()));
  for (std::size_t t = 0; t < order.size(); ++t) {
    gp.include(f.X.row(order[t]).transpose(), f.Y.row(order[t]));
    out[static_cast<Eigen::Index>(t)] = mean_angular_error_deg(gp.mean(), f.Y);
  }
  return out;
}

GfsCurve run_gfs(const HrtfSet& set, const GfsOptions& options) {
  const FeatureMatrix f = extract_features(set, options.feature);
  const Eigen::Index n = f.X.rows();
  const Eigen::Index T = options.subset_size;
  if (T < 1 || T > n) throw InvalidArgument("subset size out of range");
  if (options.random_subsets < 0) throw InvalidArgument("random subset count must be >= 0");

  GfsCurve curve;
  const auto split = training_split(n, options.train_fraction, options.seed);
  curve.params = train_on_split(f, options.nu, split, options.train).params;
  const KernelSpec& spec = curve.params.spec;
  const double sigma = curve.params.noise_sd;

  const RiskContext ctx = make_risk_context(options.risk, spec, sigma, f.X, f.Y);
  const SelectionResult sel = greedy_forward_select(ctx, T);
  curve.order = sel.order;
  curve.gfs_error_deg = prefix_errors(spec, sigma, f, sel.order);

  curve.random_error_deg.resize(options.random_subsets, T);
  for (int r = 0; r < options.random_subsets; ++r) {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::mt19937_64 rng(derive_seed(options.seed, 0x6f5, static_cast<std::uint64_t>(r)));
    std::shuffle(perm.begin(), perm.end(), rng);
    perm.resize(static_cast<std::size_t>(T));
    curve.random_error_deg.row(r) = prefix_errors(spec, sigma, f, perm).transpose();
  }
  curve.random_median_deg.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    if (options.random_subsets == 0) {
      curve.random_median_deg[t] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const Eigen::VectorXd col = curve.random_error_deg.col(t);
    curve.random_median_deg[t] = median({col.data(), col.data() + col.size()});
  }
  const GpModel full = fit_posterior(spec, sigma, f.X, f.Y);
  curve.full_error_deg = mean_angular_error_deg(predict(full, f.X).mean, f.Y);
  curve.crossing5 = first_at_or_below(curve.gfs_error_deg, 5.0);
  curve.crossing1 = first_at_or_below(curve.gfs_error_deg, 1.0);
  return curve;
}

std::string gfs_csv(const GfsCurve& c) {
  std::string out = "size,index,gfs_error_deg,random_median_deg,random_min_deg,random_max_deg\n";
  for (Eigen::Index t = 0; t < c.gfs_error_deg.size(); ++t) {
    const bool have = c.random_error_deg.rows() > 0;
    out += fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", t + 1, c.order[static_cast<std::size_t>(t)],
                       c.gfs_error_deg[t], c.random_median_deg[t],
                       have ? c.random_error_deg.col(t).minCoeff() : std::numeric_limits<double>::quiet_NaN(),
                       have ? c.random_error_deg.col(t).maxCoeff() : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

std::vector<GpModel> train_ssl_models(const std::vector<HrtfSet>& subjects, MaternNu nu, double fraction,
                                      const TrainOptions& options, std::uint64_t seed) {
  std::vector<GpModel> out;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const FeatureMatrix f = extract_features(subjects[i], FeatureKind::mp);
    const auto split = training_split(f.X.rows(), fraction, derive_seed(seed, 0x551, i));
    const TrainResult tr = train_on_split(f, nu, split, options);
    out.push_back(fit_posterior(tr.params.spec, tr.params.noise_sd, take_rows(f.X, split), take_rows(f.Y, split)));
  }
  return out;
}

TrialWorld build_trial_world(const WorldOptions& options) {
  if (options.population < 1 || options.listeners < 1) throw InvalidArgument("need subjects and listeners");
  const auto params = synth_population_params(options.population + options.listeners, options.seed);
  const SphericalGrid grid = cipic_like_grid();
  std::vector<HrtfSet> population;
  TrialWorld world;
  for (int i = 0; i < options.population + options.listeners; ++i) {
    HrtfSet s = synth_sphere_hrtf(grid, params[static_cast<std::size_t>(i)], kDefaultBins, kDefaultSampleRate,
                                  "synthetic-" + std::to_string(i));
    if (i < options.population) {
      population.push_back(std::move(s));
    } else {
      world.listeners.push_back(std::move(s));
    }
  }
  MogFitOptions mog = options.mog;
  mog.seed = derive_seed(options.seed, 0x3096);
  const GenerativeFit g = fit_generative_model(population, options.pca_components, mog);
  spdlog::info("generative model: {} EM iterations, converged {}", g.fit.log_likelihood.size(), g.fit.converged);
  world.generative = g.model;

  world.ssl_models = train_ssl_models(world.listeners, options.listener_nu, options.listener_train_fraction,
                                     options.listener_train, options.seed);
  world.prior = gp_ssle_prior_from_ssl(world.ssl_models);
  return world;
}

Eigen::MatrixXd candidate_pool(const GenerativeModel& model, const Direction& target, Eigen::Index size,
                               std::uint64_t seed) {
  if (size < 1) throw InvalidArgument("pool size must be positive");
  const ConditionalMog cond = condition(model.mog, target.vector());
  Eigen::MatrixXd pool(size, model.codec.width());
  pool.row(0) = nonindividualized(cond, model.codec);
  if (size > 1) pool.bottomRows(size - 1) = sample_candidates(cond, model.codec, size - 1, seed);
  return pool;
}

TargetOutcome run_target(const GenerativeModel& model, const Hyperparams& prior, Listener& listener,
                         const Direction& target, const TrialOptions& options, std::uint64_t pool_seed,
                         const Eigen::MatrixXd* extra_rows) {
  if (options.rounds < 1) throw InvalidArgument("rounds must be positive");
  Eigen::MatrixXd pool = candidate_pool(model, target, options.pool_size, pool_seed);
  if (extra_rows != nullptr && extra_rows->rows() > 0) {
    Eigen::MatrixXd joined(pool.rows() + extra_rows->rows(), pool.cols());
    joined << pool, *extra_rows;
    pool = std::move(joined);
  }
  const Eigen::Index rounds = std::min<Eigen::Index>(options.rounds, pool.rows());
  ActiveSession session(TargetSet::uniform({target}), std::move(pool), prior);
  TargetOutcome out;
  out.target = target;
  for (Eigen::Index t = 0; t < rounds; ++t) {
    out.queried.push_back(session.step(listener));
    out.error_deg.push_back(rad_to_deg(angular_separation(target.vector(), session.reported().back())));
    out.eta.push_back(session.eta()[0]);
  }
  out.initial_error_deg = out.error_deg.front();
  out.best_error_deg = eta_to_error_deg(out.eta.back());
  return out;
}

TrialReport run_trials(const TrialWorld& world, int targets_per_listener, const TrialOptions& options) {
  if (targets_per_listener < 1) throw InvalidArgument("need at least one target per listener");
  TrialReport report;
  for (std::size_t l = 0; l < world.listeners.size(); ++l) {
    const HrtfSet& set = world.listeners[l];
    const auto targets = random_subset(set.size(), targets_per_listener, derive_seed(options.seed, 0x7a6, l));
    Eigen::MatrixXd own;
    if (options.include_listener_rows) own = extract_features(set, FeatureKind::mp).X;
    for (std::size_t j = 0; j < targets.size(); ++j) {
      auto listener = make_simulated_listener(world.ssl_models[l], options.mode, derive_seed(options.seed, l, j));
      report.outcomes.push_back(run_target(world.generative, world.prior, *listener, set.direction(targets[j]),
                                           options, derive_seed(options.seed, 0x9001 + l, j),
                                           options.include_listener_rows ? &own : nullptr));
      report.listener.push_back(static_cast<Eigen::Index>(l));
    }
  }
  double initial = 0.0;
  double best = 0.0;
  for (const auto& o : report.outcomes) {
    initial += o.initial_error_deg;
    best += o.best_error_deg;
  }
  const auto n = static_cast<double>(report.outcomes.size());
  report.mean_initial_error_deg = initial / n;
  report.mean_best_error_deg = best / n;
  report.improvement_ratio = best > 0.0 ? initial / best : std::numeric_limits<double>::infinity();
  return report;
}

std::string trial_json(const TrialReport& report) {
  nlohmann::json targets = nlohmann::json::array();
  for (std::size_t i = 0; i < report.outcomes.size(); ++i) {
    const auto& o = report.outcomes[i];
    targets.push_back({{"listener", report.listener[i]},
                       {"target", {o.target.x(), o.target.y(), o.target.z()}},
                       {"azimuth_deg", rad_to_deg(o.target.azimuth())},
                       {"elevation_deg", rad_to_deg(o.target.elevation())},
                       {"initial_error_deg", o.initial_error_deg},
                       {"best_error_deg", o.best_error_deg},
                       {"queried", o.queried},
                       {"error_deg", o.error_deg},
                       {"eta", o.eta}});
  }
  const nlohmann::json j = {{"mean_initial_error_deg", report.mean_initial_error_deg},
                            {"mean_best_error_deg", report.mean_best_error_deg},
                            {"improvement_ratio", report.improvement_ratio},
                            {"targets", targets}};
  return j.dump(2) + "\n";
}

}  // namespace hrtfgp
