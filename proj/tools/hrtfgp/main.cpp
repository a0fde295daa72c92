// hrtfgp: experiment harness and listening-test service.
//
// Exit codes: 0 success, 2 usage error, 1 runtime error.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "hrtfgp/container.hpp"
#include "hrtfgp/dataset.hpp"
#include "hrtfgp/error.hpp"
#include "hrtfgp/experiments.hpp"
#include "hrtfgp/features.hpp"
#include "hrtfgp/mog.hpp"
#include "hrtfgp/selection.hpp"
#include "hrtfgp/service.hpp"

namespace fs = std::filesystem;
using namespace hrtfgp;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Option values that only the core can validate are usage errors.
template <typename F>
auto as_usage(F&& f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

struct Common {
  std::uint64_t seed = 0;
  std::string data;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--seed", c.seed, "Seed for every random stream");
  cmd->add_option("--data", c.data, "Input path");
  auto* out = cmd->add_option("--out", c.out, "Output path");
  if (needs_out) out->required();
}

std::vector<FeatureKind> parse_features(const std::vector<std::string>& names) {
  std::vector<FeatureKind> out;
  for (const auto& n : names) out.push_back(as_usage([&] { return parse_feature_kind(n); }));
  return out;
}

std::vector<MaternNu> parse_kernels(const std::vector<std::string>& names) {
  std::vector<MaternNu> out;
  for (const auto& n : names) out.push_back(as_usage([&] { return parse_matern_nu(n); }));
  return out;
}

// A manifest, or a directory whose *.json files are manifests.
std::vector<HrtfSet> load_sets(const std::string& path) {
  if (!fs::exists(path)) throw IoError("no such file or directory: " + path);
  if (!fs::is_directory(path)) return {import_hrtf(path)};
  std::vector<fs::path> manifests;
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().extension() == ".json") manifests.push_back(e.path());
  }
  std::sort(manifests.begin(), manifests.end());
  if (manifests.empty()) throw IoError("no manifests in " + path);
  std::vector<HrtfSet> out;
  for (const auto& m : manifests) out.push_back(import_hrtf(m));
  return out;
}

// The given subject, or the default sphere model on the 1250-point grid.
HrtfSet load_or_synth(const Common& c) {
  if (!c.data.empty()) {
    auto sets = load_sets(c.data);
    if (sets.size() != 1) throw UsageError("--data must name a single subject here");
    return std::move(sets.front());
  }
  SphereModelParams p;
  p.noise_seed = c.seed;
  spdlog::info("no --data given, using the synthetic sphere model");
  return synth_sphere_hrtf(cipic_like_grid(), p, kDefaultBins, kDefaultSampleRate, "sphere");
}

void write_output(const std::string& path, const std::string& contents) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  container::write_file_atomic(p, contents);
  spdlog::info("wrote {}", path);
}

std::string features_csv(const FeatureMatrix& f) {
  std::string out = "x,y,z";
  for (Eigen::Index k = 0; k < f.X.cols(); ++k) out += fmt::format(",f{}", k);
  out += "\n";
  for (Eigen::Index i = 0; i < f.X.rows(); ++i) {
    out += fmt::format("{:.17g},{:.17g},{:.17g}", f.Y(i, 0), f.Y(i, 1), f.Y(i, 2));
    for (Eigen::Index k = 0; k < f.X.cols(); ++k) out += fmt::format(",{:.17g}", f.X(i, k));
    out += "\n";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("hrtfgp"));

  CLI::App app{"HRTF localization workbench"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::function<void()> run;

  // synth
  Common synth;
  int synth_count = 1;
  std::string synth_grid = "cipic";
  int synth_points = 1250;
  int synth_bins = kDefaultBins;
  auto* c_synth = app.add_subcommand("synth", "Write synthetic subjects as containers");
  add_common(c_synth, synth);
  c_synth->add_option("--count", synth_count, "Number of subjects")->check(CLI::PositiveNumber);
  c_synth->add_option("--grid", synth_grid, "cipic or fibonacci")->check(CLI::IsMember({"cipic", "fibonacci"}));
  c_synth->add_option("--points", synth_points, "Directions of the fibonacci grid")->check(CLI::PositiveNumber);
  c_synth->add_option("--bins", synth_bins, "Frequency bins")->check(CLI::PositiveNumber);
  c_synth->callback([&] {
    run = [&] {
      const SphericalGrid grid = synth_grid == "cipic" ? cipic_like_grid() : fibonacci_grid(synth_points);
      const auto params = synth_population_params(synth_count, synth.seed);
      fs::create_directories(synth.out);
      for (int i = 0; i < synth_count; ++i) {
        const std::string id = fmt::format("subject-{:03d}", i);
        const HrtfSet s = as_usage([&] {
          return synth_sphere_hrtf(grid, params[static_cast<std::size_t>(i)], synth_bins, kDefaultSampleRate, id);
        });
        export_hrtf(s, fs::path(synth.out) / (id + ".json"));
      }
      spdlog::info("wrote {} subject(s) to {}", synth_count, synth.out);
    };
  });

  // import
  Common imp;
  std::string subject_id;
  double sample_rate = kDefaultSampleRate;
  auto* c_import = app.add_subcommand("import", "Convert a long-format CSV into a container");
  add_common(c_import, imp);
  c_import->get_option("--data")->required();
  c_import->add_option("--subject-id", subject_id, "Subject name (default: the CSV file stem)");
  c_import->add_option("--sample-rate", sample_rate, "Sample rate in Hz")->check(CLI::PositiveNumber);
  c_import->callback([&] {
    run = [&] {
      const HrtfSet s = hrtf_from_csv(container::read_text_file(imp.data),
                                      subject_id.empty() ? fs::path(imp.data).stem().string() : subject_id,
                                      sample_rate);
      const fs::path out(imp.out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      export_hrtf(s, out);
      spdlog::info("imported {} directions x {} bins", s.size(), s.bins());
    };
  });

  // features
  Common feat;
  std::string feat_kind = "mp";
  auto* c_features = app.add_subcommand("features", "Extract binaural features as CSV");
  add_common(c_features, feat);
  c_features->add_option("--kind", feat_kind, "lmr, pd, amr or mp");
  c_features->callback([&] {
    run = [&] {
      const FeatureKind kind = as_usage([&] { return parse_feature_kind(feat_kind); });
      write_output(feat.out, features_csv(extract_features(load_or_synth(feat), kind)));
    };
  });

  // train
  Common train;
  std::string train_kind = "mp";
  std::string train_kernel = "rbf";
  double train_fraction = 1.0 / 3.0;
  int train_iterations = TrainOptions{}.iterations;
  auto* c_train = app.add_subcommand("train", "Train GP-SSL hyperparameters on a random split");
  add_common(c_train, train);
  c_train->add_option("--kind", train_kind, "Feature kind");
  c_train->add_option("--kernel", train_kernel, "m12, m32 or rbf");
  c_train->add_option("--fraction", train_fraction, "Training fraction")->check(CLI::Range(0.0, 1.0));
  c_train->add_option("--iterations", train_iterations, "Gradient steps")->check(CLI::NonNegativeNumber);
  c_train->callback([&] {
    run = [&] {
      const FeatureKind kind = as_usage([&] { return parse_feature_kind(train_kind); });
      const MaternNu nu = as_usage([&] { return parse_matern_nu(train_kernel); });
      const FeatureMatrix f = extract_features(load_or_synth(train), kind);
      TrainOptions opt;
      opt.iterations = train_iterations;
      const auto split = training_split(f.X.rows(), train_fraction, train.seed);
      const TrainResult r = train_on_split(f, nu, split, opt);
      spdlog::info("LMH {:.6g} after {} accepted steps", r.lmh, r.trace.size() - 1);
      write_output(train.out, hyperparams_json(r.params));
    };
  });

  // crossval and eigen share their options
  Common cv;
  std::vector<std::string> cv_features{"lmr", "pd", "amr", "mp"};
  std::vector<std::string> cv_kernels{"m12", "m32", "rbf"};
  double cv_fraction = 1.0 / 3.0;
  int cv_iterations = TrainOptions{}.iterations;
  auto crossval_options = [&] {
    CrossvalOptions o;
    o.features = parse_features(cv_features);
    o.kernels = parse_kernels(cv_kernels);
    o.train_fraction = cv_fraction;
    o.seed = cv.seed;
    o.train.iterations = cv_iterations;
    return o;
  };
  auto add_cv = [&](CLI::App* cmd) {
    add_common(cmd, cv);
    cmd->add_option("--features", cv_features, "Feature kinds")->delimiter(',');
    cmd->add_option("--kernels", cv_kernels, "Kernels")->delimiter(',');
    cmd->add_option("--fraction", cv_fraction, "Training fraction")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--iterations", cv_iterations, "Gradient steps")->check(CLI::NonNegativeNumber);
  };
  auto* c_crossval = app.add_subcommand("crossval", "Mean angular error of OLS, NN and GP-SSL (CSV)");
  add_cv(c_crossval);
  c_crossval->callback([&] {
    run = [&] {
      const CrossvalOptions o = crossval_options();
      write_output(cv.out, crossval_csv(run_crossval(load_or_synth(cv), o)));
    };
  });
  auto* c_eigen = app.add_subcommand("eigen", "Kernel PCA cumulative energy curves (CSV)");
  add_cv(c_eigen);
  c_eigen->callback([&] {
    run = [&] {
      const CrossvalOptions o = crossval_options();
      write_output(cv.out, eigen_csv(run_eigen(load_or_synth(cv), o)));
    };
  });

  // select
  Common sel;
  std::string sel_kind = "mp";
  std::string sel_risk = "pred";
  std::string sel_kernel = "rbf";
  Eigen::Index sel_size = 50;
  int sel_random = 20;
  int sel_iterations = TrainOptions{}.iterations;
  auto* c_select = app.add_subcommand("select", "Greedy forward selection curve (CSV)");
  add_common(c_select, sel);
  c_select->add_option("--kind", sel_kind, "Feature kind");
  c_select->add_option("--risk", sel_risk, "pred, gen or norm");
  c_select->add_option("--kernel", sel_kernel, "m12, m32 or rbf");
  c_select->add_option("--subset-size", sel_size, "Subset size T")->check(CLI::PositiveNumber);
  c_select->add_option("--random-subsets", sel_random, "Random orders for comparison")->check(CLI::NonNegativeNumber);
  c_select->add_option("--iterations", sel_iterations, "Gradient steps")->check(CLI::NonNegativeNumber);
  c_select->callback([&] {
    run = [&] {
      GfsOptions o;
      o.feature = as_usage([&] { return parse_feature_kind(sel_kind); });
      o.risk = as_usage([&] { return parse_risk_kind(sel_risk); });
      o.nu = as_usage([&] { return parse_matern_nu(sel_kernel); });
      o.subset_size = sel_size;
      o.random_subsets = sel_random;
      o.seed = sel.seed;
      o.train.iterations = sel_iterations;
      const HrtfSet set = load_or_synth(sel);
      if (sel_size > set.size()) throw UsageError("--subset-size exceeds the number of directions");
      const GfsCurve c = run_gfs(set, o);
      spdlog::info("full-data error {:.3f} deg, 5 deg crossing at {}", c.full_error_deg, c.crossing5);
      write_output(sel.out, gfs_csv(c));
    };
  });

  // mog
  Common mog;
  int mog_components = kDefaultMogComponents;
  Eigen::Index mog_pcs = kDefaultPcaComponents;
  int mog_iterations = MogFitOptions{}.max_iterations;
  std::string prior_kernel = "rbf";
  int prior_iterations = TrainOptions{}.iterations;
  auto* c_mog = app.add_subcommand("mog", "Fit the generative model and the GP-SSLE prior of a population");
  add_common(c_mog, mog);
  c_mog->get_option("--data")->required();
  c_mog->add_option("--components", mog_components, "Mixture components")->check(CLI::PositiveNumber);
  c_mog->add_option("--pcs", mog_pcs, "Principal components")->check(CLI::PositiveNumber);
  c_mog->add_option("--max-iterations", mog_iterations, "EM iterations")->check(CLI::PositiveNumber);
  c_mog->add_option("--prior-kernel", prior_kernel, "Kernel of the GP-SSL models behind the prior");
  c_mog->add_option("--prior-iterations", prior_iterations, "Gradient steps per GP-SSL model")
      ->check(CLI::NonNegativeNumber);
  c_mog->callback([&] {
    run = [&] {
      const MaternNu nu = as_usage([&] { return parse_matern_nu(prior_kernel); });
      const auto population = load_sets(mog.data);
      MogFitOptions opt;
      opt.components = mog_components;
      opt.max_iterations = mog_iterations;
      opt.seed = mog.seed;
      const GenerativeFit g = fit_generative_model(population, mog_pcs, opt);
      spdlog::info("EM: {} iterations, converged {}", g.fit.log_likelihood.size(), g.fit.converged);
      TrainOptions train_opt;
      train_opt.iterations = prior_iterations;
      const Hyperparams prior =
          gp_ssle_prior_from_ssl(train_ssl_models(population, nu, 1.0 / 3.0, train_opt, mog.seed));
      fs::create_directories(mog.out);
      save_generative_model(g.model, fs::path(mog.out) / "generative.json");
      write_output((fs::path(mog.out) / "prior.json").string(), hyperparams_json(prior));
    };
  });

  // trial
  Common trial;
  WorldOptions world;
  TrialOptions topt;
  int targets_per_listener = 10;
  std::string trial_mode = "mean";
  int trial_components = kDefaultMogComponents;
  auto* c_trial = app.add_subcommand("trial", "Simulated active-learning trials on synthetic listeners (JSON)");
  add_common(c_trial, trial);
  c_trial->add_option("--population", world.population, "Subjects behind the generative model")
      ->check(CLI::PositiveNumber);
  c_trial->add_option("--listeners", world.listeners, "Simulated listeners")->check(CLI::PositiveNumber);
  c_trial->add_option("--targets", targets_per_listener, "Targets per listener")->check(CLI::PositiveNumber);
  c_trial->add_option("--rounds", topt.rounds, "Rounds T per target")->check(CLI::PositiveNumber);
  c_trial->add_option("--pool", topt.pool_size, "Candidate pool size")->check(CLI::PositiveNumber);
  c_trial->add_option("--components", trial_components, "Mixture components")->check(CLI::PositiveNumber);
  c_trial->add_option("--pcs", world.pca_components, "Principal components")->check(CLI::PositiveNumber);
  c_trial->add_option("--mode", trial_mode, "Listener mode: mean or sample");
  c_trial->add_flag("--own-rows", topt.include_listener_rows, "Add the listener's own HRTFs to each pool");
  c_trial->callback([&] {
    run = [&] {
      topt.mode = as_usage([&] { return parse_listener_mode(trial_mode); });
      topt.seed = trial.seed;
      world.seed = trial.seed;
      world.mog.components = trial_components;
      const TrialWorld w = build_trial_world(world);
      const TrialReport r = run_trials(w, targets_per_listener, topt);
      spdlog::info("mean initial error {:.2f} deg, mean best {:.2f} deg, ratio {:.3f}", r.mean_initial_error_deg,
                   r.mean_best_error_deg, r.improvement_ratio);
      write_output(trial.out, trial_json(r));
    };
  });

  // serve
  Common srv;
  std::string model_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  double duration = 1.0;
  auto* c_serve = app.add_subcommand("serve", "Run the listening-test HTTP service");
  add_common(c_serve, srv, false);
  c_serve->get_option("--data")->description("Session log directory (default $HRTFGP_DATA_DIR or ./sessions)");
  c_serve->add_option("--model", model_dir, "Directory written by `hrtfgp mog`")->required();
  c_serve->add_option("--host", host, "Bind address");
  auto* port_opt = c_serve->add_option("--port", port, "Port (default $HRTFGP_PORT or 8080)")->check(CLI::Range(0, 65535));
  c_serve->add_option("--duration", duration, "Seconds of audio per query")->check(CLI::Range(0.1, 5.0));
  c_serve->callback([&] {
    run = [&] {
      ServiceConfig config;
      config.data_dir = "sessions";
      config.duration_s = duration;
      config = as_usage([&] { return apply_service_env(config); });
      if (!srv.data.empty()) config.data_dir = srv.data;
      const int p = port_opt->count() > 0 ? port : as_usage([] { return service_port_from_env(8080); });
      GenerativeModel model = load_generative_model(fs::path(model_dir) / "generative.json");
      Hyperparams prior = parse_hyperparams_json(container::read_text_file(fs::path(model_dir) / "prior.json"));
      SessionStore store(config, std::move(model), std::move(prior));
      store.rehydrate();
      if (!serve_forever(store, host, p)) throw IoError(fmt::format("cannot listen on {}:{}", host, p));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    run();
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    fmt::print(stderr, "Run with --help for usage.\n");
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
