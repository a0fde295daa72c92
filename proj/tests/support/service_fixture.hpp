#pragma once

#include <vector>

#include "hrtfgp/active.hpp"
#include "hrtfgp/dataset.hpp"
#include "hrtfgp/features.hpp"
#include "hrtfgp/gp.hpp"
#include "hrtfgp/mog.hpp"

namespace hrtfgp::testing {

// A small generative model, cheap enough to rebuild per test binary.
inline const GenerativeModel& tiny_generative_model() {
  static const GenerativeModel model = [] {
    const auto params = synth_population_params(2, 11);
    std::vector<HrtfSet> population;
    for (std::size_t i = 0; i < params.size(); ++i) {
      population.push_back(synth_sphere_hrtf(equiangular_grid(12, 6), params[i], 16, kDefaultSampleRate));
    }
    MogFitOptions opt;
    opt.components = 3;
    opt.seed = 5;
    return fit_generative_model(population, 4, opt).model;
  }();
  return model;
}

inline Hyperparams tiny_prior() {
  const HrtfSet s = synth_sphere_hrtf(equiangular_grid(12, 6), SphereModelParams{}, 16, kDefaultSampleRate);
  const FeatureMatrix f = extract_features(s, FeatureKind::mp);
  Hyperparams h = initial_hyperparams(MaternNu::inf, f.X, f.Y);
  h.noise_sd = kGpSsleNoise;
  return h;
}

}  // namespace hrtfgp::testing
