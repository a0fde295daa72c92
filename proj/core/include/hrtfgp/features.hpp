#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hrtfgp/dataset.hpp"

namespace hrtfgp {

// Source-invariant binaural features.
enum class FeatureKind {
  lmr,  // log(|H_L| / |H_R| + 1)
  pd,   // wrapped phase difference
  amr,  // 2 |H_L| / (|H_L| + |H_R|)
  mp,   // [|H_L|, |H_R|]
};

std::string_view to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view name);
inline constexpr FeatureKind kAllFeatureKinds[] = {FeatureKind::lmr, FeatureKind::pd,
                                                   FeatureKind::amr, FeatureKind::mp};

struct FeatureMatrix {
  FeatureKind kind = FeatureKind::mp;
  Eigen::MatrixXd X;            // N x D' (D' = 2D for MP)
  Eigen::MatrixXd Y;            // N x 3 unit directions
  Eigen::VectorXd frequencies;  // D
};

// `eps` floors the denominators. Without it, 1e-6 times the largest magnitude
// in the set is used.
FeatureMatrix extract_features(const HrtfSet& set, FeatureKind kind, double eps);
FeatureMatrix extract_features(const HrtfSet& set, FeatureKind kind);

// Minimum-phase impulse response of length n_fft for a magnitude response
// sampled at D bins that span [0, Nyquist] uniformly. The input is floored at
// 1e-6 of its maximum, log-linearly interpolated onto a 32 n_fft point grid
// and folded through the real cepstrum. The truncated response is then
// corrected at the D bins by a few fixed-point passes on the log target.
Eigen::VectorXd min_phase_ir(const Eigen::VectorXd& magnitude, int n_fft);

// Magnitude of the discrete-time Fourier transform of `ir` at normalized
// angular frequency omega (radians per sample).
double dtft_magnitude(const Eigen::VectorXd& ir, double omega);

struct StereoSignal {
  std::vector<double> left;
  std::vector<double> right;
  double sample_rate = 44100.0;
  // Factor that was applied to reach the 0.9 joint peak.
  double normalization_gain = 1.0;
};

// White Gaussian noise from `noise_seed`, filtered by the minimum-phase
// responses of the two halves of an MP row, jointly peak-normalized to 0.9.
StereoSignal render_binaural(const Eigen::VectorXd& mp_row, std::uint64_t noise_seed,
                             double duration_s, double sample_rate);

// Independent white noise in each ear, peak-normalized to 0.9. The dry
// reference played alternately with the rendered query.
StereoSignal render_reference_noise(std::uint64_t noise_seed, double duration_s,
                                    double sample_rate);

// 16-bit PCM stereo RIFF/WAVE encoding.
std::string encode_wav(const StereoSignal& signal);

}  // namespace hrtfgp
