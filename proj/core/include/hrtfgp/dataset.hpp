#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hrtfgp/direction.hpp"

namespace hrtfgp {

// Direction-indexed left/right ear spectra of one subject.
//
// Storage is single precision because that is what the on-disk container holds;
// keeping the in-memory form identical makes import/export an exact round trip.
// Directions are kept as f32 rows and re-normalized in double by direction().
struct HrtfSet {
  std::string subject_id;
  double sample_rate_hz = 44100.0;
  Eigen::VectorXf frequencies;  // D bins, Hz, strictly increasing
  Eigen::MatrixXf directions;   // N x 3
  Eigen::MatrixXf left_mag;     // N x D, linear magnitude
  Eigen::MatrixXf right_mag;
  Eigen::MatrixXf left_phase;   // N x D, radians in (-pi, pi]
  Eigen::MatrixXf right_phase;

  Eigen::Index size() const { return directions.rows(); }
  Eigen::Index bins() const { return frequencies.size(); }
  Direction direction(Eigen::Index i) const;

  // Throws InvalidArgument naming the first violated invariant.
  void validate() const;

  bool operator==(const HrtfSet& other) const;
};

enum class GridScheme { cipic_like, equiangular, fibonacci };

struct SphericalGrid {
  std::vector<Direction> directions;
  GridScheme scheme = GridScheme::fibonacci;

  // Rejects grids with two directions closer than 1e-6 rad.
  void validate() const;
};

// 25 lateral angles x 50 polar angles in interaural-polar coordinates:
// lateral angles {-80,-65,-55,-45,-40,...,40,45,55,65,80} degrees (positive
// towards the left ear) and polar angles -45 + 5.625 k degrees, k = 0..49,
// sweeping front, over the top and down the back. N = 1250.
SphericalGrid cipic_like_grid();

// n_azimuth equally spaced azimuths times n_elevation elevations strictly
// between the poles, plus one point at each pole.
SphericalGrid equiangular_grid(int n_azimuth, int n_elevation);

// Golden-angle spiral with n nearly uniform points.
SphericalGrid fibonacci_grid(int n);

// Closed-form head model parameters.
//
// Per ear the magnitude is the product of
//  * a rigid-sphere head shadow (single-pole/single-zero approximation whose
//    zero moves with the angle between source and ear axis),
//  * two pinna notches whose centre frequencies rise with elevation and
//    towards the back,
//  * a high-shelf that attenuates sources behind the head,
//  * a torso reflection comb |1 + g exp(-j 2 pi f tau)| with a delay that grows
//    for sources below the horizon,
//  * a seeded log-magnitude perturbation, smooth over frequency (a random
//    cosine series whose coefficients hash the ear-relative direction).
//    noise_terms = 0 switches to independent noise per bin.
// The phase is the pure propagation delay of the sphere model. The right ear
// evaluates the left-ear model at the mirrored direction, so median-plane
// sources are bit-identical in both ears.
struct SphereModelParams {
  double head_radius = 0.0875;  // meters
  double ear_back = 0.10;       // ear axis tilt towards the back
  double ear_down = 0.05;       // ear axis tilt downwards
  double notch_hz = 7000.0;
  double second_notch_hz = 10500.0;
  double notch_sweep_hz = 3500.0;
  double notch_depth = 0.7;
  double notch_bandwidth_hz = 700.0;
  double shelf_hz = 4000.0;
  double torso_delay_s = 0.2e-3;
  double torso_delay_span_s = 0.6e-3;
  double torso_gain = 0.3;
  double measurement_noise = 0.15;  // log-magnitude standard deviation
  int noise_terms = 12;             // cosine terms over frequency; 0 = white per bin
  std::uint64_t noise_seed = 0;
};

inline constexpr double kDefaultSampleRate = 44100.0;
inline constexpr int kDefaultBins = 64;
inline constexpr double kDefaultHeadRadius = 0.0875;

// D bins linearly spaced over [0, sample_rate / 2].
HrtfSet synth_sphere_hrtf(const SphericalGrid& grid, double head_radius, int bins,
                          double sample_rate);
HrtfSet synth_sphere_hrtf(const SphericalGrid& grid, const SphereModelParams& params, int bins,
                          double sample_rate, std::string subject_id = "sphere");

// A population of synthetic subjects with seeded, jittered model parameters
// (head radius, ear placement, notch and torso geometry, noise seed).
std::vector<SphereModelParams> synth_population_params(int count, std::uint64_t seed);

void export_hrtf(const HrtfSet& set, const std::filesystem::path& manifest_path);
HrtfSet import_hrtf(const std::filesystem::path& manifest_path);

// Long-format CSV, one row per direction and frequency bin:
//
//   azimuth_deg,elevation_deg,frequency_hz,left_mag,left_phase,right_mag,right_phase
//
// Directions are taken in order of first appearance. Every direction must list
// the same increasing frequencies. Magnitudes are linear, phases in radians.
HrtfSet hrtf_from_csv(std::string_view text, const std::string& subject_id, double sample_rate_hz);

}  // namespace hrtfgp
