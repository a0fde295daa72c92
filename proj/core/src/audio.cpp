#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <numbers>
#include <random>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "hrtfgp/error.hpp"
#include "hrtfgp/features.hpp"

namespace hrtfgp {

namespace {

using Complex = std::complex<double>;

int default_fft_size(Eigen::Index bins) {
  int n = 512;
  while (n < 2 * bins) n *= 2;
  return n;
}

std::vector<double> white_noise(std::mt19937_64& rng, std::size_t samples) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(samples);
  for (double& v : x) v = normal(rng);
  return x;
}

std::vector<double> convolve_truncated(const std::vector<double>& x, const Eigen::VectorXd& h) {
  std::vector<double> y(x.size(), 0.0);
  const auto taps = static_cast<std::size_t>(h.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    const std::size_t kmax = std::min(taps, n + 1);
    double acc = 0.0;
    for (std::size_t k = 0; k < kmax; ++k) acc += h[static_cast<Eigen::Index>(k)] * x[n - k];
    y[n] = acc;
  }
  return y;
}

void peak_normalize(StereoSignal& s) {
  double peak = 0.0;
  for (double v : s.left) peak = std::max(peak, std::abs(v));
  for (double v : s.right) peak = std::max(peak, std::abs(v));
  s.normalization_gain = peak > 0.0 ? 0.9 / peak : 1.0;
  for (double& v : s.left) v *= s.normalization_gain;
  for (double& v : s.right) v *= s.normalization_gain;
}

void check_render_args(double duration_s, double sample_rate) {
  if (!(duration_s >= 0.1 && duration_s <= 5.0)) {
    throw InvalidArgument("duration must lie in [0.1, 5] s");
  }
  if (!(sample_rate >= 8000.0)) throw InvalidArgument("sample rate must be >= 8000 Hz");
}

}  // namespace

namespace {

// Minimum-phase spectrum by real-cepstrum folding on a grid of n points,
// returning the first `taps` samples of its impulse response.
Eigen::VectorXd cepstral_min_phase(const Eigen::ArrayXd& log_mag, int n, int taps) {
  const Eigen::Index d = log_mag.size();
  const int half = n / 2;
  std::vector<Complex> spectrum(static_cast<std::size_t>(n));
  for (int j = 0; j <= half; ++j) {
    const double pos = static_cast<double>(j) * static_cast<double>(d - 1) / half;
    const auto lo = std::min(static_cast<Eigen::Index>(pos), d - 2);
    const double t = pos - static_cast<double>(lo);
    const double v = (1.0 - t) * log_mag[lo] + t * log_mag[lo + 1];
    spectrum[static_cast<std::size_t>(j)] = v;
    if (j > 0 && j < half) spectrum[static_cast<std::size_t>(n - j)] = v;
  }

  Eigen::FFT<double> fft;
  std::vector<Complex> cepstrum;
  fft.inv(cepstrum, spectrum);

  // Fold the anti-causal half of the cepstrum onto the causal half.
  std::vector<Complex> folded(static_cast<std::size_t>(n), Complex(0.0, 0.0));
  folded[0] = cepstrum[0].real();
  for (int j = 1; j < half; ++j) folded[static_cast<std::size_t>(j)] = 2.0 * cepstrum[j].real();
  folded[static_cast<std::size_t>(half)] = cepstrum[static_cast<std::size_t>(half)].real();

  std::vector<Complex> log_spec;
  fft.fwd(log_spec, folded);
  for (auto& c : log_spec) c = std::exp(c);
  std::vector<Complex> ir;
  fft.inv(ir, log_spec);

  Eigen::VectorXd out(taps);
  for (int j = 0; j < taps; ++j) out[j] = ir[static_cast<std::size_t>(j)].real();
  return out;
}

}  // namespace

Eigen::VectorXd min_phase_ir(const Eigen::VectorXd& magnitude, int n_fft) {
  const Eigen::Index d = magnitude.size();
  if (d < 2) throw InvalidArgument("magnitude needs at least two bins");
  if (n_fft < 2 * d || !std::has_single_bit(static_cast<unsigned>(n_fft))) {
    throw InvalidArgument("n_fft must be a power of two >= 2D");
  }
  if (!magnitude.allFinite() || (magnitude.array() < 0.0).any()) {
    throw InvalidArgument("magnitude must be finite and nonnegative");
  }
  const double peak = magnitude.maxCoeff();
  if (!(peak > 0.0)) throw InvalidArgument("magnitude is identically zero");

  const Eigen::ArrayXd target = magnitude.array().max(1e-6 * peak).log();
  const int fine = 32 * n_fft;
  Eigen::ArrayXd log_mag = target;
  Eigen::VectorXd h = cepstral_min_phase(log_mag, fine, n_fft);

  // Truncating to n_fft taps perturbs the response at the input bins; feed
  // the residual back into the target a few times.
  for (int it = 0; it < 8; ++it) {
    double worst = 0.0;
    Eigen::ArrayXd residual(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      const double omega = std::numbers::pi * static_cast<double>(k) / static_cast<double>(d - 1);
      const double got = std::max(dtft_magnitude(h, omega), 1e-12 * peak);
      residual[k] = target[k] - std::log(got);
      worst = std::max(worst, std::abs(residual[k]));
    }
    if (worst < 1e-6) break;
    log_mag += residual;
    h = cepstral_min_phase(log_mag, fine, n_fft);
  }
  return h;
}

double dtft_magnitude(const Eigen::VectorXd& ir, double omega) {
  Complex acc(0.0, 0.0);
  for (Eigen::Index n = 0; n < ir.size(); ++n) {
    acc += ir[n] * std::polar(1.0, -omega * static_cast<double>(n));
  }
  return std::abs(acc);
}

StereoSignal render_binaural(const Eigen::VectorXd& mp_row, std::uint64_t noise_seed,
                             double duration_s, double sample_rate) {
  check_render_args(duration_s, sample_rate);
  if (mp_row.size() < 4 || mp_row.size() % 2 != 0) {
    throw InvalidArgument("MP row must hold two equal halves");
  }
  const Eigen::Index d = mp_row.size() / 2;
  const int n_fft = default_fft_size(d);
  const Eigen::VectorXd h_left = min_phase_ir(mp_row.head(d), n_fft);
  const Eigen::VectorXd h_right = min_phase_ir(mp_row.tail(d), n_fft);

  std::mt19937_64 rng(noise_seed);
  const auto samples = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  const std::vector<double> source = white_noise(rng, samples);

  StereoSignal out;
  out.sample_rate = sample_rate;
  out.left = convolve_truncated(source, h_left);
  out.right = convolve_truncated(source, h_right);
  peak_normalize(out);
  return out;
}

StereoSignal render_reference_noise(std::uint64_t noise_seed, double duration_s,
                                    double sample_rate) {
  check_render_args(duration_s, sample_rate);
  std::mt19937_64 rng(noise_seed);
  const auto samples = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  StereoSignal out;
  out.sample_rate = sample_rate;
  out.left = white_noise(rng, samples);
  out.right = white_noise(rng, samples);
  peak_normalize(out);
  return out;
}

std::string encode_wav(const StereoSignal& signal) {
  if (signal.left.size() != signal.right.size()) throw InvalidArgument("channel length mismatch");
  const auto frames = static_cast<std::uint32_t>(signal.left.size());
  const auto rate = static_cast<std::uint32_t>(std::lround(signal.sample_rate));
  constexpr std::uint16_t kChannels = 2;
  constexpr std::uint16_t kBits = 16;
  const std::uint32_t data_bytes = frames * kChannels * (kBits / 8);

  std::string out;
  out.reserve(44 + data_bytes);
  auto put_u32 = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto put_u16 = [&out](std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
  };
  auto put_sample = [&put_u16](double x) {
    const double clamped = std::clamp(x, -1.0, 1.0);
    const auto s = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
    put_u16(static_cast<std::uint16_t>(s));
  };
  out += "RIFF";
  put_u32(36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(kChannels);
  put_u32(rate);
  put_u32(rate * kChannels * (kBits / 8));
  put_u16(kChannels * (kBits / 8));
  put_u16(kBits);
  out += "data";
  put_u32(data_bytes);
  for (std::uint32_t i = 0; i < frames; ++i) {
    put_sample(signal.left[i]);
    put_sample(signal.right[i]);
  }
  return out;
}

}  // namespace hrtfgp
