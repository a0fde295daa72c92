#include "hrtfgp/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <complex>
#include <numbers>
#include <map>
#include <random>

#include <Eigen/Geometry>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "hrtfgp/container.hpp"
#include "hrtfgp/error.hpp"

namespace hrtfgp {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSpeedOfSound = 343.0;
constexpr double kMinSeparation = 1e-6;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Standard normal variate that depends only on (direction, bin, seed).
double hashed_normal(const Eigen::Vector3d& s, int bin, std::uint64_t seed) {
  std::uint64_t h = splitmix64(seed);
  for (int c = 0; c < 3; ++c) {
    h = splitmix64(h ^ static_cast<std::uint64_t>(std::llround(s[c] * 1e9)));
  }
  h = splitmix64(h ^ static_cast<std::uint64_t>(bin));
  const std::uint64_t h2 = splitmix64(h);
  const double u1 = (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(h2 >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

struct EarResponse {
  Eigen::VectorXd magnitude;
  Eigen::VectorXd phase;
};

// Left-ear model; the right ear is evaluated at the mirrored direction.
EarResponse left_ear(const Eigen::Vector3d& s, const Eigen::VectorXd& freqs,
                     const SphereModelParams& p) {
  const Eigen::Vector3d ear = Eigen::Vector3d(1.0, -p.ear_back, -p.ear_down).normalized();
  const double theta = std::acos(std::clamp(s.dot(ear), -1.0, 1.0));

  // Head shadow zero position.
  constexpr double kAlphaMin = 0.1;
  constexpr double kThetaMin = 150.0 * kPi / 180.0;
  const double alpha =
      (1.0 + kAlphaMin / 2.0) + (1.0 - kAlphaMin / 2.0) * std::cos(theta / kThetaMin * kPi);
  const double w0 = kSpeedOfSound / p.head_radius;

  // Propagation delay around the sphere, relative to the head centre.
  const double a_over_c = p.head_radius / kSpeedOfSound;
  const double delay = theta < kPi / 2 ? -a_over_c * std::cos(theta) : a_over_c * (theta - kPi / 2);

  const double y = s.y();
  const double z = s.z();
  const double rho = std::sqrt(y * y + z * z);
  const double notch_pos = (z + (1.0 - y)) / 3.0;
  const double f1 = p.notch_hz + p.notch_sweep_hz * notch_pos;
  const double f2 = p.second_notch_hz + 1.4 * p.notch_sweep_hz * notch_pos;
  const double shelf_gain = 0.75 + 0.25 * y;
  const double torso_delay = p.torso_delay_s + p.torso_delay_span_s * (1.0 - z) / 2.0 - 0.1e-3 * y;

  // Log-magnitude perturbation: unit-variance white noise per bin, or a random
  // cosine series over frequency when noise_terms > 0.
  Eigen::VectorXd noise = Eigen::VectorXd::Zero(freqs.size());
  if (p.measurement_noise > 0.0) {
    const auto nbins = static_cast<double>(freqs.size());
    if (p.noise_terms <= 0) {
      for (Eigen::Index k = 0; k < freqs.size(); ++k)
        noise[k] = hashed_normal(s, static_cast<int>(k), p.noise_seed);
    } else {
      const double norm = std::sqrt(2.0 / p.noise_terms);
      for (int j = 1; j <= p.noise_terms; ++j) {
        const double c = norm * hashed_normal(s, -j, p.noise_seed);
        for (Eigen::Index k = 0; k < freqs.size(); ++k)
          noise[k] += c * std::cos(j * kPi * (static_cast<double>(k) + 0.5) / nbins);
      }
    }
  }

  EarResponse out{Eigen::VectorXd(freqs.size()), Eigen::VectorXd(freqs.size())};
  for (Eigen::Index k = 0; k < freqs.size(); ++k) {
    const double f = freqs[k];
    const double q = 2.0 * kPi * f / (2.0 * w0);
    const double shadow = std::sqrt((1.0 + alpha * alpha * q * q) / (1.0 + q * q));
    const double d1 = (f - f1) / p.notch_bandwidth_hz;
    const double d2 = (f - f2) / p.notch_bandwidth_hz;
    const double notch = (1.0 - p.notch_depth * rho * std::exp(-d1 * d1)) *
                         (1.0 - 0.5 * p.notch_depth * rho * std::exp(-d2 * d2));
    const double fs = f / p.shelf_hz;
    const double shelf = std::sqrt((1.0 + shelf_gain * shelf_gain * fs * fs) / (1.0 + fs * fs));
    const double torso =
        std::abs(1.0 + p.torso_gain * std::polar(1.0, -2.0 * kPi * f * torso_delay));
    double mag = shadow * notch * shelf * torso;
    if (p.measurement_noise > 0.0) {
      mag *= std::exp(p.measurement_noise * noise[k]);
    }
    out.magnitude[k] = mag;
    out.phase[k] = wrap_angle(-2.0 * kPi * f * delay);
  }
  return out;
}

double separation(const Direction& a, const Direction& b) {
  return std::atan2(a.vector().cross(b.vector()).norm(), a.vector().dot(b.vector()));
}

template <typename Derived>
std::vector<float> row_major(const Eigen::MatrixBase<Derived>& m) {
  std::vector<float> out(static_cast<std::size_t>(m.rows() * m.cols()));
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[i++] = m(r, c);
  return out;
}

Eigen::MatrixXf from_row_major(const std::vector<float>& v, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXf m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[i++];
  return m;
}

void require_finite(const std::vector<float>& v, const std::string& field) {
  for (float x : v) {
    if (!std::isfinite(x)) throw FormatError(field, "contains non-finite values");
  }
}

}  // namespace

Direction HrtfSet::direction(Eigen::Index i) const {
  return Direction::normalized(directions(i, 0), directions(i, 1), directions(i, 2));
}

void HrtfSet::validate() const {
  const Eigen::Index n = size();
  const Eigen::Index d = bins();
  if (subject_id.empty()) throw InvalidArgument("subject_id is empty");
  if (n < 1) throw InvalidArgument("HRTF set has no directions");
  if (d < 2) throw InvalidArgument("HRTF set needs at least two frequency bins");
  if (directions.cols() != 3) throw InvalidArgument("directions must be N x 3");
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    throw InvalidArgument("sample_rate_hz must be positive");
  }
  for (const auto* m : {&left_mag, &right_mag, &left_phase, &right_phase}) {
    if (m->rows() != n || m->cols() != d) throw InvalidArgument("spectra must be N x D");
    if (!m->allFinite()) throw InvalidArgument("spectra contain non-finite values");
  }
  if (!frequencies.allFinite() || frequencies[0] < 0.0f) {
    throw InvalidArgument("frequencies must be finite and start at >= 0");
  }
  for (Eigen::Index k = 1; k < d; ++k) {
    if (!(frequencies[k] > frequencies[k - 1])) {
      throw InvalidArgument("frequencies must be strictly increasing");
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = directions.row(i).cast<double>().norm();
    if (!(std::abs(norm - 1.0) < 1e-6)) throw InvalidArgument("direction rows must be unit vectors");
  }
  for (const auto* m : {&left_mag, &right_mag}) {
    if ((m->array() < 0.0f).any()) throw InvalidArgument("magnitudes must be nonnegative");
    if ((m->rowwise().maxCoeff().array() <= 0.0f).any()) {
      throw InvalidArgument("magnitude row is identically zero");
    }
  }
  constexpr double kPhaseSlack = 1e-6;
  for (const auto* m : {&left_phase, &right_phase}) {
    if ((m->array().cast<double>().abs() > kPi + kPhaseSlack).any()) {
      throw InvalidArgument("phases must lie in (-pi, pi]");
    }
  }
}

bool HrtfSet::operator==(const HrtfSet& o) const {
  return subject_id == o.subject_id && sample_rate_hz == o.sample_rate_hz &&
         frequencies == o.frequencies && directions == o.directions && left_mag == o.left_mag &&
         right_mag == o.right_mag && left_phase == o.left_phase && right_phase == o.right_phase;
}

void SphericalGrid::validate() const {
  for (std::size_t i = 0; i < directions.size(); ++i) {
    for (std::size_t j = i + 1; j < directions.size(); ++j) {
      if (separation(directions[i], directions[j]) < kMinSeparation) {
        throw InvalidArgument("grid directions " + std::to_string(i) + " and " + std::to_string(j) +
                              " are closer than 1e-6 rad");
      }
    }
  }
}

SphericalGrid cipic_like_grid() {
  static constexpr double kLateral[] = {-80, -65, -55, -45, -40, -35, -30, -25, -20,
                                        -15, -10, -5,  0,   5,   10,  15,  20,  25,
                                        30,  35,  40,  45,  55,  65,  80};
  SphericalGrid grid;
  grid.scheme = GridScheme::cipic_like;
  grid.directions.reserve(1250);
  for (double lat_deg : kLateral) {
    const double lat = deg_to_rad(lat_deg);
    for (int k = 0; k < 50; ++k) {
      const double pol = deg_to_rad(-45.0 + 5.625 * k);
      grid.directions.push_back(Direction::normalized(
          std::sin(lat), std::cos(lat) * std::cos(pol), std::cos(lat) * std::sin(pol)));
    }
  }
  return grid;
}

SphericalGrid equiangular_grid(int n_azimuth, int n_elevation) {
  if (n_azimuth < 1 || n_elevation < 1) throw InvalidArgument("grid sizes must be positive");
  SphericalGrid grid;
  grid.scheme = GridScheme::equiangular;
  grid.directions.push_back(Direction::unit(0.0, 0.0, -1.0));
  for (int e = 0; e < n_elevation; ++e) {
    const double el = -kPi / 2 + kPi * (e + 1) / (n_elevation + 1);
    for (int a = 0; a < n_azimuth; ++a) {
      const double az = -kPi + 2.0 * kPi * (a + 1) / n_azimuth;
      grid.directions.push_back(Direction::from_angles(az, el));
    }
  }
  grid.directions.push_back(Direction::unit(0.0, 0.0, 1.0));
  return grid;
}

SphericalGrid fibonacci_grid(int n) {
  if (n < 1) throw InvalidArgument("grid size must be positive");
  SphericalGrid grid;
  grid.scheme = GridScheme::fibonacci;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    grid.directions.push_back(Direction::normalized(r * std::sin(phi), r * std::cos(phi), z));
  }
  return grid;
}

HrtfSet synth_sphere_hrtf(const SphericalGrid& grid, double head_radius, int bins,
                          double sample_rate) {
  SphereModelParams params;
  params.head_radius = head_radius;
  return synth_sphere_hrtf(grid, params, bins, sample_rate);
}

HrtfSet synth_sphere_hrtf(const SphericalGrid& grid, const SphereModelParams& params, int bins,
                          double sample_rate, std::string subject_id) {
  if (!(params.head_radius >= 0.05 && params.head_radius <= 0.15)) {
    throw InvalidArgument("head_radius must lie in [0.05, 0.15] m");
  }
  if (bins < 16) throw InvalidArgument("at least 16 frequency bins are required");
  if (!(sample_rate >= 8000.0)) throw InvalidArgument("sample_rate must be >= 8000 Hz");
  if (grid.directions.empty()) throw InvalidArgument("grid is empty");
  grid.validate();

  const auto n = static_cast<Eigen::Index>(grid.directions.size());
  Eigen::VectorXd freqs = Eigen::VectorXd::LinSpaced(bins, 0.0, sample_rate / 2.0);

  HrtfSet set;
  set.subject_id = std::move(subject_id);
  set.sample_rate_hz = sample_rate;
  set.frequencies = freqs.cast<float>();
  set.directions.resize(n, 3);
  set.left_mag.resize(n, bins);
  set.right_mag.resize(n, bins);
  set.left_phase.resize(n, bins);
  set.right_phase.resize(n, bins);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Direction& dir = grid.directions[static_cast<std::size_t>(i)];
    set.directions.row(i) = dir.vector().cast<float>().transpose();
    const EarResponse left = left_ear(dir.vector(), freqs, params);
    const EarResponse right = left_ear(dir.mirrored().vector(), freqs, params);
    set.left_mag.row(i) = left.magnitude.cast<float>().transpose();
    set.right_mag.row(i) = right.magnitude.cast<float>().transpose();
    set.left_phase.row(i) = left.phase.cast<float>().transpose();
    set.right_phase.row(i) = right.phase.cast<float>().transpose();
  }
  set.validate();
  return set;
}

std::vector<SphereModelParams> synth_population_params(int count, std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("population size must be positive");
  std::mt19937_64 rng(seed);
  auto jitter = [&rng](double centre, double rel) {
    std::uniform_real_distribution<double> u(1.0 - rel, 1.0 + rel);
    return centre * u(rng);
  };
  std::vector<SphereModelParams> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SphereModelParams p;
    p.head_radius = jitter(0.0875, 0.15);
    p.ear_back = jitter(0.10, 0.5);
    p.ear_down = jitter(0.05, 0.5);
    p.notch_hz = jitter(7000.0, 0.12);
    p.second_notch_hz = jitter(10500.0, 0.10);
    p.notch_sweep_hz = jitter(3500.0, 0.2);
    p.notch_depth = jitter(0.7, 0.2);
    p.notch_bandwidth_hz = jitter(700.0, 0.2);
    p.shelf_hz = jitter(4000.0, 0.2);
    p.torso_delay_s = jitter(0.2e-3, 0.3);
    p.torso_delay_span_s = jitter(0.6e-3, 0.2);
    p.torso_gain = jitter(0.3, 0.3);
    p.noise_seed = rng();
    out.push_back(p);
  }
  return out;
}

void export_hrtf(const HrtfSet& set, const std::filesystem::path& manifest_path) {
  set.validate();
  namespace fs = std::filesystem;
  const fs::path dir = manifest_path.has_parent_path() ? manifest_path.parent_path() : fs::path(".");
  if (!fs::is_directory(dir)) throw IoError("destination directory does not exist: " + dir.string());
  const std::string stem = manifest_path.stem().string();

  nlohmann::json blobs;
  auto write = [&](const std::string& field, const std::vector<float>& values) {
    const std::string name = stem + "." + field + ".f32";
    container::write_f32_blob(dir / name, values);
    blobs[field] = name;
  };
  write("frequencies", std::vector<float>(set.frequencies.data(),
                                          set.frequencies.data() + set.frequencies.size()));
  write("left_mag", row_major(set.left_mag));
  write("right_mag", row_major(set.right_mag));
  write("left_phase", row_major(set.left_phase));
  write("right_phase", row_major(set.right_phase));
  write("directions", row_major(set.directions));

  nlohmann::json manifest = {{"subject_id", set.subject_id},
                             {"n", set.size()},
                             {"d", set.bins()},
                             {"sample_rate_hz", set.sample_rate_hz},
                             {"blobs", blobs}};
  container::write_file_atomic(manifest_path, manifest.dump(2) + "\n");
}

HrtfSet import_hrtf(const std::filesystem::path& manifest_path) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(container::read_text_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest", e.what());
  }
  auto get = [&](const char* key) -> const nlohmann::json& {
    if (!manifest.contains(key)) throw FormatError(key, "missing from manifest");
    return manifest.at(key);
  };
  HrtfSet set;
  Eigen::Index n = 0;
  Eigen::Index d = 0;
  try {
    set.subject_id = get("subject_id").get<std::string>();
    n = get("n").get<Eigen::Index>();
    d = get("d").get<Eigen::Index>();
    set.sample_rate_hz = get("sample_rate_hz").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest", e.what());
  }
  if (n < 1) throw FormatError("n", "must be positive");
  if (d < 2) throw FormatError("d", "must be at least 2");
  const auto& blobs = get("blobs");
  const std::filesystem::path dir = manifest_path.parent_path();
  auto load = [&](const std::string& field, Eigen::Index expected) {
    if (!blobs.contains(field)) throw FormatError(field, "missing from blobs");
    auto values = container::read_f32_blob(dir / blobs.at(field).get<std::string>(), field);
    if (static_cast<Eigen::Index>(values.size()) != expected) {
      throw FormatError(field, "expected " + std::to_string(expected) + " values, found " +
                                   std::to_string(values.size()));
    }
    require_finite(values, field);
    return values;
  };
  const auto freqs = load("frequencies", d);
  set.frequencies = Eigen::Map<const Eigen::VectorXf>(freqs.data(), d);
  set.left_mag = from_row_major(load("left_mag", n * d), n, d);
  set.right_mag = from_row_major(load("right_mag", n * d), n, d);
  set.left_phase = from_row_major(load("left_phase", n * d), n, d);
  set.right_phase = from_row_major(load("right_phase", n * d), n, d);
  set.directions = from_row_major(load("directions", n * 3), n, 3);
  set.validate();
  return set;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace

HrtfSet hrtf_from_csv(std::string_view text, const std::string& subject_id, double sample_rate_hz) {
  static constexpr const char* kColumns[] = {"azimuth_deg", "elevation_deg", "frequency_hz", "left_mag",
                                             "left_phase",  "right_mag",     "right_phase"};
  struct Bin {
    double f, lm, lp, rm, rp;
  };
  std::vector<std::pair<double, double>> order;
  std::map<std::pair<double, double>, std::vector<Bin>> rows;

  std::size_t line_no = 0;
  bool header = true;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    const std::string where = "line " + std::to_string(line_no);
    if (cells.size() != 7) throw FormatError(where, "expected 7 columns");
    if (header) {
      for (std::size_t c = 0; c < 7; ++c) {
        if (cells[c] != kColumns[c]) throw FormatError(where, "unexpected header column '" + std::string(cells[c]) + "'");
      }
      header = false;
      continue;
    }
    double v[7];
    for (std::size_t c = 0; c < 7; ++c) {
      const auto r = std::from_chars(cells[c].data(), cells[c].data() + cells[c].size(), v[c]);
      if (r.ec != std::errc() || r.ptr != cells[c].data() + cells[c].size() || !std::isfinite(v[c])) {
        throw FormatError(where, std::string(kColumns[c]) + " is not a finite number");
      }
    }
    const std::pair<double, double> key{v[0], v[1]};
    auto [it, inserted] = rows.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back({v[2], v[3], v[4], v[5], v[6]});
  }
  if (header) throw FormatError("header", "missing");
  if (order.empty()) throw FormatError("rows", "no data rows");

  const std::vector<Bin>& first = rows.at(order.front());
  const auto n = static_cast<Eigen::Index>(order.size());
  const auto d = static_cast<Eigen::Index>(first.size());
  HrtfSet set;
  set.subject_id = subject_id;
  set.sample_rate_hz = sample_rate_hz;
  set.frequencies.resize(d);
  for (Eigen::Index k = 0; k < d; ++k) set.frequencies[k] = static_cast<float>(first[static_cast<std::size_t>(k)].f);
  set.directions.resize(n, 3);
  set.left_mag.resize(n, d);
  set.right_mag.resize(n, d);
  set.left_phase.resize(n, d);
  set.right_phase.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [az, el] = order[static_cast<std::size_t>(i)];
    const std::vector<Bin>& bins = rows.at(order[static_cast<std::size_t>(i)]);
    const std::string where = "direction (" + std::to_string(az) + ", " + std::to_string(el) + ")";
    if (static_cast<Eigen::Index>(bins.size()) != d) throw FormatError(where, "bin count differs from the first direction");
    if (az < -180.0 || az > 180.0 || el < -90.0 || el > 90.0) throw FormatError(where, "angles out of range");
    set.directions.row(i) = Direction::from_angles(deg_to_rad(az), deg_to_rad(el)).vector().cast<float>().transpose();
    for (Eigen::Index k = 0; k < d; ++k) {
      const Bin& b = bins[static_cast<std::size_t>(k)];
      if (static_cast<float>(b.f) != set.frequencies[k]) throw FormatError(where, "frequencies differ from the first direction");
      set.left_mag(i, k) = static_cast<float>(b.lm);
      set.left_phase(i, k) = static_cast<float>(b.lp);
      set.right_mag(i, k) = static_cast<float>(b.rm);
      set.right_phase(i, k) = static_cast<float>(b.rp);
    }
  }
  try {
    set.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError("csv", e.what());
  }
  return set;
}

}  // namespace hrtfgp
