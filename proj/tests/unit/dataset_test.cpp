#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "hrtfgp/container.hpp"
#include "hrtfgp/dataset.hpp"
#include "hrtfgp/error.hpp"
#include "support/oracles.hpp"

namespace hrtfgp {
namespace {

using testing::TempDir;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Grids, UnitNormAndSizes) {
  const SphericalGrid cipic = cipic_like_grid();
  EXPECT_EQ(cipic.directions.size(), 1250u);
  for (const SphericalGrid& g : {cipic, equiangular_grid(24, 11), fibonacci_grid(500)}) {
    EXPECT_NO_THROW(g.validate());
    for (const Direction& d : g.directions) EXPECT_NEAR(d.vector().norm(), 1.0, 1e-9);
  }
  EXPECT_EQ(equiangular_grid(24, 11).directions.size(), 24u * 11u + 2u);
}

TEST(Grids, DuplicateDirectionsRejected) {
  SphericalGrid g = fibonacci_grid(10);
  g.directions.push_back(g.directions.front());
  EXPECT_THROW(g.validate(), InvalidArgument);
  EXPECT_THROW(synth_sphere_hrtf(g, 0.0875, 64, 44100.0), InvalidArgument);
}

TEST(SynthSphere, Preconditions) {
  const SphericalGrid g = fibonacci_grid(20);
  EXPECT_THROW(synth_sphere_hrtf(g, 0.04, 64, 44100.0), InvalidArgument);
  EXPECT_THROW(synth_sphere_hrtf(g, 0.0875, 8, 44100.0), InvalidArgument);
  EXPECT_THROW(synth_sphere_hrtf(g, 0.0875, 64, 4000.0), InvalidArgument);
}

TEST(SynthSphere, LeftSourceIsLouderInLeftEarAboveOneKilohertz) {
  SphericalGrid g;
  g.directions = {Direction::unit(1, 0, 0)};
  const HrtfSet s = synth_sphere_hrtf(g, kDefaultHeadRadius, kDefaultBins, kDefaultSampleRate);
  for (Eigen::Index k = 0; k < s.bins(); ++k) {
    if (s.frequencies[k] > 1000.0) EXPECT_GE(s.left_mag(0, k), s.right_mag(0, k)) << k;
  }
}

TEST(SynthSphere, MedianPlaneIsSymmetric) {
  SphericalGrid g;
  for (double el = -1.2; el < 1.3; el += 0.3) {
    g.directions.push_back(Direction::from_angles(0.0, el));
    g.directions.push_back(Direction::from_angles(std::numbers::pi, el));
  }
  const HrtfSet s = synth_sphere_hrtf(g, kDefaultHeadRadius, kDefaultBins, kDefaultSampleRate);
  EXPECT_LE((s.left_mag - s.right_mag).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LE((s.left_phase - s.right_phase).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SynthSphere, Deterministic) {
  TempDir dir("synth");
  const SphericalGrid g = fibonacci_grid(40);
  const HrtfSet a = synth_sphere_hrtf(g, 0.09, 32, 44100.0);
  const HrtfSet b = synth_sphere_hrtf(g, 0.09, 32, 44100.0);
  export_hrtf(a, dir.path() / "a.json");
  export_hrtf(b, dir.path() / "b.json");
  for (const char* field : {"left_mag", "right_mag", "left_phase", "right_phase", "directions"}) {
    EXPECT_EQ(slurp(dir.path() / (std::string("a.") + field + ".f32")),
              slurp(dir.path() / (std::string("b.") + field + ".f32")));
  }
}

TEST(Container, RoundTripIsBitExact) {
  TempDir dir("rt");
  const HrtfSet set = synth_sphere_hrtf(cipic_like_grid(), kDefaultHeadRadius, kDefaultBins,
                                        kDefaultSampleRate);
  export_hrtf(set, dir.path() / "s.json");
  const HrtfSet back = import_hrtf(dir.path() / "s.json");
  EXPECT_TRUE(back == set);
  export_hrtf(back, dir.path() / "t.json");
  EXPECT_EQ(slurp(dir.path() / "s.left_mag.f32"), slurp(dir.path() / "t.left_mag.f32"));
  EXPECT_EQ(slurp(dir.path() / "s.directions.f32"), slurp(dir.path() / "t.directions.f32"));
}

TEST(Container, ManifestRecordsShape) {
  TempDir dir("shape");
  const HrtfSet set = synth_sphere_hrtf(cipic_like_grid(), kDefaultHeadRadius, 100, 44100.0);
  export_hrtf(set, dir.path() / "m.json");
  const std::string manifest = container::read_text_file(dir.path() / "m.json");
  EXPECT_NE(manifest.find("\"n\": 1250"), std::string::npos) << manifest;
  EXPECT_NE(manifest.find("\"d\": 100"), std::string::npos) << manifest;
}

TEST(Container, EmptySubjectRejected) {
  TempDir dir("empty");
  HrtfSet set = synth_sphere_hrtf(fibonacci_grid(8), kDefaultHeadRadius, 16, 44100.0);
  set.subject_id.clear();
  EXPECT_THROW(export_hrtf(set, dir.path() / "m.json"), InvalidArgument);
}

TEST(Container, UnwritablePathIsIoError) {
  const HrtfSet set = synth_sphere_hrtf(fibonacci_grid(8), kDefaultHeadRadius, 16, 44100.0);
  EXPECT_THROW(export_hrtf(set, "/proc/definitely/not/here/m.json"), IoError);
}

TEST(Container, ShortFrequencyBlobNamesField) {
  TempDir dir("short");
  const HrtfSet set = synth_sphere_hrtf(fibonacci_grid(8), kDefaultHeadRadius, 64, 44100.0);
  export_hrtf(set, dir.path() / "m.json");
  std::vector<float> f(set.frequencies.data(), set.frequencies.data() + 63);
  container::write_f32_blob(dir.path() / "m.frequencies.f32", f);
  try {
    import_hrtf(dir.path() / "m.json");
    FAIL() << "import accepted a short blob";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.field(), "frequencies");
    EXPECT_NE(std::string(e.what()).find("frequencies"), std::string::npos);
  }
}

TEST(Container, NanMagnitudeRejected) {
  TempDir dir("nan");
  HrtfSet set = synth_sphere_hrtf(fibonacci_grid(8), kDefaultHeadRadius, 16, 44100.0);
  export_hrtf(set, dir.path() / "m.json");
  std::vector<float> v(set.left_mag.size(), 1.0f);
  v[5] = std::nanf("");
  container::write_f32_blob(dir.path() / "m.left_mag.f32", v);
  EXPECT_THROW(import_hrtf(dir.path() / "m.json"), FormatError);
}

TEST(Population, SeededAndVaried) {
  const auto a = synth_population_params(5, 7);
  const auto b = synth_population_params(5, 7);
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].head_radius, b[i].head_radius);
    EXPECT_GE(a[i].head_radius, 0.05);
    EXPECT_LE(a[i].head_radius, 0.15);
  }
  EXPECT_NE(a[0].head_radius, a[1].head_radius);
}

std::string to_csv(const HrtfSet& set) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "azimuth_deg,elevation_deg,frequency_hz,left_mag,left_phase,right_mag,right_phase\n";
  for (Eigen::Index i = 0; i < set.size(); ++i) {
    const Direction d = set.direction(i);
    for (Eigen::Index k = 0; k < set.bins(); ++k) {
      out << rad_to_deg(d.azimuth()) << "," << rad_to_deg(d.elevation()) << "," << double(set.frequencies[k]) << ","
          << double(set.left_mag(i, k)) << "," << double(set.left_phase(i, k)) << "," << double(set.right_mag(i, k))
          << "," << double(set.right_phase(i, k)) << "\n";
    }
  }
  return out.str();
}

TEST(CsvImport, RecoversASynthesizedSet) {
  const HrtfSet set = synth_sphere_hrtf(fibonacci_grid(40), SphereModelParams{}, 16, kDefaultSampleRate);
  const HrtfSet back = hrtf_from_csv(to_csv(set), "csv", kDefaultSampleRate);
  EXPECT_EQ(back.subject_id, "csv");
  EXPECT_EQ(back.frequencies, set.frequencies);
  EXPECT_EQ(back.left_mag, set.left_mag);
  EXPECT_EQ(back.right_phase, set.right_phase);
  ASSERT_EQ(back.size(), set.size());
  for (Eigen::Index i = 0; i < set.size(); ++i) {
    EXPECT_LT(angular_separation(back.direction(i), set.direction(i)), 1e-6);
  }
}

TEST(CsvImport, RejectsMalformedInput) {
  const std::string header = "azimuth_deg,elevation_deg,frequency_hz,left_mag,left_phase,right_mag,right_phase\n";
  EXPECT_THROW(hrtf_from_csv("", "x", 44100), FormatError);
  EXPECT_THROW(hrtf_from_csv(header, "x", 44100), FormatError);
  EXPECT_THROW(hrtf_from_csv("a,b,c,d,e,f,g\n0,0,0,1,0,1,0\n", "x", 44100), FormatError);
  EXPECT_THROW(hrtf_from_csv(header + "0,0,0,1,0,1\n", "x", 44100), FormatError);
  EXPECT_THROW(hrtf_from_csv(header + "0,0,0,one,0,1,0\n", "x", 44100), FormatError);
  EXPECT_THROW(hrtf_from_csv(header + "0,95,0,1,0,1,0\n0,95,100,1,0,1,0\n", "x", 44100), FormatError);
  // Ragged bins.
  EXPECT_THROW(hrtf_from_csv(header + "0,0,0,1,0,1,0\n0,0,100,1,0,1,0\n10,0,0,1,0,1,0\n", "x", 44100),
               FormatError);
}

}  // namespace
}  // namespace hrtfgp
