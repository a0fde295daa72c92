#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "hrtfgp/dataset.hpp"
#include "hrtfgp/pca_codec.hpp"

namespace hrtfgp {

inline constexpr int kDefaultMogComponents = 64;

// Joint mixture over rows z = [w, u]: q principal components followed by a
// 3-vector direction.
struct MogModel {
  Eigen::Index q = 0;
  Eigen::VectorXd weights;
  std::vector<Eigen::VectorXd> means;        // q + 3
  std::vector<Eigen::MatrixXd> covariances;  // (q + 3) x (q + 3)

  int components() const { return static_cast<int>(weights.size()); }
  Eigen::Index dim() const { return q + 3; }
  void validate() const;
};

struct MogFitOptions {
  int components = kDefaultMogComponents;
  std::uint64_t seed = 0;
  int max_iterations = 500;
  double tolerance = 1e-7;  // relative log-likelihood improvement
  double loading = 1e-6;    // times trace(data covariance) / (q + 3)
};

struct MogFitResult {
  MogModel model;
  std::vector<double> log_likelihood;  // total, one entry per E-step
  std::vector<int> reinitialized_at;   // iterations where a component was reseeded
  bool converged = false;
};

// EM with full covariances from k-means++ seeded means.
MogFitResult fit_mog(const Eigen::MatrixXd& Z, Eigen::Index q, const MogFitOptions& options = {});

double mog_log_likelihood(const MogModel& model, const Eigen::MatrixXd& Z);

// The mixture over w given a direction u.
struct ConditionalMog {
  Eigen::VectorXd weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;

  Eigen::VectorXd mixture_mean() const;
  double log_density(const Eigen::VectorXd& w) const;
};

ConditionalMog condition(const MogModel& model, const Eigen::Vector3d& u);

// Ancestral sampling: component by weight, then a Gaussian draw. Rows are PCs.
Eigen::MatrixXd sample_pcs(const ConditionalMog& cond, Eigen::Index n, std::uint64_t seed);

// Sampled PCs decoded to MP feature rows.
Eigen::MatrixXd sample_candidates(const ConditionalMog& cond, const PcaCodec& codec, Eigen::Index n,
                                  std::uint64_t seed);

// Decoded weighted mixture mean.
Eigen::RowVectorXd nonindividualized(const ConditionalMog& cond, const PcaCodec& codec);

struct GenerativeModel {
  PcaCodec codec;
  MogModel mog;
};

struct GenerativeFit {
  GenerativeModel model;
  MogFitResult fit;
};

// Pools the log-magnitude rows of every subject into one codec, then fits the
// mixture on [PCs, direction] rows.
GenerativeFit fit_generative_model(const std::vector<HrtfSet>& population,
                                   Eigen::Index q = kDefaultPcaComponents,
                                   const MogFitOptions& options = {});

// JSON manifest plus f32 blobs next to it, like the HRTF container.
void save_generative_model(const GenerativeModel& model, const std::filesystem::path& manifest_path);
GenerativeModel load_generative_model(const std::filesystem::path& manifest_path);

}  // namespace hrtfgp
