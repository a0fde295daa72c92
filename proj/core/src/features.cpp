#include "hrtfgp/features.hpp"

#include <algorithm>
#include <cmath>

#include "hrtfgp/error.hpp"

namespace hrtfgp {

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::lmr: return "LMR";
    case FeatureKind::pd: return "PD";
    case FeatureKind::amr: return "AMR";
    case FeatureKind::mp: return "MP";
  }
  return "?";
}

FeatureKind parse_feature_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "lmr") return FeatureKind::lmr;
  if (lower == "pd") return FeatureKind::pd;
  if (lower == "amr") return FeatureKind::amr;
  if (lower == "mp") return FeatureKind::mp;
  throw InvalidArgument("unknown feature kind '" + std::string(name) + "'");
}

FeatureMatrix extract_features(const HrtfSet& set, FeatureKind kind) {
  const double peak = std::max(set.left_mag.maxCoeff(), set.right_mag.maxCoeff());
  return extract_features(set, kind, 1e-6 * (peak > 0.0 ? peak : 1.0));
}

FeatureMatrix extract_features(const HrtfSet& set, FeatureKind kind, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  set.validate();
  const Eigen::Index n = set.size();
  const Eigen::Index d = set.bins();
  const Eigen::ArrayXXd left = set.left_mag.cast<double>().array();
  const Eigen::ArrayXXd right = set.right_mag.cast<double>().array();

  FeatureMatrix out;
  out.kind = kind;
  out.frequencies = set.frequencies.cast<double>();
  out.Y.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) out.Y.row(i) = set.direction(i).vector().transpose();

  switch (kind) {
    case FeatureKind::lmr:
      out.X = (left / right.max(eps) + 1.0).log().matrix();
      break;
    case FeatureKind::pd: {
      out.X.resize(n, d);
      const Eigen::MatrixXd diff =
          set.left_phase.cast<double>() - set.right_phase.cast<double>();
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < d; ++k) out.X(i, k) = wrap_angle(diff(i, k));
      break;
    }
    case FeatureKind::amr:
      out.X = (2.0 * left / (left + right).max(eps)).matrix();
      break;
    case FeatureKind::mp:
      out.X.resize(n, 2 * d);
      out.X.leftCols(d) = left.matrix();
      out.X.rightCols(d) = right.matrix();
      break;
  }
  return out;
}

}  // namespace hrtfgp
