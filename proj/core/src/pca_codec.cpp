#include "hrtfgp/pca_codec.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

#include "hrtfgp/error.hpp"

namespace hrtfgp {

Eigen::MatrixXd log_magnitude_pairs(const HrtfSet& set, double eps) {
  set.validate();
  if (!(eps > 0.0)) {
    const double peak = std::max<double>(set.left_mag.maxCoeff(), set.right_mag.maxCoeff());
    eps = 1e-6 * (peak > 0.0 ? peak : 1.0);
  }
  const Eigen::Index d = set.bins();
  Eigen::MatrixXd out(set.size(), 2 * d);
  out.leftCols(d) = set.left_mag.cast<double>().array().max(eps).log().matrix();
  out.rightCols(d) = set.right_mag.cast<double>().array().max(eps).log().matrix();
  return out;
}

PcaCodec PcaCodec::fit(const Eigen::MatrixXd& log_rows, Eigen::Index q) {
  const Eigen::Index n = log_rows.rows();
  const Eigen::Index w = log_rows.cols();
  if (q < 1) throw InvalidArgument("pca: q must be positive");
  if (n < 1 || w < 1) throw InvalidArgument("pca: empty input");
  if (q > std::min(n, w)) throw InvalidArgument("pca: q exceeds min(N, 2D)");
  if (!log_rows.allFinite()) throw InvalidArgument("pca: non-finite input");

  PcaCodec codec;
  codec.mean = log_rows.colwise().mean().transpose();
  const Eigen::MatrixXd centred = log_rows.rowwise() - codec.mean.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
  codec.basis = svd.matrixV().leftCols(q);
  for (Eigen::Index j = 0; j < q; ++j) {
    Eigen::Index arg = 0;
    codec.basis.col(j).cwiseAbs().maxCoeff(&arg);
    if (codec.basis(arg, j) < 0.0) codec.basis.col(j) *= -1.0;
  }
  codec.variance = svd.singularValues().head(q).array().square() / static_cast<double>(n);
  return codec;
}

Eigen::MatrixXd PcaCodec::encode(const Eigen::MatrixXd& log_rows) const {
  if (log_rows.cols() != width()) throw InvalidArgument("pca encode: width mismatch");
  return (log_rows.rowwise() - mean.transpose()) * basis;
}

Eigen::MatrixXd PcaCodec::decode_log(const Eigen::MatrixXd& pcs) const {
  if (pcs.cols() != q()) throw InvalidArgument("pca decode: component count mismatch");
  return (pcs * basis.transpose()).rowwise() + mean.transpose();
}

Eigen::MatrixXd PcaCodec::decode(const Eigen::MatrixXd& pcs) const {
  return decode_log(pcs).array().exp().matrix();
}

void PcaCodec::validate() const {
  if (q() < 1 || width() < 1) throw InvalidArgument("pca: empty codec");
  if (mean.size() != width()) throw InvalidArgument("pca: mean length mismatch");
  if (variance.size() != q()) throw InvalidArgument("pca: variance length mismatch");
  if (!mean.allFinite() || !basis.allFinite() || !variance.allFinite()) {
    throw InvalidArgument("pca: non-finite codec");
  }
}

}  // namespace hrtfgp
