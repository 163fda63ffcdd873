#include "lenopt/gaussian_process.hpp"

#include <cmath>
#include <limits>

#include "lenopt/errors.hpp"

namespace lenopt::hpo {

namespace {

Eigen::MatrixXd se_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double lengthscale) {
  const double inv = 1.0 / (2.0 * lengthscale * lengthscale);
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      k(i, j) = std::exp(-(a.row(i) - b.row(j)).squaredNorm() * inv);
  return k;
}

}  // namespace

const std::vector<double>& GaussianProcess::lengthscale_grid() {
  static const std::vector<double> grid{0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.5};
  return grid;
}

void GaussianProcess::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double noise) {
  if (x.rows() == 0 || x.rows() != y.size())
    throw ContractError("GP fit needs one target per input row and at least one row");
  x_ = x;
  y_mean_ = y.mean();
  const double var = (y.array() - y_mean_).square().mean();
  y_scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
  const Eigen::VectorXd z = (y.array() - y_mean_) / y_scale_;
  const auto n = static_cast<double>(x.rows());

  double best = -std::numeric_limits<double>::infinity();
  for (double ell : lengthscale_grid()) {
    Eigen::MatrixXd k = se_kernel(x, x, ell);
    k.diagonal().array() += noise;
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    double jitter = noise;
    while (llt.info() != Eigen::Success && jitter < 1e-2) {
      jitter *= 10.0;
      k.diagonal().array() += jitter;
      llt.compute(k);
    }
    if (llt.info() != Eigen::Success) continue;
    const Eigen::VectorXd alpha = llt.solve(z);
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double lml = -0.5 * z.dot(alpha) - 0.5 * log_det - 0.5 * n * std::log(2.0 * M_PI);
    if (lml > best) {
      best = lml;
      lengthscale_ = ell;
      chol_ = llt;
      alpha_ = alpha;
    }
  }
  if (!std::isfinite(best)) throw NumericError("GP kernel matrix is not positive definite");
  lml_ = best;
}

GaussianProcess::Prediction GaussianProcess::predict(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd row = x.transpose();
  return predict_all(row).front();
}

std::vector<GaussianProcess::Prediction> GaussianProcess::predict_all(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd ks = se_kernel(x, x_, lengthscale_);  // m × n
  const Eigen::VectorXd mean = ks * alpha_;
  const Eigen::MatrixXd v = chol_.matrixL().solve(ks.transpose());  // n × m
  std::vector<Prediction> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double var = std::max(1e-12, 1.0 - v.col(i).squaredNorm());
    out[static_cast<std::size_t>(i)] = {y_mean_ + y_scale_ * mean(i), y_scale_ * y_scale_ * var};
  }
  return out;
}

}  // namespace lenopt::hpo
