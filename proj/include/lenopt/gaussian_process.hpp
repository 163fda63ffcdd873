#pragma once

#include <vector>

#include <Eigen/Dense>

namespace lenopt::hpo {

/// Zero-mean GP regression with a squared-exponential kernel on standardized
/// targets. The lengthscale is chosen from a fixed grid by log marginal
/// likelihood; the noise variance is fixed.
class GaussianProcess {
 public:
  struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
  };

  /// `x` holds one input per row. Throws ContractError on empty or mismatched data.
  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double noise = 1e-6);

  Prediction predict(const Eigen::VectorXd& x) const;
  /// Predictions for every row of `x`.
  std::vector<Prediction> predict_all(const Eigen::MatrixXd& x) const;

  double lengthscale() const { return lengthscale_; }
  double log_marginal_likelihood() const { return lml_; }

  static const std::vector<double>& lengthscale_grid();

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd alpha_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  double lengthscale_ = 1.0;
  double lml_ = 0.0;
};

}  // namespace lenopt::hpo
