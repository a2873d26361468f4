#pragma once

// Gaussian-process regression of processing ability over integer
// parallelism, squared-exponential kernel, exact inference.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "conttune/error.hpp"

namespace conttune {

/// Prior mean of the surrogate before the kernel term.
///  - Constant: the mean of the training targets.
///  - Proportional: a ray through the origin, m(p) = c * p, with c fitted by
///    least squares. PA(0) = 0 for every operator.
enum class PriorMean { Constant, Proportional };

/// Kernel hyperparameters. `signal_variance` and `noise_variance` are in
/// units of the standardized targets (so 1.0 is "the spread of the data").
struct KernelConfig {
  double length_scale = 3.0;
  double signal_variance = 1.0;
  double noise_variance = 1e-4;
  double jitter = 1e-8;
  PriorMean prior_mean = PriorMean::Constant;
  /// Pick the length scale from `length_scale_grid` by log marginal likelihood.
  bool refine_length_scale = false;
  std::vector<double> length_scale_grid{1.0, 2.0, 3.0, 5.0, 8.0};

  void validate() const {
    if (!(length_scale > 0.0)) throw Error(ErrorCode::InvalidKernel, "length_scale must be > 0");
    if (!(signal_variance > 0.0)) {
      throw Error(ErrorCode::InvalidKernel, "signal_variance must be > 0");
    }
    if (!(noise_variance >= 0.0)) {
      throw Error(ErrorCode::InvalidKernel, "noise_variance must be >= 0");
    }
    if (!(jitter > 0.0)) throw Error(ErrorCode::InvalidKernel, "jitter must be > 0");
  }
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

class GpModel {
 public:
  /// Fits on (p, PA) pairs. Duplicate p values are allowed.
  static GpModel fit(const std::vector<std::pair<double, double>>& data,
                     const KernelConfig& kernel) {
    kernel.validate();
    if (data.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no observations to fit");
    if (!kernel.refine_length_scale) return GpModel(data, kernel);
    GpModel best(data, kernel);
    bool have = false;
    for (double ell : kernel.length_scale_grid) {
      KernelConfig k = kernel;
      k.length_scale = ell;
      k.refine_length_scale = false;
      try {
        GpModel m(data, k);
        if (!have || m.log_marginal_likelihood() > best.log_marginal_likelihood()) {
          best = std::move(m);
          have = true;
        }
      } catch (const Error&) {
        // a grid point that cannot be factored is simply skipped
      }
    }
    if (!have) throw Error(ErrorCode::SingularCovariance, "no length scale could be factored");
    return best;
  }

  Prediction predict(double p) const {
    const Eigen::Index n = x_.size();
    Eigen::VectorXd ks(n);
    for (Eigen::Index i = 0; i < n; ++i) ks(i) = k(p, x_(i));
    const double mean_n = ks.dot(alpha_);
    const Eigen::VectorXd v = llt_.matrixL().solve(ks);
    const double var_n = std::max(0.0, kernel_.signal_variance - v.squaredNorm());
    return {prior(p) + scale_ * mean_n, scale_ * scale_ * var_n};
  }

  /// (mu - beta * sigma, mu + beta * sigma).
  std::pair<double, double> confidence_bounds(double p, double beta) const {
    if (!(beta >= 0.0)) throw Error(ErrorCode::InvalidKernel, "beta must be >= 0");
    const auto pr = predict(p);
    const double s = std::sqrt(pr.variance);
    return {pr.mean - beta * s, pr.mean + beta * s};
  }

  double log_marginal_likelihood() const { return lml_; }
  const KernelConfig& kernel() const { return kernel_; }
  /// Jitter actually added to the diagonal after escalation.
  double jitter_used() const { return jitter_used_; }
  double prior_mean_at(double p) const { return prior(p); }
  double target_scale() const { return scale_; }
  std::size_t size() const { return static_cast<std::size_t>(x_.size()); }

 private:
  GpModel(std::vector<std::pair<double, double>> data, const KernelConfig& kernel)
      : kernel_(kernel) {
    // Canonical order makes the fit independent of how observations arrive.
    std::sort(data.begin(), data.end());
    const auto n = static_cast<Eigen::Index>(data.size());
    x_.resize(n);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x_(i) = data[static_cast<std::size_t>(i)].first;
      y(i) = data[static_cast<std::size_t>(i)].second;
    }

    if (kernel.prior_mean == PriorMean::Proportional) {
      const double xx = x_.squaredNorm();
      slope_ = xx > 0.0 ? x_.dot(y) / xx : 0.0;
      offset_ = 0.0;
    } else {
      slope_ = 0.0;
      offset_ = y.mean();
    }
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = y(i) - prior(x_(i));
    const double var = n > 1 ? r.squaredNorm() / static_cast<double>(n) : 0.0;
    if (var > 0.0) {
      scale_ = std::sqrt(var);
    } else {
      const double ref = y.cwiseAbs().maxCoeff();
      scale_ = ref > 0.0 ? ref : 1.0;
    }
    const Eigen::VectorXd yn = r / scale_;

    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) K(i, j) = k(x_(i), x_(j));
    }
    double jitter = kernel.jitter;
    for (;;) {
      Eigen::MatrixXd A = K;
      A.diagonal().array() += kernel.noise_variance + jitter;
      llt_.compute(A);
      if (llt_.info() == Eigen::Success) break;
      jitter *= 10.0;
      if (jitter > 1e-2 * (1.0 + 1e-9)) {
        throw Error(ErrorCode::SingularCovariance,
                    "covariance not positive definite with jitter up to 1e-2");
      }
    }
    jitter_used_ = jitter;
    alpha_ = llt_.solve(yn);
    const Eigen::MatrixXd L = llt_.matrixL();
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(L(i, i));
    lml_ = -0.5 * yn.dot(alpha_) - logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
  }

  double k(double a, double b) const {
    const double d = (a - b) / kernel_.length_scale;
    return kernel_.signal_variance * std::exp(-0.5 * d * d);
  }

  double prior(double p) const { return offset_ + slope_ * p; }

  KernelConfig kernel_;
  Eigen::VectorXd x_;
  Eigen::VectorXd alpha_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double offset_ = 0.0;
  double slope_ = 0.0;
  double scale_ = 1.0;
  double jitter_used_ = 0.0;
  double lml_ = 0.0;
};

}  // namespace conttune
