#pragma once

#include "frontdoor/errors.hpp"
#include "frontdoor/tensor.hpp"

#include <Eigen/Core>

#include <cmath>

namespace frontdoor {

/// Variance floor inside the AdaIN normalizer sqrt(sigma^2 + eps).
inline constexpr double kAdainEps = 1e-20;

template <typename Scalar>
struct FeatureStats {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> mu;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> sigma;
};

/// Per-channel mean and standard deviation (HW - 1 denominator) of a matrix
/// whose columns are flattened channels.
template <typename Derived>
FeatureStats<typename Derived::Scalar> channel_stats(const Eigen::MatrixBase<Derived>& planes) {
  using Scalar = typename Derived::Scalar;
  const Index hw = planes.rows();
  if (hw < 2) throw ValidationError("channel_stats: needs H*W >= 2");
  FeatureStats<Scalar> s;
  s.mu = planes.colwise().mean().transpose().array();
  s.sigma.resize(planes.cols());
  for (Index c = 0; c < planes.cols(); ++c) {
    s.sigma[c] = std::sqrt((planes.col(c).array() - s.mu[c]).square().sum() / static_cast<Scalar>(hw - 1));
  }
  return s;
}

/// Stats of a C×H×W tensor (or 1×C×H×W).
FeatureStats<double> channel_stats(const Tensor& z);

/// mu(s) + sigma(s) * (z - mu(z)) / sqrt(sigma(z)^2 + eps), per sample and
/// channel. z and style are N×C×H×W (or C×H×W) with equal N and C; spatial
/// sizes may differ. Differentiable w.r.t. z; style statistics are constants.
Tensor adain(const Tensor& z, const Tensor& style, double eps = kAdainEps);

/// alpha * stylized + (1 - alpha) * content.
Tensor interpolate_style(const Tensor& stylized, const Tensor& content, double alpha);

}  // namespace frontdoor
