#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "yieldfield/error.hpp"

namespace yieldfield::nsbasis {

// The three Nelson–Siegel loadings at one maturity.
template <typename Scalar>
struct LoadingRow {
  Scalar level;
  Scalar slope;
  Scalar curvature;
};

// Derivatives of the slope and curvature loadings with respect to lambda.
// The level loading is constant, so its derivative is always zero.
template <typename Scalar>
struct LoadingGradient {
  Scalar level;
  Scalar slope;
  Scalar curvature;
};

// Below this value of lambda*m the slope loading switches to its Taylor series.
inline constexpr double kSeriesThreshold = 1e-4;

template <typename Scalar>
LoadingRow<Scalar> loading_row(const Scalar& lambda, const Scalar& m) {
  using std::exp;
  using std::expm1;
  if (!(lambda > Scalar(0)) || !(m > Scalar(0))) {
    throw DomainError("loading_row: lambda and maturity must be positive");
  }
  const Scalar x = lambda * m;
  const Scalar decay = exp(-x);
  Scalar slope;
  if (x < Scalar(kSeriesThreshold)) {
    slope = Scalar(1) - x / Scalar(2) + x * x / Scalar(6);
  } else {
    slope = -expm1(-x) / x;
  }
  return {Scalar(1), slope, slope - decay};
}

template <typename Scalar>
LoadingGradient<Scalar> loading_gradient(const Scalar& lambda, const Scalar& m) {
  using std::exp;
  using std::expm1;
  if (!(lambda > Scalar(0)) || !(m > Scalar(0))) {
    throw DomainError("loading_gradient: lambda and maturity must be positive");
  }
  const Scalar x = lambda * m;
  const Scalar decay = exp(-x);
  // d slope / dx
  Scalar dslope;
  if (x < Scalar(kSeriesThreshold)) {
    dslope = Scalar(-0.5) + x / Scalar(3) - x * x / Scalar(8);
  } else {
    // (x e^{-x} - (1 - e^{-x})) / x^2, written to avoid cancellation near 0
    dslope = (x * decay + expm1(-x)) / (x * x);
  }
  return {Scalar(0), m * dslope, m * (dslope + decay)};
}

// Loadings for a set of maturities; rows follow the maturity order.
template <typename Scalar>
struct NsLoadings {
  Scalar lambda;
  std::vector<Scalar> maturities;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 3> matrix;
};

template <typename Scalar>
NsLoadings<Scalar> observation_matrix(const Scalar& lambda,
                                      const std::vector<Scalar>& maturities) {
  if (maturities.empty()) {
    throw DomainError("observation_matrix: no maturities");
  }
  NsLoadings<Scalar> out{lambda, maturities,
                         Eigen::Matrix<Scalar, Eigen::Dynamic, 3>(maturities.size(), 3)};
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(maturities.size()); ++i) {
    const auto row = loading_row(lambda, maturities[i]);
    out.matrix(i, 0) = row.level;
    out.matrix(i, 1) = row.slope;
    out.matrix(i, 2) = row.curvature;
  }
  return out;
}

// Jacobian of the M x 3 loading matrix with respect to lambda.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 3> observation_matrix_gradient(
    const Scalar& lambda, const std::vector<Scalar>& maturities) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 3> out(maturities.size(), 3);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(maturities.size()); ++i) {
    const auto g = loading_gradient(lambda, maturities[i]);
    out(i, 0) = g.level;
    out(i, 1) = g.slope;
    out(i, 2) = g.curvature;
  }
  return out;
}

enum class PriorFamily { lognormal, gamma };

// Prior on the decay parameter, described by its mean and either the
// coefficient of variation (lognormal) or the shape (gamma).
struct LambdaPrior {
  PriorFamily family = PriorFamily::lognormal;
  double mean = 0.068;
  double shape_or_cv = 0.19;

  void validate() const;
  double quantile(double p) const;
  double cdf(double lambda) const;
  double log_density(double lambda) const;
  double median() const { return quantile(0.5); }
};

LambdaPrior lognormal_prior(double mean = 0.068, double cv = 0.19);
LambdaPrior gamma_prior(double mean = 0.068, double shape = 4.0);

struct LatentLambda {
  double lambda;
  double dlambda;  // d lambda / d tilde_lambda
};

// Probabilities are clamped to [eps, 1 - eps] before the quantile map.
inline constexpr double kProbabilityClamp = 1e-12;

// lambda = g(Phi(tilde)) with g the prior quantile function.
LatentLambda lambda_from_latent(double tilde_lambda, const LambdaPrior& prior);

// Inverse of lambda_from_latent: Phi^{-1}(F(lambda)).
double latent_from_lambda(double lambda, const LambdaPrior& prior);

}  // namespace yieldfield::nsbasis
