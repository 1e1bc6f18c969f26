#include "yieldfield/nsbasis.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/lognormal.hpp>
#include <boost/math/distributions/normal.hpp>

namespace yieldfield::nsbasis {

namespace {

struct LognormalParams {
  double mu;
  double sigma;
};

// sigma_log^2 = log(1 + cv^2), mu_log = log(mean) - sigma_log^2 / 2
LognormalParams lognormal_params(const LambdaPrior& p) {
  const double s2 = std::log1p(p.shape_or_cv * p.shape_or_cv);
  return {std::log(p.mean) - 0.5 * s2, std::sqrt(s2)};
}

boost::math::lognormal lognormal_dist(const LambdaPrior& p) {
  const auto lp = lognormal_params(p);
  return boost::math::lognormal(lp.mu, lp.sigma);
}

// rate = shape / mean, boost uses scale = 1 / rate
boost::math::gamma_distribution<> gamma_dist(const LambdaPrior& p) {
  return boost::math::gamma_distribution<>(p.shape_or_cv, p.mean / p.shape_or_cv);
}

const boost::math::normal kStdNormal(0.0, 1.0);

}  // namespace

void LambdaPrior::validate() const {
  if (!(mean > 0.0) || !std::isfinite(mean)) {
    throw DomainError("lambda prior: mean must be positive");
  }
  if (!(shape_or_cv > 0.0) || !std::isfinite(shape_or_cv)) {
    throw DomainError("lambda prior: cv/shape must be positive");
  }
}

double LambdaPrior::quantile(double p) const {
  validate();
  p = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  if (family == PriorFamily::lognormal) {
    return boost::math::quantile(lognormal_dist(*this), p);
  }
  return boost::math::quantile(gamma_dist(*this), p);
}

double LambdaPrior::cdf(double lambda) const {
  validate();
  if (lambda <= 0.0) return 0.0;
  if (family == PriorFamily::lognormal) {
    return boost::math::cdf(lognormal_dist(*this), lambda);
  }
  return boost::math::cdf(gamma_dist(*this), lambda);
}

double LambdaPrior::log_density(double lambda) const {
  validate();
  if (lambda <= 0.0) return -INFINITY;
  if (family == PriorFamily::lognormal) {
    return std::log(boost::math::pdf(lognormal_dist(*this), lambda));
  }
  return std::log(boost::math::pdf(gamma_dist(*this), lambda));
}

LambdaPrior lognormal_prior(double mean, double cv) {
  LambdaPrior p{PriorFamily::lognormal, mean, cv};
  p.validate();
  return p;
}

LambdaPrior gamma_prior(double mean, double shape) {
  LambdaPrior p{PriorFamily::gamma, mean, shape};
  p.validate();
  return p;
}

LatentLambda lambda_from_latent(double tilde_lambda, const LambdaPrior& prior) {
  prior.validate();
  if (prior.family == PriorFamily::lognormal) {
    // Phi^{-1}(Phi(z)) = z in the unclamped range, so the quantile is exact there.
    const auto lp = lognormal_params(prior);
    const double zmax = boost::math::quantile(kStdNormal, 1.0 - kProbabilityClamp);
    const double z = std::clamp(tilde_lambda, -zmax, zmax);
    const double lambda = std::exp(lp.mu + lp.sigma * z);
    const double dlambda = (z == tilde_lambda) ? lp.sigma * lambda : 0.0;
    return {lambda, dlambda};
  }
  const double p = boost::math::cdf(kStdNormal, tilde_lambda);
  const double pc = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  const double lambda = prior.quantile(pc);
  double dlambda = 0.0;
  if (pc == p) {
    dlambda = boost::math::pdf(kStdNormal, tilde_lambda) /
              boost::math::pdf(gamma_dist(prior), lambda);
  }
  return {lambda, dlambda};
}

double latent_from_lambda(double lambda, const LambdaPrior& prior) {
  if (!(lambda > 0.0)) throw DomainError("latent_from_lambda: lambda must be positive");
  if (prior.family == PriorFamily::lognormal) {
    const auto lp = lognormal_params(prior);
    return (std::log(lambda) - lp.mu) / lp.sigma;
  }
  const double p = std::clamp(prior.cdf(lambda), kProbabilityClamp, 1.0 - kProbabilityClamp);
  return boost::math::quantile(kStdNormal, p);
}

}  // namespace yieldfield::nsbasis
