#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "yieldfield/dataio.hpp"
#include "yieldfield/error.hpp"
#include "yieldfield/forecast.hpp"

namespace yieldfield {

// All scores are penalties: lower is better.

namespace detail {
template <typename Scalar>
Scalar std_normal_cdf(const Scalar& z) {
  using std::erfc;
  return Scalar(0.5) * erfc(-z / Scalar(M_SQRT2));
}
template <typename Scalar>
Scalar std_normal_pdf(const Scalar& z) {
  using std::exp;
  return exp(Scalar(-0.5) * z * z) / Scalar(std::sqrt(2.0 * M_PI));
}
template <typename Scalar>
void check_sigma(const Scalar& sigma) {
  if (!(sigma > Scalar(0))) throw DomainError("predictive sd must be positive");
}
}  // namespace detail

// E|X - y| for X ~ N(mu, sigma^2).
template <typename Scalar>
Scalar gaussian_abs_error(const Scalar& mu, const Scalar& sigma, const Scalar& y) {
  detail::check_sigma(sigma);
  const Scalar z = (y - mu) / sigma;
  return sigma * (z * (Scalar(2) * detail::std_normal_cdf(z) - Scalar(1)) +
                  Scalar(2) * detail::std_normal_pdf(z));
}

// E|X - X'| = 2 sigma / sqrt(pi).
template <typename Scalar>
Scalar gaussian_abs_spread(const Scalar& sigma) {
  detail::check_sigma(sigma);
  return Scalar(2) * sigma / Scalar(std::sqrt(M_PI));
}

template <typename Scalar>
Scalar crps_gaussian(const Scalar& mu, const Scalar& sigma, const Scalar& y) {
  return gaussian_abs_error(mu, sigma, y) - Scalar(0.5) * gaussian_abs_spread(sigma);
}

// E|X - y| / E|X - X'| + log(E|X - X'|) / 2
template <typename Scalar>
Scalar scrps_gaussian(const Scalar& mu, const Scalar& sigma, const Scalar& y) {
  using std::log;
  const Scalar spread = gaussian_abs_spread(sigma);
  return gaussian_abs_error(mu, sigma, y) / spread + Scalar(0.5) * log(spread);
}

using Sampler = std::function<double(std::mt19937_64&)>;
Sampler gaussian_sampler(double mu, double sigma);

// Monte Carlo estimates of E g(X, y) and E g(X, X') for the threshold
// weight 1{t > c}, g(x, x') = |max(x, c) - max(x', c)|; the second by the
// unbiased U-statistic over all draw pairs.
struct WeightedMoments {
  double to_observation = 0.0;
  double spread = 0.0;
};
WeightedMoments weighted_moments(const Sampler& sampler, double y, double threshold, int n_draws,
                                 std::uint64_t seed);

double wcrps_mc(const Sampler& sampler, double y, double threshold, int n_draws,
                std::uint64_t seed);
// nullopt when the predictive puts no mass above the threshold.
std::optional<double> swcrps_mc(const Sampler& sampler, double y, double threshold, int n_draws,
                                std::uint64_t seed);

struct ScoringOptions {
  int n_draws = 4096;
  std::uint64_t seed = 20240101;
  double threshold_factor = 1.05;  // times the yield at the forecast origin
  int threads = 1;
};

struct RawScore {
  int origin = 0;
  double crps = 0.0;
  double scrps = 0.0;
  double wcrps = 0.0;
  std::optional<double> swcrps;
};

struct ScoreRow {
  std::string model;
  int horizon = 0;
  double maturity = 0.0;
  double crps = 0.0;
  double scrps = 0.0;
  double wcrps = 0.0;
  double swcrps = 0.0;  // over defined origins; NaN if none
  int count = 0;
  int n_undefined = 0;
  std::vector<RawScore> raw;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;
};

ScoreTable score_backtest(const BacktestReport& report, const YieldPanel& panel,
                          const ScoringOptions& options = {});

// model,horizon,maturity,crps,scrps,wcrps,swcrps,n_undefined
void write_scores_csv(std::ostream& out, const std::vector<ScoreTable>& tables);

}  // namespace yieldfield
