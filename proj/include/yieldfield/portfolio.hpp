#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "yieldfield/dataio.hpp"
#include "yieldfield/forecast.hpp"

namespace yieldfield {

// Yields in percent, maturities in months. Returns are gross h-month returns
// of zero-coupon bonds: log R = (m/12) y_t(m)/100 - ((m-h)/12) y_{t+h}(m-h)/100.

// Linear in maturity; flat below the shortest maturity, error above the longest.
double interpolate_yield(const std::vector<double>& maturities, const Eigen::VectorXd& yields,
                         double maturity);

struct BondReturn {
  double log_mean = 0.0;
  double log_variance = 0.0;
  double expected = 0.0;  // E[R] under the lognormal predictive
  double variance = 0.0;
  double realized = 0.0;
};

// forecast_mean / forecast_sd: predictive of y_{t+h}(m - h).
BondReturn bond_returns(const YieldPanel& panel, Eigen::Index origin, double m, int h,
                        double forecast_mean, double forecast_sd);

inline constexpr double kRisklessMaturity = 120.0;

// The long bond's known yield over the holding period.
double riskless_return(const YieldPanel& panel, Eigen::Index origin, int h);

// argmin w' S w - w' mu / delta subject to w' 1 = 1.
Eigen::VectorXd mean_variance_weights(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                                      double delta);
// Risky weight with one riskless asset.
double risky_weight(double mu_risky, double var_risky, double riskless, double delta);

// sum_t R_t - rra / (2 (1 + rra)) R_t^2
double realized_utility(const std::vector<double>& returns, double rra = 1.0);

struct FeeResult {
  double fee = 0.0;
  bool valid = true;
  std::string message;
};

// Constant per-period F with U(R^M - F) = U(R^B).
FeeResult performance_fee(const std::vector<double>& model, const std::vector<double>& benchmark,
                          double rra = 1.0);

struct PortfolioConfig {
  std::vector<double> zetas{4.0, 2.0, 1.0};
  std::vector<double> maturities{3.0, 12.0, 36.0, 60.0};
  int horizon = 1;
  double rra = 1.0;
  std::string benchmark = "bdns";
};

struct StrategyPath {
  std::vector<int> dates;
  std::vector<double> weights;  // risky weight
  std::vector<double> returns;  // realized gross portfolio return
};

// Two-asset path with delta = zeta. The weight stage works on net returns in
// percent; forecasts at m - h are interpolated across the report's maturities.
StrategyPath build_strategy(const BacktestReport& report, const YieldPanel& panel, double maturity,
                            double zeta, int horizon, const std::vector<int>& origins);

struct FeeRow {
  double zeta = 0.0;
  double maturity = 0.0;
  std::string model;
  double fee = 0.0;
  double fee_pct = 0.0;  // 100 F / mean benchmark gross return
  bool valid = true;
};

std::vector<FeeRow> run_portfolio_study(const std::vector<BacktestReport>& reports,
                                        const YieldPanel& panel, const PortfolioConfig& config);

// zeta,maturity,model,fee_pct
void write_fees_csv(std::ostream& out, const std::vector<FeeRow>& rows);

}  // namespace yieldfield
