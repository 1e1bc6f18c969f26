#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "yieldfield/dataio.hpp"
#include "yieldfield/inference.hpp"

namespace yieldfield {

// Gaussian predictive for the yields at origin + horizon. Variance parts:
// total = factor + field + 2 cross + noise.
struct PredictiveDistribution {
  int origin = 0;  // yyyymm of the last observed month
  int horizon = 1;
  std::vector<double> maturities;
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  Eigen::VectorXd trend_mean;
  Eigen::VectorXd field_mean;
  Eigen::VectorXd var_factor;
  Eigen::VectorXd var_field;
  Eigen::VectorXd var_cross;
  Eigen::VectorXd var_noise;
  std::uint64_t seed = 0;  // for samplers drawing from this predictive

  Eigen::VectorXd variance() const { return sd.array().square(); }
};

struct FactorForecast {
  Eigen::Vector3d mean;
  Eigen::Vector3d variance;
};

// mu + phi^h beta~_T plus accumulated innovations; the posterior covariance
// of (beta~_T, mu) is included.
FactorForecast forecast_factors(const FitResult& fit, int h);

struct FieldForecast {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

// Residual field at (origin + h, m). Spatial variants krige through the
// time-extended mesh; the spatio-temporal variant propagates u_T.
FieldForecast forecast_field(const FitResult& fit, int h, const std::vector<double>& maturities);

PredictiveDistribution predict_yield(const FitResult& fit, int h,
                                     const std::vector<double>& maturities);

// Classical two-step: per-month OLS factors, AR(1) with intercept per factor.
inline constexpr int kBaselineMinimumWindow = 24;
PredictiveDistribution two_step_baseline(const YieldPanel& window, int h,
                                         const std::vector<double>& maturities,
                                         double lambda = kDefaultLambda);

struct BacktestRecord {
  int origin = 0;
  int horizon = 0;
  double maturity = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double actual = 0.0;
};

struct RmseCell {
  int horizon = 0;
  double maturity = 0.0;
  double rmse = 0.0;
  int count = 0;
};

struct FailedOrigin {
  int origin = 0;
  std::string message;
};

struct BacktestReport {
  std::string model;
  std::vector<BacktestRecord> records;  // sorted by (horizon, maturity, origin)
  std::vector<RmseCell> rmse;
  std::vector<FailedOrigin> failures;
  double seconds = 0.0;

  // Recomputes the grid from the records.
  std::vector<RmseCell> recompute_rmse() const;
};

// Forecasts for every requested horizon from one training window; `warm` is
// the previous window's hyperparameters in the same chunk (in/out).
using Forecaster = std::function<std::vector<PredictiveDistribution>(
    const YieldPanel& window, const std::vector<int>& horizons,
    const std::vector<double>& maturities, std::optional<Eigen::VectorXd>& warm)>;

// With reestimate off, hyperparameters are optimized at the first window of
// each warm-start chunk and held fixed afterwards.
Forecaster make_forecaster(const ModelSpec& spec, bool reestimate = true);

struct BacktestOptions {
  int threads = 1;
  // Origins are split into this many contiguous chunks; warm starts run
  // within a chunk, so results do not depend on the thread count.
  int warm_start_chunks = 8;
  bool reestimate = true;
};

BacktestReport run_backtest(const std::string& model, const Forecaster& forecaster,
                            const YieldPanel& panel, const std::vector<WindowSpec>& windows,
                            const std::vector<double>& maturities,
                            const BacktestOptions& options = {});

BacktestReport run_backtest(const ModelSpec& spec, const YieldPanel& panel,
                            const std::vector<WindowSpec>& windows,
                            const std::vector<double>& maturities,
                            const BacktestOptions& options = {});

// forecasts.csv: model,origin,horizon,maturity,mean,sd,actual
void write_forecasts_csv(std::ostream& out, const std::vector<BacktestReport>& reports,
                         bool header = true);
// rmse.csv: model,horizon,maturity,rmse
void write_rmse_csv(std::ostream& out, const std::vector<BacktestReport>& reports,
                    bool header = true);
// One report per model, in order of first appearance; RMSE recomputed.
std::vector<BacktestReport> read_forecasts_csv(std::istream& in);

// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace yieldfield
