#include "yieldfield/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <set>

#include "yieldfield/error.hpp"

namespace yieldfield {

double interpolate_yield(const std::vector<double>& maturities, const Eigen::VectorXd& yields,
                         double maturity) {
  if (maturities.empty() || static_cast<Eigen::Index>(maturities.size()) != yields.size()) {
    throw SizeError("interpolation grid and yields differ in size");
  }
  if (!(maturity >= 0.0)) throw DomainError("negative maturity");
  if (maturity <= maturities.front()) return yields(0);
  if (maturity > maturities.back() + 1e-12) {
    throw RangeError("maturity " + format_double(maturity) + " beyond the grid");
  }
  const auto it = std::lower_bound(maturities.begin(), maturities.end(), maturity);
  const std::size_t k = static_cast<std::size_t>(it - maturities.begin());
  if (*it == maturity) return yields(static_cast<Eigen::Index>(k));
  const double w = (maturity - maturities[k - 1]) / (maturities[k] - maturities[k - 1]);
  return (1.0 - w) * yields(static_cast<Eigen::Index>(k - 1)) + w * yields(static_cast<Eigen::Index>(k));
}

BondReturn bond_returns(const YieldPanel& panel, Eigen::Index origin, double m, int h,
                        double forecast_mean, double forecast_sd) {
  if (h < 1) throw DomainError("holding period must be at least one month");
  if (m < h) throw DomainError("bond matures before the end of the holding period");
  if (origin < 0 || origin + h >= panel.months()) throw RangeError("origin + h outside the panel");
  if (!(forecast_sd >= 0.0)) throw DomainError("forecast sd must be nonnegative");
  const double y_now = interpolate_yield(panel.maturities, panel.yields.row(origin).transpose(), m);
  const double y_next =
      interpolate_yield(panel.maturities, panel.yields.row(origin + h).transpose(), m - h);
  const double rem = (m - h) / 1200.0;
  BondReturn r;
  r.log_mean = m / 1200.0 * y_now - rem * forecast_mean;
  r.log_variance = rem * rem * forecast_sd * forecast_sd;
  r.expected = std::exp(r.log_mean + 0.5 * r.log_variance);
  r.variance = std::expm1(r.log_variance) * std::exp(2.0 * r.log_mean + r.log_variance);
  r.realized = std::exp(m / 1200.0 * y_now - rem * y_next);
  return r;
}

double riskless_return(const YieldPanel& panel, Eigen::Index origin, int h) {
  const double y = panel.yields(origin, panel.maturity_index(kRisklessMaturity));
  return std::exp(y / 100.0 * h / 12.0);
}

Eigen::VectorXd mean_variance_weights(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                                      double delta) {
  const Eigen::Index n = mu.size();
  if (sigma.rows() != n || sigma.cols() != n) throw SizeError("covariance does not match mean");
  if (!(delta > 0.0)) throw DomainError("risk aversion must be positive");
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n + 1, n + 1);
  k.topLeftCorner(n, n) = 2.0 * sigma;
  k.topRightCorner(n, 1).setOnes();
  k.bottomLeftCorner(1, n).setOnes();
  Eigen::VectorXd rhs(n + 1);
  rhs.head(n) = mu / delta;
  rhs(n) = 1.0;
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(k);
  if (!lu.isInvertible()) throw NumericalError("singular mean-variance system");
  Eigen::VectorXd w = lu.solve(rhs).head(n);
  w(n - 1) = 1.0 - w.head(n - 1).sum();
  return w;
}

double risky_weight(double mu_risky, double var_risky, double riskless, double delta) {
  if (!(var_risky > 0.0)) throw DomainError("risky variance must be positive");
  if (!(delta > 0.0)) throw DomainError("risk aversion must be positive");
  return (mu_risky - riskless) / (2.0 * delta * var_risky);
}

double realized_utility(const std::vector<double>& returns, double rra) {
  const double k = rra / (2.0 * (1.0 + rra));
  double u = 0.0;
  for (double r : returns) u += r - k * r * r;
  return u;
}

FeeResult performance_fee(const std::vector<double>& model, const std::vector<double>& benchmark,
                          double rra) {
  if (model.size() != benchmark.size() || model.empty()) {
    throw SizeError("fee needs equal-length, nonempty return paths");
  }
  const double n = static_cast<double>(model.size());
  const double k = rra / (2.0 * (1.0 + rra));
  const double gap = realized_utility(model, rra) - realized_utility(benchmark, rra);
  FeeResult out;
  if (gap == 0.0) return out;
  // k n F^2 + b F - gap = 0 with b = sum (1 - 2 k R^M)
  double b = 0.0, max_r = -std::numeric_limits<double>::infinity();
  for (double r : model) {
    b += 1.0 - 2.0 * k * r;
    max_r = std::max(max_r, r);
  }
  const double a = k * n;
  const double disc = b * b + 4.0 * a * gap;
  if (disc < 0.0) {
    out.valid = false;
    out.fee = std::numeric_limits<double>::quiet_NaN();
    out.message = "no real root: utility gap too large for quadratic utility";
    return out;
  }
  // root with the smaller magnitude, written without cancellation
  const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
  const double r1 = q / a, r2 = -gap / q;
  out.fee = std::abs(r1) < std::abs(r2) ? r1 : r2;
  // marginal utility 1 - 2k (R - F) must stay positive
  if (!(out.fee > max_r - 1.0 / (2.0 * k))) {
    out.valid = false;
    out.message = "root outside the region of positive marginal utility";
  }
  return out;
}

namespace {

struct OriginForecasts {
  std::vector<double> maturities;
  std::vector<double> means;
  std::vector<double> sds;
};

std::map<int, OriginForecasts> index_report(const BacktestReport& report, int horizon) {
  std::map<int, std::map<double, std::pair<double, double>>> raw;
  for (const auto& r : report.records)
    if (r.horizon == horizon) raw[r.origin][r.maturity] = {r.mean, r.sd};
  std::map<int, OriginForecasts> out;
  for (const auto& [origin, cells] : raw) {
    OriginForecasts f;
    for (const auto& [m, v] : cells) {
      f.maturities.push_back(m);
      f.means.push_back(v.first);
      f.sds.push_back(v.second);
    }
    out.emplace(origin, std::move(f));
  }
  return out;
}

}  // namespace

StrategyPath build_strategy(const BacktestReport& report, const YieldPanel& panel, double maturity,
                            double zeta, int horizon, const std::vector<int>& origins) {
  const auto idx = index_report(report, horizon);
  StrategyPath path;
  for (int origin : origins) {
    const auto it = idx.find(origin);
    if (it == idx.end()) {
      throw RangeError("model " + report.model + " has no forecast at " + format_month(origin));
    }
    const auto& f = it->second;
    const Eigen::VectorXd means = Eigen::Map<const Eigen::VectorXd>(f.means.data(), f.means.size());
    const Eigen::VectorXd sds = Eigen::Map<const Eigen::VectorXd>(f.sds.data(), f.sds.size());
    const double target = maturity - horizon;
    const double mean = interpolate_yield(f.maturities, means, target);
    const double sd = interpolate_yield(f.maturities, sds, target);
    const Eigen::Index row = panel.index_of(origin);
    const auto bond = bond_returns(panel, row, maturity, horizon, mean, sd);
    const double rf = riskless_return(panel, row, horizon);
    // weights from net returns in percent
    const double w =
        risky_weight(100.0 * (bond.expected - 1.0), 1e4 * bond.variance, 100.0 * (rf - 1.0), zeta);
    path.dates.push_back(origin);
    path.weights.push_back(w);
    path.returns.push_back(w * bond.realized + (1.0 - w) * rf);
  }
  return path;
}

std::vector<FeeRow> run_portfolio_study(const std::vector<BacktestReport>& reports,
                                        const YieldPanel& panel, const PortfolioConfig& config) {
  const BacktestReport* bench = nullptr;
  for (const auto& r : reports)
    if (r.model == config.benchmark) bench = &r;
  if (!bench) throw ValidationError("benchmark model '" + config.benchmark + "' not among the forecasts");
  for (double z : config.zetas)
    if (!(z > 0.0)) throw ValidationError("zeta must be positive");
  // origins forecast by every model
  std::set<int> common;
  for (const auto& [o, f] : index_report(*bench, config.horizon)) common.insert(o);
  for (const auto& r : reports) {
    std::set<int> mine;
    for (const auto& [o, f] : index_report(r, config.horizon))
      if (common.count(o)) mine.insert(o);
    common = std::move(mine);
  }
  if (common.empty()) throw ValidationError("no origins shared by all models at the portfolio horizon");
  const std::vector<int> origins(common.begin(), common.end());
  std::vector<FeeRow> rows;
  for (double zeta : config.zetas)
    for (double m : config.maturities) {
      const auto base = build_strategy(*bench, panel, m, zeta, config.horizon, origins);
      double mean_base = 0.0;
      for (double r : base.returns) mean_base += r;
      mean_base /= static_cast<double>(base.returns.size());
      for (const auto& rep : reports) {
        const auto path = build_strategy(rep, panel, m, zeta, config.horizon, origins);
        const auto fee = performance_fee(path.returns, base.returns, config.rra);
        if (!fee.valid) warn("fee for " + rep.model + " at " + format_double(m) + " months, zeta " +
                             format_double(zeta) + ": " + fee.message);
        rows.push_back({zeta, m, rep.model, fee.fee, 100.0 * fee.fee / mean_base, fee.valid});
      }
    }
  return rows;
}

void write_fees_csv(std::ostream& out, const std::vector<FeeRow>& rows) {
  out << "zeta,maturity,model,fee_pct\n";
  for (const auto& r : rows) {
    out << format_double(r.zeta) << ',' << format_double(r.maturity) << ',' << r.model << ','
        << (r.valid && std::isfinite(r.fee_pct) ? format_double(r.fee_pct) : "NA") << '\n';
  }
}

}  // namespace yieldfield
