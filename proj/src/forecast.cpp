#include "yieldfield/forecast.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "yieldfield/error.hpp"
#include "yieldfield/seeding.hpp"

namespace yieldfield {

namespace {

void check_horizon(int h) {
  if (h < 1) throw DomainError("forecast horizon must be at least 1, got " + std::to_string(h));
}

// Weights of each future yield on the latent posterior, one column per
// maturity, plus the variance of the innovations that arrive after the origin.
struct ForecastWeights {
  Eigen::MatrixXd factor;
  Eigen::MatrixXd field;
  Eigen::VectorXd factor_innovation;
  Eigen::VectorXd field_innovation;
};

double ar1_innovation_variance(const Ar1Params& p, int h) {
  const double phi2 = p.phi * p.phi;
  return (1.0 - std::pow(phi2, h)) / (1.0 - phi2) / p.tau;
}

void add_factor_weights(const FitResult& fit, int h, const Eigen::MatrixXd& loadings,
                        ForecastWeights& w) {
  const auto& m = fit.model;
  const Eigen::Index last = m.time_points - 1;
  for (Eigen::Index j = 0; j < loadings.rows(); ++j)
    for (int i = 0; i < 3; ++i) {
      const auto& p = fit.hyper.factors[i];
      w.factor(m.fixed_index(i), j) += loadings(j, i);
      w.factor(m.factor_index(i, last), j) += std::pow(p.phi, h) * loadings(j, i);
      w.factor_innovation(j) += loadings(j, i) * loadings(j, i) * ar1_innovation_variance(p, h);
    }
}

void add_field_weights(const FitResult& fit, int h, const std::vector<double>& maturities,
                       ForecastWeights& w) {
  const auto& ctx = *fit.context;
  const auto& m = fit.model;
  const Eigen::Index M = static_cast<Eigen::Index>(maturities.size());
  if (m.field_dim == 0) return;
  if (m.st) {
    const auto& st = *m.st;
    const Eigen::Index n = st.propagator.rows();
    Eigen::MatrixXd pts(M, 1);
    for (Eigen::Index j = 0; j < M; ++j) pts(j, 0) = ctx.scaling.maturity(maturities[j]);
    const Eigen::MatrixXd p = Eigen::MatrixXd(projection_matrix(ctx.mesh, pts));
    Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd accumulated = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < h; ++k) {
      accumulated += power * st.innovation_cov * power.transpose();
      power = st.propagator * power;
    }
    const Eigen::Index block = m.field_offset() + (m.time_points - 1) * n;
    w.field.middleRows(block, n) = (p * power).transpose();
    w.field_innovation = (p * accumulated * p.transpose()).diagonal();
    return;
  }
  Eigen::MatrixXd pts(M, 2);
  const double t = static_cast<double>(m.time_points - 1 + h);
  for (Eigen::Index j = 0; j < M; ++j) pts.row(j) = ctx.scaling(t, maturities[j]).transpose();
  const SparseMatrix rows = projection_matrix(ctx.mesh, pts) * m.field.evaluation;
  w.field.middleRows(m.field_offset(), m.field_dim) = Eigen::MatrixXd(rows).transpose();
}

ForecastWeights forecast_weights(const FitResult& fit, int h, const std::vector<double>& maturities,
                                 bool factors, bool field) {
  check_horizon(h);
  if (maturities.empty()) throw DomainError("no maturities to forecast");
  const Eigen::Index n = fit.posterior.size();
  const Eigen::Index M = static_cast<Eigen::Index>(maturities.size());
  ForecastWeights w{Eigen::MatrixXd::Zero(n, M), Eigen::MatrixXd::Zero(n, M),
                    Eigen::VectorXd::Zero(M), Eigen::VectorXd::Zero(M)};
  if (factors) {
    const auto l = nsbasis::observation_matrix(fit.lambda, maturities).matrix;
    add_factor_weights(fit, h, l, w);
  }
  if (field) add_field_weights(fit, h, maturities, w);
  return w;
}

// Column-wise quadratic forms a_j' S b_j with S the posterior covariance.
Eigen::VectorXd quad(const Eigen::MatrixXd& a, const Eigen::MatrixXd& sb) {
  return (a.array() * sb.array()).colwise().sum().transpose();
}

}  // namespace

FactorForecast forecast_factors(const FitResult& fit, int h) {
  check_horizon(h);
  const auto& m = fit.model;
  const Eigen::Index n = fit.posterior.size();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, 3);
  FactorForecast out;
  for (int i = 0; i < 3; ++i) {
    const auto& p = fit.hyper.factors[i];
    w(m.fixed_index(i), i) = 1.0;
    w(m.factor_index(i, m.time_points - 1), i) = std::pow(p.phi, h);
    out.variance(i) = ar1_innovation_variance(p, h);
  }
  out.mean = w.transpose() * fit.posterior.mean;
  out.variance += quad(w, fit.posterior.factor->solve(w));
  return out;
}

FieldForecast forecast_field(const FitResult& fit, int h, const std::vector<double>& maturities) {
  const auto w = forecast_weights(fit, h, maturities, false, true);
  FieldForecast out;
  out.mean = w.field.transpose() * fit.posterior.mean;
  out.variance = w.field_innovation;
  if (fit.model.field_dim > 0) out.variance += quad(w.field, fit.posterior.factor->solve(w.field));
  return out;
}

PredictiveDistribution predict_yield(const FitResult& fit, int h,
                                     const std::vector<double>& maturities) {
  const auto w = forecast_weights(fit, h, maturities, true, true);
  const Eigen::Index M = static_cast<Eigen::Index>(maturities.size());
  PredictiveDistribution out;
  out.origin = fit.context->window.dates.back();
  out.horizon = h;
  out.maturities = maturities;
  out.trend_mean = w.factor.transpose() * fit.posterior.mean;
  out.field_mean = w.field.transpose() * fit.posterior.mean;
  out.mean = out.trend_mean + out.field_mean;
  const Eigen::MatrixXd sf = fit.posterior.factor->solve(w.factor);
  out.var_factor = quad(w.factor, sf) + w.factor_innovation;
  if (fit.model.field_dim > 0) {
    const Eigen::MatrixXd su = fit.posterior.factor->solve(w.field);
    out.var_field = quad(w.field, su) + w.field_innovation;
    out.var_cross = quad(w.factor, su);
  } else {
    out.var_field = Eigen::VectorXd::Zero(M);
    out.var_cross = Eigen::VectorXd::Zero(M);
  }
  out.var_noise = Eigen::VectorXd::Constant(M, 1.0 / fit.hyper.noise_precision);
  const Eigen::VectorXd total = out.var_factor + out.var_field + 2.0 * out.var_cross + out.var_noise;
  out.sd = total.cwiseMax(out.var_noise).cwiseSqrt();
  out.seed = derive_seed(0, {static_cast<std::uint64_t>(out.origin), static_cast<std::uint64_t>(h)});
  return out;
}

PredictiveDistribution two_step_baseline(const YieldPanel& window, int h,
                                         const std::vector<double>& maturities, double lambda) {
  check_horizon(h);
  const Eigen::Index T = window.months();
  if (T < kBaselineMinimumWindow) {
    throw RangeError("two-step baseline needs at least 24 months, got " + std::to_string(T));
  }
  const Eigen::MatrixXd f = ols_factors(window, lambda);
  const auto l_panel = nsbasis::observation_matrix(lambda, window.maturities).matrix;
  const double resid_var = (window.yields - f * l_panel.transpose()).squaredNorm() /
                           static_cast<double>(T * window.maturity_count());
  Eigen::Vector3d mean, var;
  for (int i = 0; i < 3; ++i) {
    Eigen::MatrixXd x(T - 1, 2);
    x.col(0).setOnes();
    x.col(1) = f.col(i).head(T - 1);
    const Eigen::VectorXd y = f.col(i).tail(T - 1);
    const Eigen::Vector2d b = x.colPivHouseholderQr().solve(y);
    const double s2 = (y - x * b).squaredNorm() / static_cast<double>(T - 3);
    double m = f(T - 1, i), v = 0.0;
    for (int k = 0; k < h; ++k) {
      m = b(0) + b(1) * m;
      v = b(1) * b(1) * v + s2;
    }
    mean(i) = m;
    var(i) = v;
  }
  const auto l = nsbasis::observation_matrix(lambda, maturities).matrix;
  const Eigen::Index M = static_cast<Eigen::Index>(maturities.size());
  PredictiveDistribution out;
  out.origin = window.dates.back();
  out.horizon = h;
  out.maturities = maturities;
  out.trend_mean = l * mean;
  out.field_mean = Eigen::VectorXd::Zero(M);
  out.mean = out.trend_mean;
  out.var_factor = l.array().square().matrix() * var;
  out.var_field = Eigen::VectorXd::Zero(M);
  out.var_cross = Eigen::VectorXd::Zero(M);
  out.var_noise = Eigen::VectorXd::Constant(M, resid_var);
  out.sd = (out.var_factor + out.var_noise).cwiseSqrt();
  out.seed = derive_seed(0, {static_cast<std::uint64_t>(out.origin), static_cast<std::uint64_t>(h)});
  return out;
}

std::vector<RmseCell> BacktestReport::recompute_rmse() const {
  std::map<std::pair<int, double>, std::pair<double, int>> acc;
  for (const auto& r : records) {
    auto& [sum, count] = acc[{r.horizon, r.maturity}];
    const double e = r.mean - r.actual;
    sum += e * e;
    ++count;
  }
  std::vector<RmseCell> out;
  for (const auto& [key, v] : acc) out.push_back({key.first, key.second, std::sqrt(v.first / v.second), v.second});
  return out;
}

Forecaster make_forecaster(const ModelSpec& spec, bool reestimate) {
  spec.validate();
  if (spec.trend == Trend::two_step) {
    const double lambda = spec.lambda;
    return [lambda](const YieldPanel& window, const std::vector<int>& horizons,
                    const std::vector<double>& maturities, std::optional<Eigen::VectorXd>&) {
      std::vector<PredictiveDistribution> out;
      for (int h : horizons) out.push_back(two_step_baseline(window, h, maturities, lambda));
      return out;
    };
  }
  return [spec, reestimate](const YieldPanel& window, const std::vector<int>& horizons,
                            const std::vector<double>& maturities, std::optional<Eigen::VectorXd>& warm) {
    ModelSpec s = spec;
    for (int h : horizons) s.mesh.forward_months = std::max(s.mesh.forward_months, h);
    const bool hold = !reestimate && warm;
    ModelSpec held = s;
    if (hold) {
      held.optimizer.max_evaluations = 1;
      held.optimizer.restarts = 0;
    }
    FitResult f;
    try {
      f = fit(make_context(held, window), warm);
    } catch (const ConvergenceError&) {
      if (!warm) throw;
      f = fit(make_context(s, window));
    }
    warm = f.theta;
    std::vector<PredictiveDistribution> out;
    for (int h : horizons) out.push_back(predict_yield(f, h, maturities));
    return out;
  };
}

namespace {

struct OriginJob {
  Eigen::Index train_start = 0;
  Eigen::Index train_end = 0;
  std::vector<int> horizons;
};

struct ChunkResult {
  std::vector<BacktestRecord> records;
  std::vector<FailedOrigin> failures;
};

}  // namespace

BacktestReport run_backtest(const std::string& model, const Forecaster& forecaster,
                            const YieldPanel& panel, const std::vector<WindowSpec>& windows,
                            const std::vector<double>& maturities, const BacktestOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  if (maturities.empty()) throw DomainError("backtest needs at least one maturity");
  std::vector<Eigen::Index> columns;
  for (double m : maturities) columns.push_back(panel.maturity_index(m));
  std::map<std::pair<Eigen::Index, Eigen::Index>, std::vector<int>> grouped;
  for (const auto& w : windows) {
    if (w.train_start < 0 || w.train_end < w.train_start || w.target() >= panel.months()) {
      throw RangeError("backtest window runs outside the panel");
    }
    auto& hs = grouped[{w.train_end, w.train_start}];
    if (std::find(hs.begin(), hs.end(), w.horizon) == hs.end()) hs.push_back(w.horizon);
  }
  std::vector<OriginJob> jobs;
  for (auto& [key, hs] : grouped) {
    std::sort(hs.begin(), hs.end());
    jobs.push_back({key.second, key.first, hs});
  }
  const int chunks = std::max(1, std::min<int>(options.warm_start_chunks, static_cast<int>(jobs.size())));
  std::vector<ChunkResult> results(chunks);
  auto run_chunk = [&](int c) {
    const std::size_t begin = jobs.size() * c / chunks, end = jobs.size() * (c + 1) / chunks;
    std::optional<Eigen::VectorXd> warm;
    for (std::size_t k = begin; k < end; ++k) {
      const auto& job = jobs[k];
      const int origin = panel.dates[job.train_end];
      try {
        const YieldPanel window = panel.rows(job.train_start, job.train_end);
        const auto preds = forecaster(window, job.horizons, maturities, warm);
        if (preds.size() != job.horizons.size()) throw SizeError("forecaster returned the wrong count");
        for (std::size_t hi = 0; hi < preds.size(); ++hi) {
          const int h = job.horizons[hi];
          const auto& p = preds[hi];
          for (std::size_t j = 0; j < maturities.size(); ++j) {
            results[c].records.push_back({origin, h, maturities[j], p.mean(j), p.sd(j),
                                          panel.yields(job.train_end + h, columns[j])});
          }
        }
      } catch (const Error& e) {
        results[c].failures.push_back({origin, e.what()});
        warm.reset();
      }
    }
  };
  const int threads = std::max(1, std::min(options.threads, chunks));
  if (threads == 1) {
    for (int c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (int c = next++; c < chunks; c = next++) run_chunk(c);
      });
    for (auto& th : pool) th.join();
  }
  BacktestReport report;
  report.model = model;
  for (auto& r : results) {
    report.records.insert(report.records.end(), r.records.begin(), r.records.end());
    report.failures.insert(report.failures.end(), r.failures.begin(), r.failures.end());
  }
  std::stable_sort(report.records.begin(), report.records.end(),
                   [](const BacktestRecord& a, const BacktestRecord& b) {
                     if (a.horizon != b.horizon) return a.horizon < b.horizon;
                     if (a.maturity != b.maturity) return a.maturity < b.maturity;
                     return a.origin < b.origin;
                   });
  for (const auto& f : report.failures) warn("origin " + format_month(f.origin) + " skipped: " + f.message);
  report.rmse = report.recompute_rmse();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

BacktestReport run_backtest(const ModelSpec& spec, const YieldPanel& panel,
                            const std::vector<WindowSpec>& windows,
                            const std::vector<double>& maturities, const BacktestOptions& options) {
  return run_backtest(spec.tag(), make_forecaster(spec, options.reestimate), panel, windows, maturities, options);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_forecasts_csv(std::ostream& out, const std::vector<BacktestReport>& reports, bool header) {
  if (header) out << "model,origin,horizon,maturity,mean,sd,actual\n";
  for (const auto& rep : reports)
    for (const auto& r : rep.records) {
      out << rep.model << ',' << format_month(r.origin) << ',' << r.horizon << ','
          << format_double(r.maturity) << ',' << format_double(r.mean) << ','
          << format_double(r.sd) << ',' << format_double(r.actual) << '\n';
    }
}

void write_rmse_csv(std::ostream& out, const std::vector<BacktestReport>& reports, bool header) {
  if (header) out << "model,horizon,maturity,rmse\n";
  for (const auto& rep : reports)
    for (const auto& c : rep.rmse) {
      out << rep.model << ',' << c.horizon << ',' << format_double(c.maturity) << ','
          << format_double(c.rmse) << '\n';
    }
}

std::vector<BacktestReport> read_forecasts_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<BacktestReport> out;
  std::map<std::string, std::size_t> index;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> tok;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) tok.push_back(cell);
    if (!seen_header) {
      seen_header = true;
      if (line != "model,origin,horizon,maturity,mean,sd,actual") {
        throw ParseError("expected forecasts header model,origin,horizon,maturity,mean,sd,actual",
                         lineno);
      }
      continue;
    }
    if (tok.size() != 7) throw ParseError("expected 7 fields", lineno);
    BacktestRecord r;
    try {
      r.origin = parse_month(tok[1]);
      r.horizon = std::stoi(tok[2]);
      r.maturity = std::stod(tok[3]);
      r.mean = std::stod(tok[4]);
      r.sd = std::stod(tok[5]);
      r.actual = std::stod(tok[6]);
    } catch (const ParseError&) {
      throw ParseError("bad origin '" + tok[1] + "'", lineno);
    } catch (const std::exception&) {
      throw ParseError("bad numeric field", lineno);
    }
    auto it = index.find(tok[0]);
    if (it == index.end()) {
      it = index.emplace(tok[0], out.size()).first;
      out.push_back({});
      out.back().model = tok[0];
    }
    out[it->second].records.push_back(r);
  }
  if (out.empty()) throw ValidationError("forecasts file has no records");
  for (auto& rep : out) rep.rmse = rep.recompute_rmse();
  return out;
}

}  // namespace yieldfield
