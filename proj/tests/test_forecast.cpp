#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "yieldfield/error.hpp"
#include "yieldfield/forecast.hpp"
#include "yieldfield/simulate.hpp"

using namespace yieldfield;

namespace {

const std::vector<double> kMats{3.0, 12.0, 36.0, 60.0, 120.0};

FitResult quick_fit(Residual r, Eigen::Index months, std::uint64_t seed, double resolution = 0.25) {
  DnsTruth truth;
  std::optional<SpatiotemporalTruth> st;
  if (r == Residual::spatiotemporal) st = SpatiotemporalTruth{};
  const auto sim = simulate_panel(months, standard_maturities(), truth, seed, st);
  ModelSpec spec;
  spec.residual = r;
  spec.mesh.resolution = resolution;
  spec.mesh.maturity_resolution = 0.15;
  spec.optimizer.max_evaluations = 300;
  return fit_map(make_context(spec, sim.panel));
}

// Dense posterior covariance, inverted directly.
Eigen::MatrixXd dense_posterior_cov(const FitResult& f) {
  return oracle::dense(f.posterior.precision).inverse();
}

}  // namespace

TEST_CASE("factor forecasts follow the AR(1) recursion and its ergodic limit") {
  const FitResult f = quick_fit(Residual::none, 48, 1);
  const Eigen::MatrixXd s = dense_posterior_cov(f);
  const auto& m = f.model;
  const auto f1 = forecast_factors(f, 1), f2 = forecast_factors(f, 2), far = forecast_factors(f, 2000);
  for (int i = 0; i < 3; ++i) {
    const double phi = f.hyper.factors[i].phi, sig2 = 1.0 / f.hyper.factors[i].tau;
    const double mu = f.posterior.mean(m.fixed_index(i));
    const double last = f.posterior.mean(m.factor_index(i, m.time_points - 1));
    CHECK(f1.mean(i) == doctest::Approx(mu + phi * last).epsilon(1e-12));
    // two applications of the one-step recursion on the mean
    CHECK(f2.mean(i) == doctest::Approx(mu + phi * (f1.mean(i) - mu)).epsilon(1e-12));
    // dense quadratic form for the variance
    const Eigen::Index a = m.fixed_index(i), b = m.factor_index(i, m.time_points - 1);
    for (int h : {1, 2}) {
      const double ph = std::pow(phi, h);
      const double v = s(a, a) + 2 * ph * s(a, b) + ph * ph * s(b, b) +
                       sig2 * (1 - std::pow(phi, 2 * h)) / (1 - phi * phi);
      CHECK((h == 1 ? f1 : f2).variance(i) == doctest::Approx(v).epsilon(1e-8));
    }
    CHECK(far.mean(i) == doctest::Approx(mu).epsilon(1e-10));
    CHECK(far.variance(i) == doctest::Approx(s(a, a) + sig2 / (1 - phi * phi)).epsilon(1e-8));
  }
  CHECK_THROWS_AS(forecast_factors(f, 0), DomainError);
}

TEST_CASE("bdns predictive reduces to factor forecasts and widens with h") {
  const FitResult f = quick_fit(Residual::none, 48, 2);
  const auto l = nsbasis::observation_matrix(f.lambda, kMats).matrix;
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(5);
  for (int h : {1, 2, 6, 12, 24}) {
    const auto p = predict_yield(f, h, kMats);
    const auto ff = forecast_factors(f, h);
    CHECK((p.mean - l * ff.mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(p.var_field.cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.var_cross.cwiseAbs().maxCoeff() == 0.0);
    const Eigen::VectorXd total = p.var_factor + p.var_field + 2 * p.var_cross + p.var_noise;
    CHECK((p.variance() - total).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((p.sd.array() >= prev.array()).all());
    CHECK((p.variance().array() >= p.var_noise.array()).all());
    prev = p.sd;
  }
}

TEST_CASE("spatial predictive matches dense joint-Gaussian kriging") {
  const FitResult f = quick_fit(Residual::stationary, 12, 3, 0.3);
  const auto& ctx = *f.context;
  const auto& m = f.model;
  const std::vector<double> mats{3.0, 60.0};
  const Eigen::MatrixXd qprior = oracle::dense(m.q_prior);
  const Eigen::MatrixXd s0 = qprior.inverse();
  const Eigen::MatrixXd a = oracle::dense(m.a);
  const double noise = 1.0 / m.noise_precision;
  const Eigen::MatrixXd sy = a * s0 * a.transpose() + noise * Eigen::MatrixXd::Identity(a.rows(), a.rows());
  const Eigen::LLT<Eigen::MatrixXd> llt(sy);
  for (int h : {1, 3}) {
    const auto p = predict_yield(f, h, mats);
    const auto l = nsbasis::observation_matrix(f.lambda, mats).matrix;
    Eigen::MatrixXd pts(2, 2);
    for (int j = 0; j < 2; ++j) pts.row(j) = ctx.scaling(m.time_points - 1 + h, mats[j]).transpose();
    const Eigen::MatrixXd prow = oracle::dense(projection_matrix(ctx.mesh, pts) * m.field.evaluation);
    for (int j = 0; j < 2; ++j) {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(a.cols());
      double innov = 0.0;
      for (int i = 0; i < 3; ++i) {
        const auto& fp = f.hyper.factors[i];
        w(m.fixed_index(i)) = l(j, i);
        w(m.factor_index(i, m.time_points - 1)) = std::pow(fp.phi, h) * l(j, i);
        innov += l(j, i) * l(j, i) * (1 - std::pow(fp.phi, 2 * h)) / (1 - fp.phi * fp.phi) / fp.tau;
      }
      w.segment(m.field_offset(), m.field_dim) = prow.row(j).transpose();
      const Eigen::VectorXd c = a * s0 * w;
      const double mean = c.dot(llt.solve(ctx.y));
      const double var = w.dot(s0 * w) - c.dot(llt.solve(c)) + innov + noise;
      CHECK(p.mean(j) == doctest::Approx(mean).epsilon(1e-8));
      CHECK(p.sd(j) == doctest::Approx(std::sqrt(var)).epsilon(1e-6));
    }
    const Eigen::VectorXd total = p.var_factor + p.var_field + 2 * p.var_cross + p.var_noise;
    CHECK((p.variance() - total).cwiseAbs().maxCoeff() < 1e-10);
    const auto ff = forecast_field(f, h, mats);
    CHECK((ff.mean - p.field_mean).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("spatio-temporal field forecasts revert to the stationary marginal") {
  const FitResult f = quick_fit(Residual::spatiotemporal, 36, 4);
  const auto& ctx = *f.context;
  Eigen::MatrixXd pts(kMats.size(), 1);
  for (std::size_t j = 0; j < kMats.size(); ++j) pts(j, 0) = ctx.scaling.maturity(kMats[j]);
  const Eigen::MatrixXd p = oracle::dense(projection_matrix(ctx.mesh, pts));
  const Eigen::VectorXd stationary = (p * f.model.st->stationary_cov * p.transpose()).diagonal();
  const auto far = forecast_field(f, 120, kMats);
  CHECK(far.mean.cwiseAbs().maxCoeff() < 1e-3 * std::sqrt(stationary.maxCoeff()));
  for (std::size_t j = 0; j < kMats.size(); ++j)
    CHECK(far.variance(j) == doctest::Approx(stationary(j)).epsilon(0.01));
  const auto near = forecast_field(f, 1, kMats);
  CHECK((near.variance.array() <= far.variance.array() * 1.0001).all());
  const auto pred = predict_yield(f, 1, kMats);
  const Eigen::VectorXd total = pred.var_factor + pred.var_field + 2 * pred.var_cross + pred.var_noise;
  CHECK((pred.variance() - total).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("two-step baseline") {
  YieldPanel flat;
  flat.maturities = standard_maturities();
  flat.yields = Eigen::MatrixXd::Constant(30, flat.maturities.size(), 5.0);
  for (int t = 0; t < 30; ++t) flat.dates.push_back(add_months(199001, t));
  const auto p = two_step_baseline(flat, 6, kMats);
  CHECK((p.mean.array() - 5.0).abs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(two_step_baseline(flat.rows(0, 10), 1, kMats), RangeError);

  // factor extraction against the normal equations
  const auto sim = simulate_panel(40, standard_maturities(), DnsTruth{}, 5);
  const Eigen::MatrixXd f = ols_factors(sim.panel, 0.0609);
  const Eigen::MatrixXd l = nsbasis::observation_matrix(0.0609, standard_maturities()).matrix;
  const Eigen::Vector3d ref = (l.transpose() * l).inverse() * l.transpose() * sim.panel.yields.row(7).transpose();
  CHECK((f.row(7).transpose() - ref).cwiseAbs().maxCoeff() < 1e-10);

  // AR(1) with intercept by least squares, iterated
  const auto q = two_step_baseline(sim.panel, 2, kMats);
  Eigen::Vector3d m2;
  for (int i = 0; i < 3; ++i) {
    const Eigen::VectorXd x = f.col(i).head(39), y = f.col(i).tail(39);
    const double xm = x.mean(), ym = y.mean();
    const double phi = (x.array() - xm).matrix().dot((y.array() - ym).matrix()) / (x.array() - xm).square().sum();
    const double c = ym - phi * xm;
    m2(i) = c + phi * (c + phi * f(39, i));
  }
  const Eigen::MatrixXd lk = nsbasis::observation_matrix(0.0609, kMats).matrix;
  CHECK((q.mean - lk * m2).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((q.sd.array() > 0).all());
}

TEST_CASE("backtest bookkeeping with stub forecasters") {
  const auto sim = simulate_panel(60, standard_maturities(), DnsTruth{}, 6);
  const auto& panel = sim.panel;
  std::vector<WindowSpec> windows;
  for (int h : {1, 6}) {
    auto w = rolling_origins(panel, panel.dates[30], panel.dates[45], h, WindowScheme::moving);
    windows.insert(windows.end(), w.begin(), w.end());
  }
  Forecaster perfect = [&](const YieldPanel& window, const std::vector<int>& hs,
                           const std::vector<double>& mats, std::optional<Eigen::VectorXd>&) {
    std::vector<PredictiveDistribution> out;
    const Eigen::Index origin = panel.index_of(window.dates.back());
    for (int h : hs) {
      PredictiveDistribution p;
      p.horizon = h;
      p.mean.resize(mats.size());
      p.sd = Eigen::VectorXd::Constant(mats.size(), 1e-9);
      for (std::size_t j = 0; j < mats.size(); ++j)
        p.mean(j) = panel.yields(origin + h, panel.maturity_index(mats[j]));
      out.push_back(p);
    }
    return out;
  };
  const auto rep = run_backtest("oracle", perfect, panel, windows, kMats);
  CHECK(rep.records.size() == 2 * 16 * 5);
  CHECK(rep.rmse.size() == 10);
  for (const auto& c : rep.rmse) CHECK(c.rmse == 0.0);

  Forecaster noisy = [&](const YieldPanel& window, const std::vector<int>& hs,
                         const std::vector<double>& mats, std::optional<Eigen::VectorXd>& warm) {
    if (window.dates.back() == panel.dates[40]) throw NumericalError("stub failure");
    auto out = perfect(window, hs, mats, warm);
    for (auto& p : out) p.mean.array() += 0.01 * (window.dates.back() % 7);
    return out;
  };
  BacktestOptions serial, parallel;
  parallel.threads = 3;
  const auto a = run_backtest("noisy", noisy, panel, windows, kMats, serial);
  const auto b = run_backtest("noisy", noisy, panel, windows, kMats, parallel);
  REQUIRE(a.failures.size() == 1);
  CHECK(a.failures[0].origin == panel.dates[40]);
  std::ostringstream ca, cb, ra;
  write_forecasts_csv(ca, {a});
  write_forecasts_csv(cb, {b});
  CHECK(ca.str() == cb.str());
  const auto re = a.recompute_rmse();
  for (std::size_t k = 0; k < re.size(); ++k) CHECK(re[k].rmse == a.rmse[k].rmse);

  std::istringstream in(ca.str());
  const auto back = read_forecasts_csv(in);
  REQUIRE(back.size() == 1);
  CHECK(back[0].records.size() == a.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    CHECK(back[0].records[k].mean == a.records[k].mean);
    CHECK(back[0].records[k].origin == a.records[k].origin);
  }
  for (std::size_t k = 0; k < re.size(); ++k) CHECK(back[0].rmse[k].rmse == a.rmse[k].rmse);
  write_rmse_csv(ra, {a});
  CHECK(ra.str().rfind("model,horizon,maturity,rmse\nnoisy,1,3,", 0) == 0);

  std::istringstream empty("model,origin,horizon,maturity,mean,sd,actual\n");
  CHECK_THROWS_AS(read_forecasts_csv(empty), ValidationError);
}

TEST_CASE("model backtests are deterministic and thread-count independent") {
  const auto sim = simulate_panel(50, standard_maturities(), DnsTruth{}, 7);
  const auto windows = rolling_origins(sim.panel, sim.panel.dates[40], sim.panel.dates[47], 1,
                                       WindowScheme::moving);
  ModelSpec spec;
  spec.optimizer.max_evaluations = 400;
  BacktestOptions one, three;
  three.threads = 3;
  const auto a = run_backtest(spec, sim.panel, windows, kMats, one);
  const auto b = run_backtest(spec, sim.panel, windows, kMats, three);
  CHECK(a.failures.empty());
  std::ostringstream ca, cb;
  write_forecasts_csv(ca, {a});
  write_forecasts_csv(cb, {b});
  CHECK(ca.str() == cb.str());
  for (const auto& c : a.rmse) CHECK(c.rmse < 1.0);

  ModelSpec base;
  base.trend = Trend::two_step;
  const auto c = run_backtest(base, sim.panel, windows, kMats);
  CHECK(c.model == "baseline");
  CHECK(c.records.size() == a.records.size());
}

TEST_CASE("hyperparameters can be held at the first window's estimate") {
  const auto sim = simulate_panel(50, standard_maturities(), DnsTruth{}, 8);
  ModelSpec spec;
  spec.optimizer.max_evaluations = 400;
  const auto held = make_forecaster(spec, false);
  const auto refit = make_forecaster(spec, true);
  std::optional<Eigen::VectorXd> warm_held, warm_refit;
  held(sim.panel.rows(0, 39), {1}, kMats, warm_held);
  refit(sim.panel.rows(0, 39), {1}, kMats, warm_refit);
  REQUIRE(warm_held.has_value());
  CHECK(*warm_held == *warm_refit);
  const Eigen::VectorXd first = *warm_held;
  const auto p = held(sim.panel.rows(1, 40), {1}, kMats, warm_held);
  CHECK(*warm_held == first);
  CHECK(p.front().sd.minCoeff() > 0.0);
  refit(sim.panel.rows(1, 40), {1}, kMats, warm_refit);
  CHECK(*warm_refit != first);
}
