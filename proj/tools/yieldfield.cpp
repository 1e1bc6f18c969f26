// Command-line driver: ingest, fit, forecast, backtest, score, diagnose, portfolio.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "yieldfield/config.hpp"
#include "yieldfield/diagnostics.hpp"
#include "yieldfield/error.hpp"
#include "yieldfield/forecast.hpp"
#include "yieldfield/inference.hpp"
#include "yieldfield/portfolio.hpp"
#include "yieldfield/scoring.hpp"
#include "yieldfield/seeding.hpp"

namespace fs = std::filesystem;
using namespace yieldfield;

namespace {

struct Globals {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::string> data;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool verbose = false;
};

struct Session {
  RunConfig cfg;
  int threads = 1;
  bool verbose = false;

  void log(const std::string& msg) const {
    if (verbose) std::cerr << msg << '\n';
  }
  fs::path out(const std::string& file) const { return fs::path(cfg.out_dir) / file; }

  YieldPanel panel() const {
    const auto path = resolve_data_path(cfg.data_path);
    if (!path) throw ValidationError("no data file: set data.path, --data or YIELDFIELD_DATA");
    ParseOptions opt;
    opt.restrict_to_standard = cfg.restrict_to_standard;
    log("reading " + *path);
    return load_panel(*path, opt);
  }
};

Session open_session(const Globals& g) {
  Session s;
  if (!g.config.empty()) s.cfg = load_config(g.config);
  if (g.out) s.cfg.out_dir = *g.out;
  if (g.data) s.cfg.data_path = *g.data;
  if (g.seed) {
    s.cfg.seed = *g.seed;
    s.cfg.scoring.seed = *g.seed;
  }
  s.threads = g.threads > 0 ? g.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  s.cfg.scoring.threads = s.threads;
  s.verbose = g.verbose;
  fs::create_directories(s.cfg.out_dir);
  return s;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  return f;
}

void require_latent_model(const RunConfig& cfg, const char* command) {
  if (cfg.model.trend == Trend::two_step) {
    throw ValidationError(std::string(command) + ": the two-step baseline has no latent model");
  }
}

int cmd_ingest(const Globals& g) {
  const Session s = open_session(g);
  const YieldPanel p = s.panel();
  auto f = open_out(s.out("panel.csv"));
  f << to_wide_csv(p);
  std::cout << p.months() << " months × " << p.maturity_count() << " maturities, "
            << format_month(p.dates.front()) << ".." << format_month(p.dates.back()) << '\n';
  return 0;
}

int cmd_fit(const Globals& g) {
  const Session s = open_session(g);
  require_latent_model(s.cfg, "fit");
  const YieldPanel window = fit_window(s.cfg, s.panel());
  const auto t0 = std::chrono::steady_clock::now();
  const FitResult r = fit(make_context(s.cfg.model, window));
  s.log("fit in " + format_double(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) + " s");
  open_out(s.out("fit.json")) << to_json(r) << '\n';
  auto side = open_out(s.out("latent.bin"));
  write_latent_sidecar(side, r);
  std::cout << s.cfg.name() << ": log posterior " << format_double(r.log_posterior) << ", lambda "
            << format_double(r.lambda) << (r.converged ? "" : " (not converged)") << '\n';
  return 0;
}

void write_predictive_csv(std::ostream& out, const std::string& model,
                          const std::vector<PredictiveDistribution>& preds) {
  out << "model,origin,horizon,maturity,mean,sd,trend_mean,field_mean,var_factor,var_field,var_cross,var_noise\n";
  for (const auto& p : preds)
    for (std::size_t j = 0; j < p.maturities.size(); ++j) {
      const auto i = static_cast<Eigen::Index>(j);
      const auto part = [&](const Eigen::VectorXd& v) { return v.size() > i ? format_double(v(i)) : std::string("NA"); };
      out << model << ',' << p.origin << ',' << p.horizon << ',' << format_double(p.maturities[j]) << ','
          << format_double(p.mean(i)) << ',' << format_double(p.sd(i)) << ',' << part(p.trend_mean) << ','
          << part(p.field_mean) << ',' << part(p.var_factor) << ',' << part(p.var_field) << ','
          << part(p.var_cross) << ',' << part(p.var_noise) << '\n';
    }
}

int cmd_forecast(const Globals& g) {
  const Session s = open_session(g);
  const YieldPanel window = fit_window(s.cfg, s.panel());
  std::vector<PredictiveDistribution> preds;
  if (s.cfg.model.trend == Trend::two_step) {
    for (int h : s.cfg.window.horizons) preds.push_back(two_step_baseline(window, h, s.cfg.maturities, s.cfg.model.lambda));
  } else {
    ModelSpec spec = s.cfg.model;
    for (int h : s.cfg.window.horizons) spec.mesh.forward_months = std::max(spec.mesh.forward_months, h);
    const FitResult r = fit(make_context(spec, window));
    for (int h : s.cfg.window.horizons) preds.push_back(predict_yield(r, h, s.cfg.maturities));
  }
  auto f = open_out(s.out("predictive.csv"));
  write_predictive_csv(f, s.cfg.name(), preds);
  std::cout << "forecast from " << format_month(window.dates.back()) << " for " << preds.size()
            << " horizon(s)\n";
  return 0;
}

int cmd_backtest(const Globals& g) {
  const Session s = open_session(g);
  const YieldPanel panel = s.panel();
  std::vector<WindowSpec> windows;
  for (int h : s.cfg.window.horizons) {
    const auto w = backtest_windows(s.cfg, panel, h);
    windows.insert(windows.end(), w.begin(), w.end());
  }
  BacktestOptions opt;
  opt.threads = s.threads;
  opt.warm_start_chunks = s.cfg.window.warm_start_chunks;
  opt.reestimate = s.cfg.window.reestimate;
  s.log("backtest " + s.cfg.name() + ": " + std::to_string(windows.size()) + " windows, " +
        std::to_string(s.threads) + " threads");
  BacktestReport rep = run_backtest(s.cfg.model, panel, windows, s.cfg.maturities, opt);
  rep.model = s.cfg.name();
  auto f = open_out(s.out("forecasts.csv"));
  write_forecasts_csv(f, {rep});
  auto r = open_out(s.out("rmse.csv"));
  write_rmse_csv(r, {rep});
  std::cout << rep.model << ": " << rep.records.size() << " forecasts, " << rep.failures.size()
            << " failed origins, " << format_double(std::round(rep.seconds * 100) / 100) << " s\n";
  for (const auto& c : rep.rmse)
    std::cout << "  h=" << c.horizon << " m=" << format_double(c.maturity) << " rmse "
              << format_double(std::round(c.rmse * 1000) / 1000) << '\n';
  // every origin failing is a numerical failure
  return rep.records.empty() && !rep.failures.empty() ? 1 : 0;
}

std::vector<BacktestReport> read_reports(const std::vector<std::string>& paths) {
  std::vector<BacktestReport> out;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open forecasts file: " + path);
    for (auto& r : read_forecasts_csv(in)) out.push_back(std::move(r));
  }
  return out;
}

int cmd_score(const Globals& g) {
  const Session s = open_session(g);
  const auto reports = read_reports({s.cfg.forecasts.value_or(s.out("forecasts.csv").string())});
  const YieldPanel panel = s.panel();
  std::vector<ScoreTable> tables;
  for (const auto& r : reports) tables.push_back(score_backtest(r, panel, s.cfg.scoring));
  auto f = open_out(s.out("scores.csv"));
  write_scores_csv(f, tables);
  std::size_t rows = 0;
  for (const auto& t : tables) rows += t.rows.size();
  std::cout << "scored " << reports.size() << " model(s), " << rows << " cells\n";
  return 0;
}

int cmd_diagnose(const Globals& g) {
  const Session s = open_session(g);
  require_latent_model(s.cfg, "diagnose");
  const YieldPanel window = fit_window(s.cfg, s.panel());
  const FitResult r = fit(make_context(s.cfg.model, window));
  ResidualField res = extract_residuals(r, window, s.cfg.diagnostics.residual);
  res.model = s.cfg.name();
  const auto summary = summarize_residuals(res);
  auto sf = open_out(s.out("diagnostics.csv"));
  write_summary_csv(sf, {summary});

  const auto corr = correlation_matrices(res);
  std::vector<std::string> labels;
  for (double m : res.maturities) labels.push_back(format_double(m));
  auto cm = open_out(s.out("corr_maturity.csv"));
  write_matrix_csv(cm, corr.maturity, labels);

  double max_dist = s.cfg.diagnostics.variogram_max_distance;
  if (max_dist <= 0.0) {
    const double dt = static_cast<double>(res.values.rows() - 1);
    const double dm = std::log(res.maturities.back() / res.maturities.front());
    max_dist = 0.5 * std::hypot(dt, dm);
  }
  auto vg = open_out(s.out("variogram.csv"));
  write_variogram_csv(vg, empirical_variogram(res, s.cfg.diagnostics.variogram_bins, max_dist,
                                              derive_seed(s.cfg.seed, {3})));

  const Eigen::MatrixXd w = adjacency_weights(res.values.cols());
  auto pt = open_out(s.out("permutation.csv"));
  pt << "date,morans_i,morans_i_p,gearys_c,gearys_c_p\n";
  for (Eigen::Index t = 0; t < res.values.rows(); ++t) {
    const Eigen::VectorXd slice = res.values.row(t).transpose();
    const auto seed = derive_seed(s.cfg.seed, {4, static_cast<std::uint64_t>(res.dates[t])});
    if (!morans_i(slice, w)) {
      pt << res.dates[t] << ",NA,NA,NA,NA\n";
      continue;
    }
    const auto mi = moran_permutation_test(slice, w, s.cfg.diagnostics.permutations, seed);
    const auto gc = geary_permutation_test(slice, w, s.cfg.diagnostics.permutations, seed);
    pt << res.dates[t] << ',' << format_double(mi.observed) << ',' << format_double(mi.p_value) << ','
       << format_double(gc.observed) << ',' << format_double(gc.p_value) << '\n';
  }
  std::cout << summary.model << ": abs corr " << format_double(summary.abs_corr) << ", Moran's I "
            << format_double(summary.morans_i.mean) << ", Geary's C " << format_double(summary.gearys_c.mean)
            << ", ACF1 " << format_double(summary.acf1) << '\n';
  return 0;
}

int cmd_portfolio(const Globals& g) {
  const Session s = open_session(g);
  auto paths = s.cfg.portfolio_forecasts;
  if (paths.empty()) paths.push_back(s.out("forecasts.csv").string());
  const auto reports = read_reports(paths);
  const auto rows = run_portfolio_study(reports, s.panel(), s.cfg.portfolio);
  auto f = open_out(s.out("fees.csv"));
  write_fees_csv(f, rows);
  std::cout << rows.size() << " fee cells vs " << s.cfg.portfolio.benchmark << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Yield-curve forecasting with structured Gaussian-field residuals"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "TOML run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "output directory");
  app.add_option("--data", g.data, "yield panel file");
  app.add_option("--seed", g.seed, "root random seed");
  app.add_option("--threads", g.threads, "worker threads (default: all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("--verbose,-v", g.verbose, "progress messages");

  int code = 0;
  const auto add = [&](const char* name, const char* help, int (*fn)(const Globals&)) {
    auto* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    sub->callback([&code, &g, fn] { code = fn(g); });
  };
  add("ingest", "parse a yield file and write the canonical CSV", cmd_ingest);
  add("fit", "fit the configured model on the fit window", cmd_fit);
  add("forecast", "predictive distributions from the end of the fit window", cmd_forecast);
  add("backtest", "rolling-origin forecasts and RMSE", cmd_backtest);
  add("score", "CRPS family scores of a forecasts file", cmd_score);
  add("diagnose", "residual dependence diagnostics", cmd_diagnose);
  add("portfolio", "performance fees against the benchmark", cmd_portfolio);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 1;
  }
  return code;
}
