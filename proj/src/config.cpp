#include "yieldfield/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "yieldfield/error.hpp"

namespace yieldfield {

namespace {

// A TOML table that remembers which keys were read.
class Section {
 public:
  Section(const toml::table* table, std::string path) : table_(table), path_(std::move(path)) {}

  bool has(std::string_view key) const { return table_ && table_->contains(key); }

  template <typename T>
  std::optional<T> get(std::string_view key) {
    if (!has(key)) return std::nullopt;
    used_.insert(std::string(key));
    const auto* node = table_->get(key);
    if constexpr (std::is_same_v<T, double>) {
      if (auto v = node->value<double>()) return *v;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (node->is_boolean()) return node->value<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (node->is_integer()) return static_cast<T>(*node->value<std::int64_t>());
    } else {
      if (node->is_string()) return node->value<std::string>();
    }
    throw ValidationError(qualified(key) + ": wrong type");
  }

  template <typename T>
  void read(std::string_view key, T& target) {
    if (auto v = get<T>(key)) target = *v;
  }

  template <typename T>
  std::optional<std::vector<T>> array(std::string_view key) {
    if (!has(key)) return std::nullopt;
    used_.insert(std::string(key));
    const auto* arr = table_->get(key)->as_array();
    if (!arr) throw ValidationError(qualified(key) + ": expected an array");
    std::vector<T> out;
    for (const auto& el : *arr) {
      std::optional<T> v;
      if constexpr (std::is_same_v<T, double>) {
        v = el.value<double>();
      } else if constexpr (std::is_integral_v<T>) {
        if (el.is_integer()) v = static_cast<T>(*el.value<std::int64_t>());
      } else {
        v = el.value<std::string>();
      }
      if (!v) throw ValidationError(qualified(key) + ": wrong element type");
      out.push_back(*v);
    }
    return out;
  }

  Section sub(std::string_view key) {
    if (!has(key)) return Section(nullptr, qualified(key));
    used_.insert(std::string(key));
    const auto* t = table_->get(key)->as_table();
    if (!t) throw ValidationError(qualified(key) + ": expected a table");
    return Section(t, qualified(key));
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    if (table_)
      for (const auto& [k, v] : *table_) out.emplace_back(k.str());
    return out;
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!used_.count(std::string(k.str()))) {
        throw ValidationError("unknown key '" + qualified(k.str()) + "'");
      }
    }
  }

 private:
  std::string qualified(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const toml::table* table_;
  std::string path_;
  std::set<std::string> used_;
};

int month_key(Section& s, std::string_view key, int fallback) {
  if (!s.has(key)) return fallback;
  if (auto i = s.get<long>(key)) {
    parse_month(std::to_string(*i));  // validates
    return static_cast<int>(*i);
  }
  return fallback;
}

std::optional<int> optional_month(Section& s, std::string_view key) {
  if (!s.has(key)) return std::nullopt;
  return month_key(s, key, 0);
}

void read_model(Section m, RunConfig& cfg) {
  ModelSpec& spec = cfg.model;
  m.read("name", cfg.model_name);
  if (auto t = m.get<std::string>("trend")) spec.trend = parse_trend(*t);
  if (auto r = m.get<std::string>("residual")) spec.residual = parse_residual(*r);
  m.read("lambda", spec.lambda);
  m.read("joint_lambda", spec.joint_lambda);
  if (auto p = m.get<std::string>("lambda_prior")) {
    if (*p == "lognormal") {
      spec.lambda_prior = nsbasis::lognormal_prior();
    } else if (*p == "gamma") {
      spec.lambda_prior = nsbasis::gamma_prior();
    } else {
      throw ValidationError("model.lambda_prior must be lognormal or gamma, got '" + *p + "'");
    }
  }
  m.read("lambda_prior_mean", spec.lambda_prior.mean);
  m.read("lambda_prior_shape_or_cv", spec.lambda_prior.shape_or_cv);
  m.read("alpha", spec.alpha);
  m.read("estimate_alpha", spec.estimate_alpha);
  m.read("spatiotemporal_alpha", spec.spatiotemporal_alpha);
  m.read("rational_order", spec.rational_order);
  double drift = 0.0;
  m.read("drift", drift);
  if (drift != 0.0) throw ValidationError("model.drift: only the zero-drift model is implemented");

  Section mesh = m.sub("mesh");
  mesh.read("resolution", spec.mesh.resolution);
  mesh.read("extension", spec.mesh.extension);
  mesh.read("maturity_resolution", spec.mesh.maturity_resolution);
  mesh.read("forward_months", spec.mesh.forward_months);
  mesh.finish();

  Section opt = m.sub("optimizer");
  opt.read("initial_step", spec.optimizer.initial_step);
  opt.read("tolerance", spec.optimizer.tolerance);
  opt.read("max_evaluations", spec.optimizer.max_evaluations);
  opt.read("restarts", spec.optimizer.restarts);
  opt.finish();

  Section priors = m.sub("priors");
  for (const auto& name : priors.keys()) {
    Section p = priors.sub(name);
    PriorDescriptor d;
    if (auto f = p.get<std::string>("family")) {
      d.family = parse_prior_family(*f);
    } else {
      throw ValidationError("model.priors." + name + ": family is required");
    }
    p.read("a", d.a);
    p.read("b", d.b);
    p.finish();
    d.validate();
    spec.priors[name] = d;
  }
  priors.finish();
  m.finish();
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (window.first_target > window.last_target) throw ValidationError("window: first_target after last_target");
  if (window.horizons.empty()) throw ValidationError("window.horizons is empty");
  for (int h : window.horizons)
    if (h < 1) throw ValidationError("window.horizons must be positive");
  if (window.stride < 1) throw ValidationError("window.stride must be positive");
  if (window.warm_start_chunks < 1) throw ValidationError("window.warm_start_chunks must be positive");
  if (maturities.empty()) throw ValidationError("maturities is empty");
  for (std::size_t i = 0; i < maturities.size(); ++i) {
    if (!(maturities[i] > 0.0)) throw ValidationError("maturities must be positive");
    if (i > 0 && !(maturities[i] > maturities[i - 1])) throw ValidationError("maturities must increase");
  }
  if (scoring.n_draws < 2) throw ValidationError("scoring.n_draws must be at least 2");
  if (!(scoring.threshold_factor > 0.0)) throw ValidationError("scoring.threshold_factor must be positive");
  if (diagnostics.variogram_bins < 2) throw ValidationError("diagnostics.variogram_bins must be at least 2");
  if (diagnostics.permutations < 1) throw ValidationError("diagnostics.permutations must be positive");
  if (portfolio.zetas.empty() || portfolio.maturities.empty()) throw ValidationError("portfolio grid is empty");
  for (double z : portfolio.zetas)
    if (!(z > 0.0)) throw ValidationError("portfolio.zetas must be positive");
  if (portfolio.horizon < 1) throw ValidationError("portfolio.horizon must be positive");
  if (!(portfolio.rra > 0.0)) throw ValidationError("portfolio.rra must be positive");
  if (fit_start && fit_end && *fit_start > *fit_end) throw ValidationError("fit.start after fit.end");
}

RunConfig parse_config(std::string_view toml_text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ": " << e.description() << " (line " << e.source().begin.line << ")";
    throw ValidationError(msg.str());
  }
  RunConfig cfg;
  Section top(&root, "");
  if (auto s = top.get<long>("seed")) {
    if (*s < 0) throw ValidationError("seed must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(*s);
  }
  top.read("out", cfg.out_dir);
  if (auto m = top.array<double>("maturities")) cfg.maturities = *m;

  Section data = top.sub("data");
  if (auto p = data.get<std::string>("path")) cfg.data_path = *p;
  data.read("restrict_to_standard", cfg.restrict_to_standard);
  data.finish();

  read_model(top.sub("model"), cfg);

  Section fit = top.sub("fit");
  cfg.fit_start = optional_month(fit, "start");
  cfg.fit_end = optional_month(fit, "end");
  fit.finish();

  Section w = top.sub("window");
  if (auto s = w.get<std::string>("scheme")) cfg.window.scheme = parse_scheme(*s);
  cfg.window.first_target = month_key(w, "first_target", cfg.window.first_target);
  cfg.window.last_target = month_key(w, "last_target", cfg.window.last_target);
  if (auto h = w.array<int>("horizons")) cfg.window.horizons = *h;
  w.read("stride", cfg.window.stride);
  w.read("warm_start_chunks", cfg.window.warm_start_chunks);
  w.read("reestimate", cfg.window.reestimate);
  w.finish();

  Section sc = top.sub("scoring");
  sc.read("n_draws", cfg.scoring.n_draws);
  sc.read("threshold_factor", cfg.scoring.threshold_factor);
  if (auto f = sc.get<std::string>("forecasts")) cfg.forecasts = *f;
  sc.finish();
  cfg.scoring.seed = cfg.seed;

  Section dg = top.sub("diagnostics");
  if (auto r = dg.get<std::string>("residual")) cfg.diagnostics.residual = parse_residual_definition(*r);
  dg.read("variogram_bins", cfg.diagnostics.variogram_bins);
  dg.read("variogram_max_distance", cfg.diagnostics.variogram_max_distance);
  dg.read("permutations", cfg.diagnostics.permutations);
  dg.finish();

  Section pf = top.sub("portfolio");
  if (auto z = pf.array<double>("zetas")) cfg.portfolio.zetas = *z;
  if (auto m = pf.array<double>("maturities")) cfg.portfolio.maturities = *m;
  pf.read("horizon", cfg.portfolio.horizon);
  pf.read("rra", cfg.portfolio.rra);
  pf.read("benchmark", cfg.portfolio.benchmark);
  if (auto f = pf.array<std::string>("forecasts")) cfg.portfolio_forecasts = *f;
  pf.finish();

  top.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

YieldPanel fit_window(const RunConfig& config, const YieldPanel& panel) {
  const Eigen::Index first = config.fit_start ? panel.index_of(*config.fit_start) : 0;
  const Eigen::Index last = config.fit_end ? panel.index_of(*config.fit_end) : panel.months() - 1;
  return panel.rows(first, last);
}

std::vector<WindowSpec> backtest_windows(const RunConfig& config, const YieldPanel& panel,
                                         int horizon) {
  const auto all = target_aligned_origins(panel, config.window.first_target,
                                          config.window.last_target, horizon, config.window.scheme);
  std::vector<WindowSpec> out;
  for (std::size_t i = 0; i < all.size(); i += static_cast<std::size_t>(config.window.stride))
    out.push_back(all[i]);
  return out;
}

}  // namespace yieldfield
