#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "yieldfield/dataio.hpp"
#include "yieldfield/diagnostics.hpp"
#include "yieldfield/inference.hpp"
#include "yieldfield/portfolio.hpp"
#include "yieldfield/scoring.hpp"

namespace yieldfield {

struct WindowConfig {
  WindowScheme scheme = WindowScheme::moving;
  int first_target = 199501;
  int last_target = 200012;
  std::vector<int> horizons{1, 6, 12};
  int stride = 1;  // keep every stride-th origin
  int warm_start_chunks = 8;
  bool reestimate = true;  // hyperparameters at every origin
};

struct DiagnosticsConfig {
  ResidualDefinition residual = ResidualDefinition::vs_full_latent;
  int variogram_bins = 20;
  double variogram_max_distance = 0.0;  // 0: half the largest separation
  int permutations = 999;
};

struct RunConfig {
  std::optional<std::string> data_path;
  bool restrict_to_standard = true;
  std::string model_name;  // defaults to the spec tag
  ModelSpec model;
  std::optional<int> fit_start;  // yyyymm; whole panel by default
  std::optional<int> fit_end;
  WindowConfig window;
  std::vector<double> maturities{3.0, 12.0, 36.0, 60.0, 120.0};
  ScoringOptions scoring;
  std::optional<std::string> forecasts;  // input for score; default <out>/forecasts.csv
  DiagnosticsConfig diagnostics;
  PortfolioConfig portfolio;
  std::vector<std::string> portfolio_forecasts;
  std::uint64_t seed = 20240101;
  std::string out_dir = "out";

  std::string name() const { return model_name.empty() ? model.tag() : model_name; }
  void validate() const;
};

// Unknown keys, wrong types and invalid values raise ValidationError.
RunConfig parse_config(std::string_view toml_text, const std::string& source = "config");
RunConfig load_config(const std::string& path);

// Selects the training rows [fit_start, fit_end].
YieldPanel fit_window(const RunConfig& config, const YieldPanel& panel);
// Target-aligned windows for one horizon, thinned by the stride.
std::vector<WindowSpec> backtest_windows(const RunConfig& config, const YieldPanel& panel,
                                         int horizon);

}  // namespace yieldfield
