#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "yieldfield/dataio.hpp"
#include "yieldfield/inference.hpp"

namespace yieldfield {

// vs_trend: y - A(lambda) E[beta]; vs_full_latent additionally subtracts E[u].
enum class ResidualDefinition { vs_trend, vs_full_latent };

ResidualDefinition parse_residual_definition(const std::string& name);
std::string to_string(ResidualDefinition d);

// T x M residuals on (time index 1..T, log maturity).
struct ResidualField {
  Eigen::MatrixXd values;
  std::vector<int> dates;
  std::vector<double> maturities;
  std::string model;
  ResidualDefinition definition = ResidualDefinition::vs_trend;
};

ResidualField extract_residuals(const YieldPanel& window, const Eigen::MatrixXd& trend,
                                const Eigen::MatrixXd& field, ResidualDefinition definition,
                                const std::string& model = "");
ResidualField extract_residuals(const FitResult& fit, const YieldPanel& window,
                                ResidualDefinition definition);

// Pearson correlations; entries involving a constant series are NaN.
struct CorrelationMatrices {
  Eigen::MatrixXd maturity;  // M x M, across time
  Eigen::MatrixXd time;      // T x T, across maturities
  int undefined = 0;         // constant columns plus constant rows
};

CorrelationMatrices correlation_matrices(const ResidualField& res);
Eigen::MatrixXd pearson_columns(const Eigen::MatrixXd& x);
// Mean |off-diagonal| over finite entries.
double mean_abs_offdiagonal(const Eigen::MatrixXd& c);

struct VariogramBin {
  double distance = 0.0;  // bin centre
  double gamma = 0.0;     // NaN when empty
  long count = 0;
};

inline constexpr long kVariogramMaxPairs = 1'000'000;

std::vector<VariogramBin> empirical_variogram(const ResidualField& res, int n_bins, double max_dist,
                                              std::uint64_t seed = 1,
                                              long max_pairs = kVariogramMaxPairs);

// First-order adjacency on the ordered maturity grid, row-standardized.
Eigen::MatrixXd adjacency_weights(Eigen::Index n);

// nullopt for a constant slice.
std::optional<double> morans_i(const Eigen::VectorXd& values, const Eigen::MatrixXd& w);
std::optional<double> gearys_c(const Eigen::VectorXd& values, const Eigen::MatrixXd& w);

struct SliceAverage {
  double mean = 0.0;
  double sd = 0.0;
  int slices = 0;
  int undefined = 0;
};

SliceAverage average_morans_i(const ResidualField& res);
SliceAverage average_gearys_c(const ResidualField& res);

struct PermutationTest {
  double observed = 0.0;
  double p_value = 1.0;
  double permutation_mean = 0.0;
  double permutation_sd = 0.0;
};

inline constexpr int kPermutations = 999;

// Upper tail for Moran's I, lower tail for Geary's C.
PermutationTest moran_permutation_test(const Eigen::VectorXd& values, const Eigen::MatrixXd& w,
                                       int permutations = kPermutations, std::uint64_t seed = 1);
PermutationTest geary_permutation_test(const Eigen::VectorXd& values, const Eigen::MatrixXd& w,
                                       int permutations = kPermutations, std::uint64_t seed = 1);

struct Acf1Result {
  double mean = 0.0;
  int undefined = 0;
};

Acf1Result acf1(const ResidualField& res);

struct DiagnosticsSummary {
  std::string model;
  double abs_corr = 0.0;
  SliceAverage morans_i;
  SliceAverage gearys_c;
  double acf1 = 0.0;
};

DiagnosticsSummary summarize_residuals(const ResidualField& res);

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m, const std::vector<std::string>& labels);
void write_variogram_csv(std::ostream& out, const std::vector<VariogramBin>& bins);
// model,abs_corr,morans_i,gearys_c,acf1,morans_i_sd,gearys_c_sd
void write_summary_csv(std::ostream& out, const std::vector<DiagnosticsSummary>& rows);

}  // namespace yieldfield
