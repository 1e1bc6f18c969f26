#include "yieldfield/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "yieldfield/error.hpp"
#include "yieldfield/forecast.hpp"

namespace yieldfield {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

ResidualDefinition parse_residual_definition(const std::string& name) {
  if (name == "vs_trend" || name == "vs-trend") return ResidualDefinition::vs_trend;
  if (name == "vs_full_latent" || name == "vs-full-latent") return ResidualDefinition::vs_full_latent;
  throw ValidationError("unknown residual definition '" + name +
                        "' (allowed: vs_trend, vs_full_latent)");
}

std::string to_string(ResidualDefinition d) {
  return d == ResidualDefinition::vs_trend ? "vs_trend" : "vs_full_latent";
}

ResidualField extract_residuals(const YieldPanel& window, const Eigen::MatrixXd& trend,
                                const Eigen::MatrixXd& field, ResidualDefinition definition,
                                const std::string& model) {
  const Eigen::Index T = window.months(), M = window.maturity_count();
  if (trend.rows() != T || trend.cols() != M || field.rows() != T || field.cols() != M) {
    throw SizeError("residual extraction: fitted means do not match the " + std::to_string(T) +
                    " x " + std::to_string(M) + " window");
  }
  ResidualField out;
  out.values = window.yields - trend;
  if (definition == ResidualDefinition::vs_full_latent) out.values -= field;
  if (!out.values.allFinite()) throw NumericalError("non-finite residuals");
  out.dates = window.dates;
  out.maturities = window.maturities;
  out.model = model;
  out.definition = definition;
  return out;
}

ResidualField extract_residuals(const FitResult& fit, const YieldPanel& window,
                                ResidualDefinition definition) {
  return extract_residuals(window, fit.trend_means(), fit.field_means(), definition,
                           fit.context->spec.tag());
}

Eigen::MatrixXd pearson_columns(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  const Eigen::VectorXd norms = c.colwise().norm();
  Eigen::MatrixXd out = c.transpose() * c;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      const double d = norms(i) * norms(j);
      out(i, j) = d > 0.0 ? std::clamp(out(i, j) / d, -1.0, 1.0) : kNaN;
    }
  return out;
}

CorrelationMatrices correlation_matrices(const ResidualField& res) {
  if (res.values.rows() < 3 || res.values.cols() < 3) {
    throw DomainError("correlation matrices need T >= 3 and M >= 3");
  }
  CorrelationMatrices out;
  out.maturity = pearson_columns(res.values);
  out.time = pearson_columns(res.values.transpose());
  for (Eigen::Index i = 0; i < out.maturity.rows(); ++i) out.undefined += std::isnan(out.maturity(i, i));
  for (Eigen::Index i = 0; i < out.time.rows(); ++i) out.undefined += std::isnan(out.time(i, i));
  return out;
}

double mean_abs_offdiagonal(const Eigen::MatrixXd& c) {
  double s = 0.0;
  long n = 0;
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = 0; j < c.cols(); ++j)
      if (i != j && std::isfinite(c(i, j))) {
        s += std::abs(c(i, j));
        ++n;
      }
  return n > 0 ? s / n : kNaN;
}

std::vector<VariogramBin> empirical_variogram(const ResidualField& res, int n_bins, double max_dist,
                                              std::uint64_t seed, long max_pairs) {
  if (n_bins < 2) throw DomainError("variogram needs at least 2 bins");
  if (!(max_dist > 0.0)) throw DomainError("variogram max distance must be positive");
  const Eigen::Index T = res.values.rows(), M = res.values.cols();
  const long n = static_cast<long>(T * M);
  std::vector<double> t(n), lm(n), v(n);
  for (Eigen::Index i = 0; i < T; ++i)
    for (Eigen::Index j = 0; j < M; ++j) {
      const long k = static_cast<long>(i * M + j);
      t[k] = static_cast<double>(i + 1);
      lm[k] = std::log(res.maturities[j]);
      v[k] = res.values(i, j);
    }
  const double width = max_dist / n_bins;
  std::vector<double> sum(n_bins, 0.0);
  std::vector<long> count(n_bins, 0);
  auto add = [&](long a, long b) {
    const double d = std::hypot(t[a] - t[b], lm[a] - lm[b]);
    if (d > max_dist) return;
    const int k = std::min(n_bins - 1, static_cast<int>(d / width));
    const double diff = v[a] - v[b];
    sum[k] += diff * diff;
    ++count[k];
  };
  const long total = n * (n - 1) / 2;
  if (total <= max_pairs) {
    for (long a = 0; a < n; ++a)
      for (long b = a + 1; b < n; ++b) add(a, b);
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<long> pick(0, n - 1);
    for (long k = 0; k < max_pairs; ++k) {
      long a = pick(rng), b = pick(rng);
      while (b == a) b = pick(rng);
      add(a, b);
    }
  }
  std::vector<VariogramBin> out(n_bins);
  for (int k = 0; k < n_bins; ++k) {
    out[k].distance = (k + 0.5) * width;
    out[k].count = count[k];
    out[k].gamma = count[k] > 0 ? 0.5 * sum[k] / count[k] : kNaN;
  }
  return out;
}

Eigen::MatrixXd adjacency_weights(Eigen::Index n) {
  if (n < 2) throw DomainError("adjacency needs at least 2 locations");
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) w(i, i + 1) = w(i + 1, i) = 1.0;
  for (Eigen::Index i = 0; i < n; ++i) w.row(i) /= w.row(i).sum();
  return w;
}

namespace {

void check_weights(const Eigen::VectorXd& values, const Eigen::MatrixXd& w) {
  if (values.size() < 3) throw DomainError("spatial autocorrelation needs at least 3 locations");
  if (w.rows() != values.size() || w.cols() != values.size()) throw SizeError("weight matrix size");
  if ((w.array() < 0.0).any() || w.diagonal().cwiseAbs().maxCoeff() != 0.0) {
    throw DomainError("weights must be nonnegative with a zero diagonal");
  }
}

}  // namespace

std::optional<double> morans_i(const Eigen::VectorXd& values, const Eigen::MatrixXd& w) {
  check_weights(values, w);
  const Eigen::VectorXd z = values.array() - values.mean();
  const double zz = z.squaredNorm();
  if (!(zz > 0.0)) return std::nullopt;
  const double n = static_cast<double>(values.size());
  return n / w.sum() * z.dot(w * z) / zz;
}

std::optional<double> gearys_c(const Eigen::VectorXd& values, const Eigen::MatrixXd& w) {
  check_weights(values, w);
  const Eigen::VectorXd z = values.array() - values.mean();
  const double zz = z.squaredNorm();
  if (!(zz > 0.0)) return std::nullopt;
  const Eigen::Index n = values.size();
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) s += w(i, j) * (z(i) - z(j)) * (z(i) - z(j));
  return (n - 1.0) / (2.0 * w.sum()) * s / zz;
}

namespace {

template <typename F>
SliceAverage average_over_slices(const ResidualField& res, F stat) {
  const Eigen::MatrixXd w = adjacency_weights(res.values.cols());
  SliceAverage out;
  std::vector<double> v;
  for (Eigen::Index t = 0; t < res.values.rows(); ++t) {
    const auto s = stat(Eigen::VectorXd(res.values.row(t).transpose()), w);
    if (s) v.push_back(*s);
    else ++out.undefined;
  }
  out.slices = static_cast<int>(v.size());
  if (v.empty()) {
    out.mean = out.sd = kNaN;
    return out;
  }
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.sd = v.size() > 1 ? std::sqrt(ss / (v.size() - 1)) : 0.0;
  return out;
}

template <typename F>
PermutationTest permutation_test(const Eigen::VectorXd& values, const Eigen::MatrixXd& w,
                                 int permutations, std::uint64_t seed, bool upper, F stat) {
  if (permutations < 1) throw DomainError("need at least one permutation");
  const auto obs = stat(values, w);
  if (!obs) throw DomainError("constant slice has no autocorrelation statistic");
  PermutationTest out;
  out.observed = *obs;
  std::mt19937_64 rng(seed);
  Eigen::VectorXd p = values;
  int extreme = 0;
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < permutations; ++k) {
    std::shuffle(p.data(), p.data() + p.size(), rng);
    const double v = *stat(p, w);
    s += v;
    s2 += v * v;
    if (upper ? v >= out.observed : v <= out.observed) ++extreme;
  }
  out.p_value = (1.0 + extreme) / (1.0 + permutations);
  out.permutation_mean = s / permutations;
  out.permutation_sd =
      permutations > 1 ? std::sqrt(std::max(0.0, (s2 - s * s / permutations) / (permutations - 1))) : 0.0;
  return out;
}

}  // namespace

SliceAverage average_morans_i(const ResidualField& res) {
  return average_over_slices(res, [](const Eigen::VectorXd& v, const Eigen::MatrixXd& w) { return morans_i(v, w); });
}

SliceAverage average_gearys_c(const ResidualField& res) {
  return average_over_slices(res, [](const Eigen::VectorXd& v, const Eigen::MatrixXd& w) { return gearys_c(v, w); });
}

PermutationTest moran_permutation_test(const Eigen::VectorXd& values, const Eigen::MatrixXd& w,
                                       int permutations, std::uint64_t seed) {
  return permutation_test(values, w, permutations, seed, true,
                          [](const Eigen::VectorXd& v, const Eigen::MatrixXd& m) { return morans_i(v, m); });
}

PermutationTest geary_permutation_test(const Eigen::VectorXd& values, const Eigen::MatrixXd& w,
                                       int permutations, std::uint64_t seed) {
  return permutation_test(values, w, permutations, seed, false,
                          [](const Eigen::VectorXd& v, const Eigen::MatrixXd& m) { return gearys_c(v, m); });
}

Acf1Result acf1(const ResidualField& res) {
  const Eigen::Index T = res.values.rows();
  if (T < 3) throw DomainError("lag-1 autocorrelation needs T >= 3");
  Acf1Result out;
  double s = 0.0;
  int n = 0;
  for (Eigen::Index j = 0; j < res.values.cols(); ++j) {
    const Eigen::VectorXd x = res.values.col(j).array() - res.values.col(j).mean();
    const double den = x.squaredNorm();
    if (!(den > 0.0)) {
      ++out.undefined;
      continue;
    }
    s += x.head(T - 1).dot(x.tail(T - 1)) / den;
    ++n;
  }
  out.mean = n > 0 ? s / n : kNaN;
  return out;
}

DiagnosticsSummary summarize_residuals(const ResidualField& res) {
  DiagnosticsSummary out;
  out.model = res.model;
  out.abs_corr = mean_abs_offdiagonal(correlation_matrices(res).maturity);
  out.morans_i = average_morans_i(res);
  out.gearys_c = average_gearys_c(res);
  out.acf1 = acf1(res).mean;
  return out;
}

namespace {
std::string cell(double v) { return std::isfinite(v) ? format_double(v) : "NA"; }
}  // namespace

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m, const std::vector<std::string>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != m.rows() || m.rows() != m.cols()) {
    throw SizeError("matrix labels do not match");
  }
  out << "label";
  for (const auto& l : labels) out << ',' << l;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << labels[i];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << cell(m(i, j));
    out << '\n';
  }
}

void write_variogram_csv(std::ostream& out, const std::vector<VariogramBin>& bins) {
  out << "distance,gamma,count\n";
  for (const auto& b : bins) out << cell(b.distance) << ',' << cell(b.gamma) << ',' << b.count << '\n';
}

void write_summary_csv(std::ostream& out, const std::vector<DiagnosticsSummary>& rows) {
  out << "model,abs_corr,morans_i,gearys_c,acf1,morans_i_sd,gearys_c_sd\n";
  for (const auto& r : rows) {
    out << r.model << ',' << cell(r.abs_corr) << ',' << cell(r.morans_i.mean) << ','
        << cell(r.gearys_c.mean) << ',' << cell(r.acf1) << ',' << cell(r.morans_i.sd) << ','
        << cell(r.gearys_c.sd) << '\n';
  }
}

}  // namespace yieldfield
