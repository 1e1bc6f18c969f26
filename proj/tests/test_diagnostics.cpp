#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "yieldfield/diagnostics.hpp"
#include "yieldfield/error.hpp"
#include "yieldfield/spdefields.hpp"

using namespace yieldfield;

namespace {

ResidualField make_field(const Eigen::MatrixXd& values) {
  ResidualField r;
  r.values = values;
  r.maturities = standard_maturities();
  r.maturities.resize(values.cols());
  if (values.cols() > static_cast<Eigen::Index>(standard_maturities().size())) {
    r.maturities.clear();
    for (Eigen::Index j = 0; j < values.cols(); ++j) r.maturities.push_back(3.0 + j);
  }
  for (Eigen::Index t = 0; t < values.rows(); ++t) r.dates.push_back(add_months(198501, static_cast<int>(t)));
  return r;
}

Eigen::MatrixXd iid(Eigen::Index T, Eigen::Index M, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Eigen::MatrixXd x(T, M);
  for (Eigen::Index i = 0; i < T; ++i)
    for (Eigen::Index j = 0; j < M; ++j) x(i, j) = z(rng);
  return x;
}

}  // namespace

TEST_CASE("residual extraction") {
  YieldPanel w;
  w.maturities = {3.0, 12.0, 60.0};
  w.yields = iid(5, 3, 1);
  for (int t = 0; t < 5; ++t) w.dates.push_back(add_months(199001, t));
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(5, 3);
  CHECK(extract_residuals(w, zero, zero, ResidualDefinition::vs_full_latent).values == w.yields);
  const Eigen::MatrixXd trend = iid(5, 3, 2), field = iid(5, 3, 3);
  const auto a = extract_residuals(w, trend, field, ResidualDefinition::vs_trend);
  const auto b = extract_residuals(w, trend, field, ResidualDefinition::vs_full_latent);
  CHECK((b.values - a.values + field).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(extract_residuals(w, Eigen::MatrixXd::Zero(4, 3), zero, ResidualDefinition::vs_trend),
                  SizeError);
  CHECK(parse_residual_definition("vs-full-latent") == ResidualDefinition::vs_full_latent);
  CHECK_THROWS_AS(parse_residual_definition("raw"), ValidationError);
}

TEST_CASE("correlation matrices") {
  const auto r = make_field(iid(500, 17, 4));
  const auto c = correlation_matrices(r);
  CHECK(c.maturity.rows() == 17);
  CHECK(c.time.rows() == 500);
  CHECK(mean_abs_offdiagonal(c.maturity) < 0.06);
  CHECK(c.undefined == 0);

  // one common series in every column
  Eigen::MatrixXd common(40, 5);
  const Eigen::MatrixXd s = iid(40, 1, 5);
  for (int j = 0; j < 5; ++j) common.col(j) = s.col(0) * (j + 1.0);
  const auto cc = correlation_matrices(make_field(common));
  CHECK((cc.maturity.array() - 1.0).abs().maxCoeff() < 1e-12);

  // sign flip and shift
  const auto flipped = correlation_matrices(make_field(-(r.values.array() + 3.0).matrix()));
  CHECK((flipped.maturity - c.maturity).cwiseAbs().maxCoeff() < 1e-10);

  Eigen::MatrixXd with_constant = iid(10, 4, 6);
  with_constant.col(2).setConstant(1.0);
  const auto u = correlation_matrices(make_field(with_constant));
  CHECK(std::isnan(u.maturity(2, 0)));
  CHECK(u.undefined == 1);
  CHECK_THROWS_AS(correlation_matrices(make_field(iid(2, 4, 1))), DomainError);
}

TEST_CASE("variogram") {
  const auto r = make_field(iid(60, 17, 7));
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(r.values.data(), r.values.size());
  const double var = (v.array() - v.mean()).square().sum() / (v.size() - 1);
  const auto bins = empirical_variogram(r, 8, 20.0);
  for (const auto& b : bins) {
    CHECK(b.count > 0);
    CHECK(b.gamma == doctest::Approx(var).epsilon(0.1));
  }
  const auto flat = empirical_variogram(make_field(Eigen::MatrixXd::Constant(20, 5, 2.0)), 4, 10.0);
  for (const auto& b : flat) CHECK(b.gamma == 0.0);
  CHECK_THROWS_AS(empirical_variogram(r, 1, 10.0), DomainError);
  // subsampling path is deterministic
  const auto s1 = empirical_variogram(r, 8, 20.0, 3, 10000);
  const auto s2 = empirical_variogram(r, 8, 20.0, 3, 10000);
  for (std::size_t k = 0; k < s1.size(); ++k) CHECK(s1[k].gamma == s2[k].gamma);
  long total = 0;
  for (const auto& b : s1) total += b.count;
  CHECK(total <= 10000);
  // location invariance
  const auto shifted = empirical_variogram(make_field((r.values.array() + 5.0).matrix()), 8, 20.0);
  for (std::size_t k = 0; k < bins.size(); ++k) CHECK(shifted[k].gamma == doctest::Approx(bins[k].gamma));
}

TEST_CASE("variogram of a Matern field reaches its marginal variance") {
  // field on (time index, log maturity) with range 2 and unit variance
  const auto& mats = standard_maturities();
  const double rho = 2.0, lo = std::log(3.0), hi = std::log(120.0);
  const int T = 30;
  const Mesh mesh = build_mesh_2d({1.0 - 2.5 * rho, T + 2.5 * rho}, {lo - 2.5 * rho, hi + 2.5 * rho}, 0.3, 0.0);
  const auto ops = assemble(mesh);
  const double kappa = kappa_from_range(rho, 1.0);
  const auto field = stationary_precision(ops, kappa, std::exp(matern_log_tau(1.0, kappa, 2.0, 2)), 2.0);
  const SparseCholesky chol(field.precision);
  Eigen::MatrixXd pts(T * mats.size(), 2);
  for (int t = 0; t < T; ++t)
    for (std::size_t j = 0; j < mats.size(); ++j) pts.row(t * mats.size() + j) << t + 1.0, std::log(mats[j]);
  const SparseMatrix proj = projection_matrix(mesh, pts) * field.evaluation;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  const int reps = 20;
  std::vector<double> sill(reps);
  double sill_mean = 0.0;
  for (int k = 0; k < reps; ++k) {
    Eigen::VectorXd e(chol.size());
    for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = z(rng);
    const Eigen::VectorXd x = proj * chol.whiten_inverse(e);
    Eigen::MatrixXd values(T, mats.size());
    for (int t = 0; t < T; ++t)
      for (std::size_t j = 0; j < mats.size(); ++j) values(t, j) = x(t * mats.size() + j);
    const auto bins = empirical_variogram(make_field(values), 10, 4 * rho);
    double s = 0.0;
    int n = 0;
    for (const auto& b : bins)
      if (b.distance > 2.5 * rho) {
        s += b.gamma;
        ++n;
      }
    sill_mean += s / n / reps;
    // increasing over the first half of the bins
    CHECK(bins[0].gamma < bins[4].gamma);
  }
  CHECK(sill_mean == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("Moran's I and Geary's C") {
  const Eigen::MatrixXd w = adjacency_weights(17);
  CHECK((w.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-15);
  CHECK(w.diagonal().cwiseAbs().maxCoeff() == 0.0);

  const Eigen::VectorXd ramp = Eigen::VectorXd::LinSpaced(17, 0.0, 1.0);
  CHECK(*morans_i(ramp, w) > 0.5);
  CHECK(*gearys_c(ramp, w) < 0.5);
  // direct computation for the ramp
  const Eigen::VectorXd zr = ramp.array() - ramp.mean();
  double num = 0.0;
  for (int i = 0; i < 17; ++i)
    for (int j = 0; j < 17; ++j) num += w(i, j) * zr(i) * zr(j);
  CHECK(*morans_i(ramp, w) == doctest::Approx(17.0 / w.sum() * num / zr.squaredNorm()));
  CHECK_FALSE(morans_i(Eigen::VectorXd::Constant(5, 1.0), adjacency_weights(5)).has_value());
  CHECK_THROWS_AS(morans_i(Eigen::VectorXd::Ones(2), adjacency_weights(2)), DomainError);

  // permutation distribution of an i.i.d. slice centres on -1 / (n - 1)
  const Eigen::VectorXd v = iid(1, 17, 9).row(0).transpose();
  const auto pt = moran_permutation_test(v, w);
  const double expected = -1.0 / 16.0;
  CHECK(std::abs(pt.permutation_mean - expected) < 3 * pt.permutation_sd / std::sqrt(999.0));
  CHECK(pt.p_value > 0.0);
  CHECK(pt.p_value <= 1.0);
  const auto ramp_test = moran_permutation_test(ramp, w);
  CHECK(ramp_test.p_value == doctest::Approx(1.0 / 1000.0));
  CHECK(geary_permutation_test(ramp, w).p_value == doctest::Approx(1.0 / 1000.0));

  // opposition of the two statistics on random smooth fields
  std::mt19937_64 rng(10);
  std::normal_distribution<double> z;
  int agree = 0;
  for (int k = 0; k < 200; ++k) {
    Eigen::VectorXd f(17);
    double acc = 0.0;
    for (int j = 0; j < 17; ++j) f(j) = (acc += z(rng)) + 0.5 * z(rng);
    const double i = *morans_i(f, w), c = *gearys_c(f, w);
    agree += ((i - expected > 0) == (1.0 - c > 0));
  }
  CHECK(agree >= 190);
}

TEST_CASE("slice averages and lag-1 autocorrelation") {
  const auto noise = make_field(iid(500, 17, 11));
  CHECK(std::abs(acf1(noise).mean) < 3.0 / std::sqrt(500.0));

  std::mt19937_64 rng(12);
  std::normal_distribution<double> z;
  Eigen::MatrixXd ar(500, 17);
  for (int j = 0; j < 17; ++j) {
    double x = z(rng) / 0.8;
    for (int t = 0; t < 500; ++t) ar(t, j) = x = 0.6 * x + z(rng);
  }
  CHECK(acf1(make_field(ar)).mean == doctest::Approx(0.6).epsilon(0.1));

  const auto s = summarize_residuals(noise);
  const auto shifted = summarize_residuals(make_field((noise.values.array() + 7.0).matrix()));
  CHECK(s.abs_corr == doctest::Approx(shifted.abs_corr).epsilon(1e-10));
  CHECK(s.morans_i.mean == doctest::Approx(shifted.morans_i.mean).epsilon(1e-10));
  CHECK(s.gearys_c.mean == doctest::Approx(shifted.gearys_c.mean).epsilon(1e-10));
  CHECK(s.acf1 == doctest::Approx(shifted.acf1).epsilon(1e-10));
  CHECK(s.morans_i.slices == 500);

  std::ostringstream out;
  write_summary_csv(out, {s});
  CHECK(out.str().rfind("model,abs_corr,morans_i,gearys_c,acf1", 0) == 0);
  std::ostringstream m;
  write_matrix_csv(m, Eigen::Matrix2d::Identity(), {"3", "12"});
  CHECK(m.str() == "label,3,12\n3,1,0\n12,0,1\n");
}
