#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "yieldfield/error.hpp"
#include "yieldfield/gmrf.hpp"

using namespace yieldfield;

namespace {

Eigen::MatrixXd ar1_covariance(int n, double tau, double phi) {
  Eigen::MatrixXd s(n, n);
  const double var = 1.0 / (tau * (1.0 - phi * phi));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s(i, j) = var * std::pow(phi, std::abs(i - j));
  return s;
}

struct Instance {
  Eigen::MatrixXd q, a, qe;
  Eigen::VectorXd y;
};

Instance random_instance(int n, int m, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Instance in;
  in.q = oracle::random_spd(n, rng);
  in.qe = oracle::random_spd(m, rng, 1.0);
  in.a.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) in.a(i, j) = normal(rng);
  in.y.resize(m);
  for (int i = 0; i < m; ++i) in.y(i) = normal(rng);
  return in;
}

}  // namespace

TEST_CASE("ar1 precision inverts to the AR(1) covariance") {
  for (int n = 2; n <= 20; ++n) {
    for (double phi : {0.0, 0.3, 0.5, 0.9, 0.99}) {
      const double tau = 0.5 + n * 0.1;
      const Eigen::MatrixXd inv = oracle::dense(ar1_precision(n, tau, phi)).inverse();
      CHECK((inv - ar1_covariance(n, tau, phi)).cwiseAbs().maxCoeff() <
            1e-10 * std::max(1.0, ar1_covariance(n, tau, phi).maxCoeff()));
    }
  }
  const Eigen::MatrixXd three = oracle::dense(ar1_precision(3, 1.0, 0.5)).inverse();
  CHECK(three(0, 0) == doctest::Approx(1.0 / 0.75));
  CHECK(three(0, 2) / three(0, 0) == doctest::Approx(0.25));
  CHECK(oracle::dense(ar1_precision(4, 2.0, 0.0)) == 2.0 * Eigen::MatrixXd::Identity(4, 4));
  CHECK(oracle::dense(ar1_precision(1, 2.0, 0.5))(0, 0) == doctest::Approx(1.5));
  const Eigen::MatrixXd q2 = oracle::dense(ar1_precision(2, 2.0, 0.9));
  CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q2).eigenvalues().minCoeff() > 0.0);
  CHECK_NOTHROW(SparseCholesky(ar1_precision(2, 2.0, 0.9)));
  CHECK_THROWS_AS(ar1_precision(3, 1.0, 1.0), DomainError);
  CHECK_THROWS_AS(ar1_precision(3, 1.0, -1.2), DomainError);
}

TEST_CASE("AR(1) hyperparameter transform") {
  const auto p = hyper_transform_ar1(0.0, 0.0);
  CHECK(p.tau == 1.0);
  CHECK(p.phi == 0.5);
  CHECK(hyper_transform_ar1(0.0, 1e6).phi == 1.0 - kPhiClamp);
  const auto [t1, t2] = inverse_hyper_transform_ar1(3.0, 0.7);
  const auto back = hyper_transform_ar1(t1, t2);
  CHECK(std::abs(back.tau - 3.0) < 1e-12);
  CHECK(std::abs(back.phi - 0.7) < 1e-12);
}

TEST_CASE("scalar conjugate update") {
  const SparseMatrix one = sparse_identity(1);
  const auto post = gaussian_posterior(one, one, one, Eigen::VectorXd::Constant(1, 2.0));
  CHECK(post.mean(0) == doctest::Approx(1.0));
  CHECK(oracle::dense(post.precision)(0, 0) == doctest::Approx(2.0));
  const double lml = log_marginal_likelihood(one, one, one, Eigen::VectorXd::Zero(1));
  CHECK(lml == doctest::Approx(-0.5 * std::log(4.0 * M_PI)).epsilon(1e-14));
}

TEST_CASE("zero data gives zero mean") {
  std::mt19937_64 rng(9);
  const auto in = random_instance(5, 7, rng);
  const auto post = gaussian_posterior(oracle::to_sparse(in.q), oracle::to_sparse(in.a),
                                       oracle::to_sparse(in.qe), Eigen::VectorXd::Zero(7));
  CHECK(post.mean.norm() == 0.0);
}

TEST_CASE("posterior mean matches dense normal equations") {
  std::mt19937_64 rng(21);
  const auto in = random_instance(8, 12, rng);
  const auto post = gaussian_posterior(oracle::to_sparse(in.q), oracle::to_sparse(in.a),
                                       oracle::to_sparse(in.qe), in.y);
  const Eigen::MatrixXd qp = in.a.transpose() * in.qe * in.a + in.q;
  const Eigen::VectorXd mu = qp.ldlt().solve(in.a.transpose() * in.qe * in.y);
  CHECK((post.mean - mu).norm() < 1e-10 * std::max(1.0, mu.norm()));
  // gradient of x'Qx + (y-Ax)'Qe(y-Ax) vanishes at the mean
  const Eigen::VectorXd grad = 2.0 * in.q * post.mean - 2.0 * in.a.transpose() * in.qe * (in.y - in.a * post.mean);
  CHECK(grad.norm() < 1e-8);
  // the factor reproduces Q_post
  const Eigen::MatrixXd rec = oracle::dense(post.factor->reconstruct());
  CHECK((rec - qp).norm() / qp.norm() < 1e-8);
}

TEST_CASE("log marginal likelihood against the dense Gaussian, 50 instances") {
  std::mt19937_64 rng(1234);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const int n = 2 + int(rng() % 20);
    const int m = 2 + int(rng() % 20);
    const auto in = random_instance(n, m, rng);
    const double lml = log_marginal_likelihood(oracle::to_sparse(in.q), oracle::to_sparse(in.a),
                                               oracle::to_sparse(in.qe), in.y);
    const Eigen::MatrixXd s = in.a * in.q.inverse() * in.a.transpose() + in.qe.inverse();
    const double ref = oracle::mvn_logpdf(in.y, s);
    worst = std::max(worst, std::abs(lml - ref) / std::abs(ref));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("diagonal-noise overload agrees with the general path") {
  std::mt19937_64 rng(77);
  auto in = random_instance(6, 9, rng);
  Eigen::VectorXd d = Eigen::VectorXd::LinSpaced(9, 0.5, 3.0);
  const auto general = gaussian_posterior(oracle::to_sparse(in.q), oracle::to_sparse(in.a),
                                          sparse_diagonal(d), in.y);
  const auto diag = gaussian_posterior(oracle::to_sparse(in.q), oracle::to_sparse(in.a), d, in.y);
  CHECK(std::abs(general.log_marginal_likelihood - diag.log_marginal_likelihood) < 1e-10);
  const double ld = SparseCholesky(oracle::to_sparse(in.q)).log_determinant();
  const auto known = gaussian_posterior(oracle::to_sparse(in.q), ld, oracle::to_sparse(in.a), d, in.y);
  CHECK(std::abs(known.log_marginal_likelihood - diag.log_marginal_likelihood) < 1e-12);
}

TEST_CASE("log marginal likelihood is invariant to observation order") {
  std::mt19937_64 rng(5);
  const auto in = random_instance(6, 10, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(10);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 10, rng);
  const double a = log_marginal_likelihood(oracle::to_sparse(in.q), oracle::to_sparse(in.a),
                                           oracle::to_sparse(in.qe), in.y);
  const Eigen::MatrixXd qe = perm * in.qe * perm.transpose();
  const Eigen::MatrixXd am = perm * in.a;
  const Eigen::VectorXd y = perm * in.y;
  const double b = log_marginal_likelihood(oracle::to_sparse(in.q), oracle::to_sparse(am),
                                           oracle::to_sparse(qe), y);
  CHECK(std::abs(a - b) < 1e-10);
}

TEST_CASE("log determinant matches dense for n <= 50") {
  std::mt19937_64 rng(8);
  for (int n : {1, 5, 20, 50}) {
    const Eigen::MatrixXd q = oracle::random_spd(n, rng);
    const double dense_ld = std::log(q.determinant());
    CHECK(std::abs(SparseCholesky(oracle::to_sparse(q)).log_determinant() - dense_ld) < 1e-8 * std::max(1.0, std::abs(dense_ld)));
  }
}

TEST_CASE("non positive definite precision reports a pivot") {
  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(4, 4);
  q(2, 2) = -1.0;
  try {
    SparseCholesky chol(oracle::to_sparse(q));
    FAIL("expected failure");
  } catch (const NumericalError& e) {
    CHECK(e.pivot() == 2);
  }
  // a tiny negative perturbation is rescued by the jitter
  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(3, 3);
  s(1, 1) = -1e-13;
  SparseCholesky chol(oracle::to_sparse(s));
  CHECK(chol.jittered());
}

TEST_CASE("posterior sampling") {
  std::mt19937_64 rng(3);
  const auto in = random_instance(3, 4, rng);
  const auto post = gaussian_posterior(oracle::to_sparse(in.q), oracle::to_sparse(in.a),
                                       oracle::to_sparse(in.qe), in.y);
  const Eigen::MatrixXd cov = oracle::dense(post.precision).inverse();

  const int n = 100000;
  const Eigen::MatrixXd draws = sample_posterior(post, n, 42);
  const Eigen::VectorXd mean = draws.rowwise().mean();
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(mean(i) - post.mean(i)) < 3.0 * std::sqrt(cov(i, i) / n));
  }
  const Eigen::MatrixXd centered = draws.colwise() - mean;
  const Eigen::MatrixXd emp = centered * centered.transpose() / (n - 1);
  CHECK((emp - cov).norm() / cov.norm() < 0.05);

  const Eigen::MatrixXd a = sample_posterior(post, 1, 99);
  const Eigen::MatrixXd b = sample_posterior(post, 1, 99);
  CHECK(a == b);
  CHECK_THROWS_AS(sample_posterior(post, 0, 1), DomainError);

  const Eigen::VectorXd mv = post.marginal_variances({0, 1, 2});
  CHECK((mv - cov.diagonal()).norm() < 1e-10);
}

TEST_CASE("matrix market dump") {
  std::ostringstream out;
  write_matrix_market(out, ar1_precision(3, 1.0, 0.5));
  CHECK(out.str().rfind("%%MatrixMarket matrix coordinate real general\n3 3 7\n", 0) == 0);
}
