#include "yieldfield/gmrf.hpp"

#include <cmath>
#include <functional>
#include <iomanip>
#include <numbers>
#include <random>

#include "yieldfield/error.hpp"

namespace yieldfield {

SparseMatrix sparse_identity(Eigen::Index n, double scale) {
  SparseMatrix out(n, n);
  out.reserve(Eigen::VectorXi::Constant(n, 1));
  for (Eigen::Index i = 0; i < n; ++i) out.insert(i, i) = scale;
  out.makeCompressed();
  return out;
}

SparseMatrix sparse_diagonal(const Eigen::VectorXd& d) {
  SparseMatrix out(d.size(), d.size());
  out.reserve(Eigen::VectorXi::Constant(d.size(), 1));
  for (Eigen::Index i = 0; i < d.size(); ++i) out.insert(i, i) = d(i);
  out.makeCompressed();
  return out;
}

SparseMatrix symmetrize(const SparseMatrix& m) {
  SparseMatrix t = m.transpose();
  SparseMatrix out = 0.5 * (m + t);
  out.prune(0.0);
  out.makeCompressed();
  return out;
}

SparseMatrix block_diagonal(const std::vector<const SparseMatrix*>& blocks) {
  Eigen::Index rows = 0, cols = 0, nnz = 0;
  for (const auto* b : blocks) {
    rows += b->rows();
    cols += b->cols();
    nnz += b->nonZeros();
  }
  std::vector<Triplet> t;
  t.reserve(nnz);
  Eigen::Index r0 = 0, c0 = 0;
  for (const auto* b : blocks) {
    for (int k = 0; k < b->outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(*b, k); it; ++it) {
        t.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
      }
    }
    r0 += b->rows();
    c0 += b->cols();
  }
  SparseMatrix out(rows, cols);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

SparseMatrix hstack(const std::vector<const SparseMatrix*>& blocks) {
  if (blocks.empty()) return {};
  const Eigen::Index rows = blocks.front()->rows();
  Eigen::Index cols = 0, nnz = 0;
  for (const auto* b : blocks) {
    if (b->rows() != rows) throw SizeError("hstack: row counts differ");
    cols += b->cols();
    nnz += b->nonZeros();
  }
  std::vector<Triplet> t;
  t.reserve(nnz);
  Eigen::Index c0 = 0;
  for (const auto* b : blocks) {
    for (int k = 0; k < b->outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(*b, k); it; ++it) {
        t.emplace_back(it.row(), c0 + it.col(), it.value());
      }
    }
    c0 += b->cols();
  }
  SparseMatrix out(rows, cols);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

void write_matrix_market(std::ostream& out, const SparseMatrix& m) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
  out << std::setprecision(17);
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
    }
  }
}

SparseCholesky::SparseCholesky(const SparseMatrix& q) : n_(q.rows()) {
  if (q.rows() != q.cols()) throw SizeError("cholesky: matrix not square");
  if (try_factorize(q)) return;
  const long first_bad = bad_pivot_;
  const double mean_diag = q.diagonal().mean();
  SparseMatrix jittered = q + sparse_identity(n_, kJitter * std::abs(mean_diag));
  jittered_ = true;
  if (!try_factorize(jittered)) {
    throw NumericalError("precision matrix is not positive definite", first_bad);
  }
}

bool SparseCholesky::try_factorize(const SparseMatrix& q) {
  ldlt_.compute(q);
  if (ldlt_.info() != Eigen::Success) {
    bad_pivot_ = -1;
    return false;
  }
  d_ = ldlt_.vectorD();
  const auto pinv = ldlt_.permutationPinv().indices();
  for (Eigen::Index k = 0; k < d_.size(); ++k) {
    if (!(d_(k) > 0.0) || !std::isfinite(d_(k))) {
      bad_pivot_ = pinv(k);
      return false;
    }
  }
  logdet_ = d_.array().log().sum();
  return true;
}

Eigen::VectorXd SparseCholesky::solve(const Eigen::VectorXd& b) const { return ldlt_.solve(b); }

Eigen::MatrixXd SparseCholesky::solve(const Eigen::MatrixXd& b) const { return ldlt_.solve(b); }

Eigen::VectorXd SparseCholesky::whiten_inverse(const Eigen::VectorXd& z) const {
  Eigen::VectorXd w = z.array() / d_.array().sqrt();
  ldlt_.matrixU().solveInPlace(w);
  return ldlt_.permutationPinv() * w;
}

SparseMatrix SparseCholesky::factor_l() const { return ldlt_.matrixL(); }

Eigen::VectorXi SparseCholesky::permutation() const { return ldlt_.permutationP().indices(); }

SparseMatrix SparseCholesky::reconstruct() const {
  SparseMatrix l = ldlt_.matrixL();
  SparseMatrix ldlt = l * d_.asDiagonal() * l.transpose();
  SparseMatrix out = ldlt_.permutationPinv() * ldlt * ldlt_.permutationP();
  return out;
}

SparseMatrix ar1_precision(Eigen::Index n, double tau, double phi) {
  if (n < 1) throw DomainError("ar1_precision: n must be at least 1");
  if (!(tau > 0.0)) throw DomainError("ar1_precision: tau must be positive");
  if (!(std::abs(phi) < 1.0)) throw DomainError("ar1_precision: |phi| must be below 1");
  if (n == 1) {
    SparseMatrix out(1, 1);
    out.insert(0, 0) = tau * (1.0 - phi * phi);
    out.makeCompressed();
    return out;
  }
  std::vector<Triplet> t;
  t.reserve(3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool end = i == 0 || i == n - 1;
    t.emplace_back(i, i, end ? tau : tau * (1.0 + phi * phi));
    if (i + 1 < n && phi != 0.0) {
      t.emplace_back(i, i + 1, -tau * phi);
      t.emplace_back(i + 1, i, -tau * phi);
    }
  }
  SparseMatrix out(n, n);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

Ar1Params hyper_transform_ar1(double theta1, double theta2) {
  double phi = 1.0 / (1.0 + std::exp(-theta2));
  phi = std::min(phi, 1.0 - kPhiClamp);
  phi = std::max(phi, kPhiClamp);
  return {std::exp(theta1), phi};
}

std::pair<double, double> inverse_hyper_transform_ar1(double tau, double phi) {
  if (!(tau > 0.0) || !(phi > 0.0) || !(phi < 1.0)) {
    throw DomainError("inverse_hyper_transform_ar1: need tau > 0 and phi in (0,1)");
  }
  return {std::log(tau), std::log(phi) - std::log1p(-phi)};
}

Eigen::MatrixXd GaussianPosterior::covariance_columns(const std::vector<Eigen::Index>& idx) const {
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(size(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) e(idx[k], static_cast<Eigen::Index>(k)) = 1.0;
  return factor->solve(e);
}

Eigen::VectorXd GaussianPosterior::marginal_variances(const std::vector<Eigen::Index>& idx) const {
  const Eigen::MatrixXd cols = covariance_columns(idx);
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out(static_cast<Eigen::Index>(k)) = cols(idx[k], static_cast<Eigen::Index>(k));
  }
  return out;
}

namespace {

void check_shapes(const SparseMatrix& q, const SparseMatrix& a, Eigen::Index noise_dim,
                  const Eigen::VectorXd& y) {
  if (q.rows() != q.cols() || a.cols() != q.rows() || a.rows() != y.size() ||
      noise_dim != y.size()) {
    throw SizeError("gaussian_posterior: nonconformable dimensions");
  }
}

GaussianPosterior finish(const SparseMatrix& q_prior, double prior_logdet, const SparseMatrix& a,
                         const Eigen::VectorXd& qe_y, double noise_logdet,
                         const Eigen::VectorXd& y,
                         const std::function<double(const Eigen::VectorXd&)>& noise_quad,
                         SparseMatrix q_post) {
  GaussianPosterior post;
  post.precision = std::move(q_post);
  post.factor = std::make_shared<SparseCholesky>(post.precision);
  post.mean = post.factor->solve(Eigen::VectorXd(a.transpose() * qe_y));

  if (std::isnan(prior_logdet)) prior_logdet = SparseCholesky(q_prior).log_determinant();
  const Eigen::VectorXd r = y - a * post.mean;
  const double n = static_cast<double>(y.size());
  post.log_marginal_likelihood =
      -0.5 * n * std::log(2.0 * std::numbers::pi) + 0.5 * prior_logdet +
      0.5 * noise_logdet - 0.5 * post.factor->log_determinant() -
      0.5 * post.mean.dot(q_prior * post.mean) - 0.5 * noise_quad(r);
  return post;
}

}  // namespace

GaussianPosterior gaussian_posterior(const SparseMatrix& q_prior, const SparseMatrix& a,
                                     const SparseMatrix& q_noise, const Eigen::VectorXd& y) {
  check_shapes(q_prior, a, q_noise.rows(), y);
  const SparseCholesky noise_factor(q_noise);
  SparseMatrix at = a.transpose();
  SparseMatrix q_post = at * q_noise * a + q_prior;
  return finish(
      q_prior, std::nan(""), a, q_noise * y, noise_factor.log_determinant(), y,
      [&](const Eigen::VectorXd& r) { return r.dot(q_noise * r); }, std::move(q_post));
}

GaussianPosterior gaussian_posterior(const SparseMatrix& q_prior, const SparseMatrix& a,
                                     const Eigen::VectorXd& noise_precision,
                                     const Eigen::VectorXd& y) {
  return gaussian_posterior(q_prior, std::nan(""), a, noise_precision, y);
}

GaussianPosterior gaussian_posterior(const SparseMatrix& q_prior, double prior_logdet,
                                     const SparseMatrix& a,
                                     const Eigen::VectorXd& noise_precision,
                                     const Eigen::VectorXd& y) {
  check_shapes(q_prior, a, noise_precision.size(), y);
  if (!(noise_precision.array() > 0.0).all()) {
    throw NumericalError("noise precision must be positive");
  }
  SparseMatrix at = a.transpose();
  SparseMatrix q_post = at * noise_precision.asDiagonal() * a + q_prior;
  const Eigen::VectorXd qe_y = noise_precision.cwiseProduct(y);
  return finish(
      q_prior, prior_logdet, a, qe_y, noise_precision.array().log().sum(), y,
      [&](const Eigen::VectorXd& r) { return r.dot(noise_precision.cwiseProduct(r)); },
      std::move(q_post));
}

double log_marginal_likelihood(const SparseMatrix& q_prior, const SparseMatrix& a,
                               const SparseMatrix& q_noise, const Eigen::VectorXd& y) {
  return gaussian_posterior(q_prior, a, q_noise, y).log_marginal_likelihood;
}

Eigen::MatrixXd sample_posterior(const GaussianPosterior& post, int count, std::uint64_t seed) {
  if (count < 1) throw DomainError("sample_posterior: count must be at least 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd out(post.size(), count);
  Eigen::VectorXd z(post.size());
  for (int k = 0; k < count; ++k) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
    out.col(k) = post.mean + post.factor->whiten_inverse(z);
  }
  return out;
}

}  // namespace yieldfield
