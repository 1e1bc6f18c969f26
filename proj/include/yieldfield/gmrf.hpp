#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace yieldfield {

// Precision, mass and stiffness matrices are stored with both triangles.
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

SparseMatrix sparse_identity(Eigen::Index n, double scale = 1.0);
SparseMatrix sparse_diagonal(const Eigen::VectorXd& d);
// (M + M^T) / 2 with explicit zeros removed.
SparseMatrix symmetrize(const SparseMatrix& m);
// Block-diagonal stacking.
SparseMatrix block_diagonal(const std::vector<const SparseMatrix*>& blocks);
// Horizontal concatenation [A B ...].
SparseMatrix hstack(const std::vector<const SparseMatrix*>& blocks);

void write_matrix_market(std::ostream& out, const SparseMatrix& m);

// Sparse LDL^T with fill-reducing ordering. A nonpositive pivot gets one
// retry with a small diagonal jitter before failing.
class SparseCholesky {
 public:
  static constexpr double kJitter = 1e-10;

  explicit SparseCholesky(const SparseMatrix& q);

  Eigen::Index size() const { return n_; }
  bool jittered() const { return jittered_; }
  double log_determinant() const { return logdet_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;

  // x = P^{-1} L^{-T} D^{-1/2} z, so Cov(x) = Q^{-1} for z standard normal.
  Eigen::VectorXd whiten_inverse(const Eigen::VectorXd& z) const;

  // P^{-1} L D L^T P, the matrix actually factorized.
  SparseMatrix reconstruct() const;

  // Unit lower factor in the permuted ordering, pivots and the permutation.
  SparseMatrix factor_l() const;
  const Eigen::VectorXd& pivots() const { return d_; }
  Eigen::VectorXi permutation() const;

 private:
  bool try_factorize(const SparseMatrix& q);

  Eigen::Index n_ = 0;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  Eigen::VectorXd d_;
  double logdet_ = 0.0;
  bool jittered_ = false;
  long bad_pivot_ = -1;
};

// Stationary AR(1) precision of length n.
SparseMatrix ar1_precision(Eigen::Index n, double tau, double phi);

struct Ar1Params {
  double tau;
  double phi;
};

inline constexpr double kPhiClamp = 1e-12;

// tau = exp(theta1), phi = logistic(theta2) on (0, 1).
Ar1Params hyper_transform_ar1(double theta1, double theta2);
std::pair<double, double> inverse_hyper_transform_ar1(double tau, double phi);

struct GaussianPosterior {
  Eigen::VectorXd mean;
  SparseMatrix precision;
  std::shared_ptr<const SparseCholesky> factor;
  double log_marginal_likelihood = 0.0;

  Eigen::Index size() const { return mean.size(); }
  // Columns of Q_post^{-1} for the requested latent indices.
  Eigen::MatrixXd covariance_columns(const std::vector<Eigen::Index>& idx) const;
  Eigen::VectorXd marginal_variances(const std::vector<Eigen::Index>& idx) const;
};

// Posterior of x ~ N(0, Q^{-1}) given y = A x + e, e ~ N(0, Q_noise^{-1}).
GaussianPosterior gaussian_posterior(const SparseMatrix& q_prior, const SparseMatrix& a,
                                     const SparseMatrix& q_noise, const Eigen::VectorXd& y);

// Same with a diagonal noise precision given as a vector.
GaussianPosterior gaussian_posterior(const SparseMatrix& q_prior, const SparseMatrix& a,
                                     const Eigen::VectorXd& noise_precision,
                                     const Eigen::VectorXd& y);

// Variant for callers that already know log det Q_prior (NaN means unknown).
GaussianPosterior gaussian_posterior(const SparseMatrix& q_prior, double prior_logdet,
                                     const SparseMatrix& a,
                                     const Eigen::VectorXd& noise_precision,
                                     const Eigen::VectorXd& y);

double log_marginal_likelihood(const SparseMatrix& q_prior, const SparseMatrix& a,
                               const SparseMatrix& q_noise, const Eigen::VectorXd& y);

// count draws as columns.
Eigen::MatrixXd sample_posterior(const GaussianPosterior& post, int count, std::uint64_t seed);

}  // namespace yieldfield
