#pragma once

#include <array>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "yieldfield/fem.hpp"
#include "yieldfield/gmrf.hpp"

namespace yieldfield {

// Matérn link: smoothness nu = alpha - d/2, range rho = sqrt(8 nu) / kappa.
double matern_nu(double alpha, int d);
double kappa_from_range(double rho, double nu);
double range_from_kappa(double kappa, double nu);
// log tau = 0.5 log(Gamma(nu) / (Gamma(alpha) (4 pi)^(d/2))) - log sigma - nu log kappa
double matern_log_tau(double sigma, double kappa, double alpha, int d);
double matern_sigma(double tau, double kappa, double alpha, int d);

// r(x) = k + sum_i residues[i] / (x - poles[i]) approximating x^{-s} on
// [lambda_min, lambda_max]; errors are measured relative to lambda_min^{-s}.
struct RationalApproximation {
  double s = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double k = 0.0;
  std::vector<double> residues;
  std::vector<double> poles;
  double max_error = 0.0;
  int iterations = 0;
  bool fallback = false;

  double operator()(double x) const;
};

inline constexpr double kRationalTolerance = 1e-8;

// Best rational approximation of type (m, m), computed by
// equalizing the local error maxima between interpolation nodes. Falls back
// to the interpolant at Chebyshev nodes (in log x) if the iteration stalls.
RationalApproximation rational_fractional(double s, double lambda_min, double lambda_max,
                                          int m = 2);

// [lower bound, Gershgorin upper bound] for the spectrum of diag(mass)^{-1} k.
std::pair<double, double> spectral_interval(const Eigen::VectorXd& mass, const SparseMatrix& k,
                                            const Eigen::VectorXd& kappa_mass);

struct FieldRepresentation {
  SparseMatrix precision;   // latent precision
  SparseMatrix evaluation;  // field at vertices = evaluation * latent
  Eigen::Index vertex_count = 0;
  int terms = 1;
  double log_det = std::numeric_limits<double>::quiet_NaN();
  RationalApproximation rational;  // empty when alpha is an integer

  Eigen::Index latent_size() const { return precision.rows(); }
  // Covariance of the field at vertices between `vertex` and all vertices.
  Eigen::VectorXd covariance_column(Eigen::Index vertex) const;
  // One factorization, one column per requested vertex.
  Eigen::MatrixXd covariance_columns(const std::vector<Eigen::Index>& vertices) const;
};

// alpha integer -> direct path; otherwise the rational path with m_order terms.
FieldRepresentation stationary_precision(const AssembledOperators& ops, double kappa, double tau,
                                         double alpha, int m_order = 2);
FieldRepresentation rational_precision(const AssembledOperators& ops, double kappa, double tau,
                                       double alpha, int m_order = 2);

// log rho(s) = g0 + g2 t + g4 m, log sigma(s) = g1 + g3 t + g5 m in mesh
// coordinates; kappa enters per element, tau per vertex.
FieldRepresentation nonstationary_precision(const Mesh& mesh, const AssembledOperators& ops,
                                            const std::array<double, 6>& gamma, double alpha,
                                            int m_order = 2);

// H = R(theta) diag(e^{2u}, e^{-2u}) R(theta)^T, det H = 1.
Eigen::Matrix2d anisotropy_matrix(double u, double theta);
FieldRepresentation anisotropic_precision(const Mesh& mesh, double kappa, double tau, double alpha,
                                          double u, double theta, int m_order = 2);

// Backward-Euler discretization of du/dt + gamma (kappa^2 - Laplacian)^alpha u = dW_Q
// on a 1-D maturity mesh, Delta t = 1, time-major latent ordering.
struct SpatiotemporalField : FieldRepresentation {
  Eigen::Index time_points = 0;
  Eigen::MatrixXd propagator;       // u_{t+1} = propagator u_t + innovation
  Eigen::MatrixXd innovation_cov;   // covariance of the innovation
  Eigen::MatrixXd stationary_cov;   // stationary marginal covariance of u_t
};

SpatiotemporalField spatiotemporal_precision(const AssembledOperators& ops, Eigen::Index time_points,
                                             double kappa, double gamma, double sigma, int alpha);

// Continuous marginal variance of the spatio-temporal field (d = 1, beta = 1).
double spatiotemporal_marginal_variance(double kappa, double gamma, double sigma, int alpha);

}  // namespace yieldfield
