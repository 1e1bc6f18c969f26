#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "yieldfield/gmrf.hpp"

namespace oracle {

inline Eigen::MatrixXd dense(const yieldfield::SparseMatrix& m) { return Eigen::MatrixXd(m); }

// log N(y | 0, S) by dense Cholesky.
inline double mvn_logpdf(const Eigen::VectorXd& y, const Eigen::MatrixXd& s) {
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  const Eigen::VectorXd z = llt.matrixL().solve(y);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * y.size() * std::log(2.0 * M_PI) - 0.5 * logdet - 0.5 * z.squaredNorm();
}

// Random SPD matrix with a controlled spectrum.
inline Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng, double floor = 0.5) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd b(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b(i, j) = normal(rng);
  return b * b.transpose() / n + floor * Eigen::MatrixXd::Identity(n, n);
}

inline yieldfield::SparseMatrix to_sparse(const Eigen::MatrixXd& m) {
  return m.sparseView();
}

}  // namespace oracle
