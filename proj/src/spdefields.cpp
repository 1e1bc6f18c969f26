#include "yieldfield/spdefields.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "yieldfield/error.hpp"

namespace yieldfield {

double matern_nu(double alpha, int d) { return alpha - 0.5 * d; }

double kappa_from_range(double rho, double nu) {
  if (!(rho > 0.0) || !(nu > 0.0)) throw DomainError("range and smoothness must be positive");
  return std::sqrt(8.0 * nu) / rho;
}

double range_from_kappa(double kappa, double nu) {
  if (!(kappa > 0.0) || !(nu > 0.0)) throw DomainError("kappa and smoothness must be positive");
  return std::sqrt(8.0 * nu) / kappa;
}

double matern_log_tau(double sigma, double kappa, double alpha, int d) {
  const double nu = matern_nu(alpha, d);
  if (!(nu > 0.0)) throw DomainError("alpha must exceed d/2 for a finite variance");
  if (!(sigma > 0.0) || !(kappa > 0.0)) throw DomainError("sigma and kappa must be positive");
  return 0.5 * (std::lgamma(nu) - std::lgamma(alpha) - 0.5 * d * std::log(4.0 * std::numbers::pi)) -
         std::log(sigma) - nu * std::log(kappa);
}

double matern_sigma(double tau, double kappa, double alpha, int d) {
  // the link is linear in log sigma
  return std::exp(matern_log_tau(1.0, kappa, alpha, d) - std::log(tau));
}

double RationalApproximation::operator()(double x) const {
  double out = k;
  for (std::size_t i = 0; i < poles.size(); ++i) out += residues[i] / (x - poles[i]);
  return out;
}

namespace {

using Poly = Eigen::VectorXd;  // coefficients, lowest degree first

Poly poly_mul_linear(const Poly& p, double root) {
  Poly out = Poly::Zero(p.size() + 1);
  out.tail(p.size()) += p;
  out.head(p.size()) -= root * p;
  return out;
}

double poly_eval(const Poly& p, double x) {
  double out = 0.0;
  for (Eigen::Index i = p.size() - 1; i >= 0; --i) out = out * x + p(i);
  return out;
}

Poly poly_derivative(const Poly& p) {
  if (p.size() <= 1) return Poly::Zero(1);
  Poly out(p.size() - 1);
  for (Eigen::Index i = 1; i < p.size(); ++i) out(i - 1) = i * p(i);
  return out;
}

// Type (m, m) interpolant of f(x) = x^{-s} at 2m + 1 nodes (x scaled to
// [delta, 1]) in barycentric form, returned as numerator and denominator
// polynomials.
struct Interpolant {
  Poly num;
  Poly den;
  double operator()(double x) const { return poly_eval(num, x) / poly_eval(den, x); }
};

Interpolant interpolate(const std::vector<double>& nodes, double s) {
  const int total = static_cast<int>(nodes.size());
  const int m = (total - 1) / 2;
  std::vector<double> support, other;
  for (int i = 0; i < total; ++i) (i % 2 == 0 ? support : other).push_back(nodes[i]);
  auto f = [s](double x) { return std::pow(x, -s); };
  Eigen::MatrixXd loewner(m, m + 1);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j <= m; ++j)
      loewner(i, j) = (f(other[i]) - f(support[j])) / (other[i] - support[j]);
  Eigen::VectorXd w;
  if (m == 0) {
    w = Eigen::VectorXd::Ones(1);
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(loewner, Eigen::ComputeFullV);
    w = svd.matrixV().col(m);
  }
  Interpolant out{Poly::Zero(m + 1), Poly::Zero(m + 1)};
  for (int j = 0; j <= m; ++j) {
    Poly basis = Poly::Ones(1);
    for (int k = 0; k <= m; ++k)
      if (k != j) basis = poly_mul_linear(basis, support[k]);
    out.num += w(j) * f(support[j]) * basis;
    out.den += w(j) * basis;
  }
  return out;
}

// Local maxima of |r - f| / f(delta) on the intervals between consecutive
// breakpoints, sampled uniformly in log x. Scaling by the largest value
// weights the low end of the spectrum, which carries the covariance.
std::vector<double> interval_errors(const Interpolant& r, const std::vector<double>& breaks,
                                    double s) {
  constexpr int kSamples = 48;
  const double scale = std::pow(breaks.front(), s);
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = std::log(breaks[i]), b = std::log(breaks[i + 1]);
    double worst = 0.0;
    for (int k = 0; k <= kSamples; ++k) {
      const double x = std::exp(a + (b - a) * k / kSamples);
      worst = std::max(worst, std::abs(r(x) - std::pow(x, -s)) * scale);
    }
    out.push_back(worst);
  }
  return out;
}

struct Candidate {
  Interpolant r;
  double error;
  int iterations;
};

Candidate equalize(double s, double delta, int m, bool chebyshev_only) {
  const int n_nodes = 2 * m + 1;
  const double t0 = std::log(delta);
  // Chebyshev points of the first kind in t = log x.
  std::vector<double> t(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    const double c = std::cos(std::numbers::pi * (2.0 * (n_nodes - i) - 1.0) / (2.0 * n_nodes));
    t[i] = 0.5 * t0 * (1.0 - c);
  }
  std::sort(t.begin(), t.end());

  auto build = [&](const std::vector<double>& tn, std::vector<double>& breaks) {
    std::vector<double> nodes;
    breaks.assign(1, delta);
    for (double v : tn) {
      nodes.push_back(std::exp(v));
      breaks.push_back(std::exp(v));
    }
    breaks.push_back(1.0);
    return interpolate(nodes, s);
  };

  std::vector<double> breaks;
  Interpolant r = build(t, breaks);
  auto errs = interval_errors(r, breaks, s);
  Candidate best{r, *std::max_element(errs.begin(), errs.end()), 0};
  if (chebyshev_only) return best;

  constexpr int kMaxIterations = 300;
  for (int it = 1; it <= kMaxIterations; ++it) {
    const double hi = *std::max_element(errs.begin(), errs.end());
    const double lo = *std::min_element(errs.begin(), errs.end());
    if (hi - lo < kRationalTolerance * hi) {
      best.iterations = it;
      return best;
    }
    // Shrink intervals with large error, grow those with small error.
    std::vector<double> len(errs.size());
    std::vector<double> edges{t0};
    edges.insert(edges.end(), t.begin(), t.end());
    edges.push_back(0.0);
    double mean_log = 0.0;
    for (double e : errs) mean_log += std::log(std::max(e, 1e-300));
    mean_log /= static_cast<double>(errs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < errs.size(); ++i) {
      const double ratio = std::exp(mean_log - std::log(std::max(errs[i], 1e-300)));
      len[i] = (edges[i + 1] - edges[i]) * std::pow(ratio, 0.5 / (2.0 * m + 1.0));
      total += len[i];
    }
    double acc = t0;
    for (int i = 0; i < n_nodes; ++i) {
      acc += len[i] * (-t0) / total;
      t[i] = acc;
    }
    r = build(t, breaks);
    errs = interval_errors(r, breaks, s);
    const double now = *std::max_element(errs.begin(), errs.end());
    if (!std::isfinite(now)) break;
    if (now < best.error) best = {r, now, it};
  }
  best.iterations = -1;  // stalled
  return best;
}

RationalApproximation partial_fractions(const Interpolant& r, double s, double lmin, double lmax,
                                        int m) {
  RationalApproximation out;
  out.s = s;
  out.lambda_min = lmin;
  out.lambda_max = lmax;
  const Poly& den = r.den;
  // roots of the denominator via the companion matrix
  int degree = m;
  while (degree > 0 && std::abs(den(degree)) < 1e-14 * den.cwiseAbs().maxCoeff()) --degree;
  if (degree != m) throw ApproximationError("rational approximation lost a pole");
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(m, m);
  for (int i = 1; i < m; ++i) companion(i, i - 1) = 1.0;
  for (int i = 0; i < m; ++i) companion(i, m - 1) = -den(i) / den(m);
  const Eigen::VectorXcd roots = Eigen::EigenSolver<Eigen::MatrixXd>(companion).eigenvalues();
  const Poly dden = poly_derivative(den);
  for (int i = 0; i < m; ++i) {
    if (std::abs(roots(i).imag()) > 1e-8 * std::max(1.0, std::abs(roots(i)))) {
      throw ApproximationError("rational approximation has complex poles");
    }
    const double p = roots(i).real();
    const double res = poly_eval(r.num, p) / poly_eval(dden, p);
    if (!(p < 0.0)) throw ApproximationError("rational approximation has a nonnegative pole");
    if (!(res > 0.0)) throw ApproximationError("rational approximation has a nonpositive residue");
    // back to lambda units: x = lambda / lmax
    out.poles.push_back(lmax * p);
    out.residues.push_back(std::pow(lmax, 1.0 - s) * res);
  }
  const double k = r.num(m) / den(m);
  if (k < 0.0) throw ApproximationError("rational approximation has a negative constant term");
  out.k = std::pow(lmax, -s) * k;
  return out;
}

struct CacheKey {
  double s, lmin, lmax;
  int m;
  bool operator<(const CacheKey& o) const {
    return std::tie(s, lmin, lmax, m) < std::tie(o.s, o.lmin, o.lmax, o.m);
  }
};

}  // namespace

RationalApproximation rational_fractional(double s, double lambda_min, double lambda_max, int m) {
  if (!(s > 0.0 && s < 1.0)) throw DomainError("rational_fractional: s must lie in (0, 1)");
  if (m < 1) throw DomainError("rational_fractional: order must be at least 1");
  if (!(lambda_min > 0.0) || !(lambda_max > lambda_min) || !std::isfinite(lambda_max)) {
    throw NumericalError("rational_fractional: invalid spectral interval");
  }
  static std::mutex mutex;
  static std::map<CacheKey, RationalApproximation> cache;
  const CacheKey key{s, lambda_min, lambda_max, m};
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }

  const double delta = lambda_min / lambda_max;
  Candidate c = equalize(s, delta, m, false);
  bool fallback = false;
  if (c.iterations < 0) {
    const Candidate cheb = equalize(s, delta, m, true);
    if (cheb.error < c.error) {
      c = cheb;
      fallback = true;
    }
  }
  RationalApproximation out = partial_fractions(c.r, s, lambda_min, lambda_max, m);
  out.max_error = c.error;
  out.iterations = c.iterations;
  out.fallback = fallback;

  std::lock_guard lock(mutex);
  if (cache.size() > 256) cache.clear();
  cache.emplace(key, out);
  return out;
}

std::pair<double, double> spectral_interval(const Eigen::VectorXd& mass, const SparseMatrix& k,
                                            const Eigen::VectorXd& kappa_mass) {
  Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(k.rows());
  for (int j = 0; j < k.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(k, j); it; ++it) rowsum(it.row()) += std::abs(it.value());
  const double upper = (rowsum.array() / mass.array()).maxCoeff();
  const double lower = (kappa_mass.array() / mass.array()).minCoeff();
  if (!(lower > 0.0) || !std::isfinite(upper) || !(upper > lower)) {
    throw NumericalError("spectral interval estimation failed");
  }
  return {lower, upper};
}

Eigen::VectorXd FieldRepresentation::covariance_column(Eigen::Index vertex) const {
  return covariance_columns({vertex}).col(0);
}

Eigen::MatrixXd FieldRepresentation::covariance_columns(
    const std::vector<Eigen::Index>& vertices) const {
  const SparseCholesky chol(precision);
  Eigen::MatrixXd rhs(evaluation.cols(), static_cast<Eigen::Index>(vertices.size()));
  const SparseMatrix et = evaluation.transpose();
  for (std::size_t j = 0; j < vertices.size(); ++j) {
    if (vertices[j] < 0 || vertices[j] >= vertex_count) throw RangeError("vertex out of range");
    rhs.col(static_cast<Eigen::Index>(j)) = et.col(vertices[j]);
  }
  return evaluation * chol.solve(rhs);
}

namespace {

SparseMatrix diag_scale(const SparseMatrix& m, const Eigen::VectorXd& left,
                        const Eigen::VectorXd& right) {
  SparseMatrix out = m;
  for (int j = 0; j < out.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(out, j); it; ++it)
      it.valueRef() *= left(it.row()) * right(it.col());
  return out;
}

double sparse_logdet(const SparseMatrix& m) { return SparseCholesky(m).log_determinant(); }

// Field with precision built from a diagonal lumped mass, K = diag(kappa_mass) + G,
// and a per-vertex tau scaling D: term precisions D Q_i D.
FieldRepresentation build_field(const Eigen::VectorXd& mass, const Eigen::VectorXd& kappa_mass,
                                const SparseMatrix& g, const Eigen::VectorXd& tau, double alpha,
                                int m_order) {
  const Eigen::Index n = mass.size();
  if (!(alpha > 0.0)) throw DomainError("alpha must be positive");
  if (!(tau.array() > 0.0).all() || !tau.allFinite()) throw DomainError("tau must be positive");
  SparseMatrix k = g + sparse_diagonal(kappa_mass);
  k = symmetrize(k);
  const Eigen::VectorXd inv_mass = mass.cwiseInverse();
  const int whole = static_cast<int>(std::floor(alpha + 1e-12));
  const double frac = alpha - whole;
  const bool integer = frac < 1e-12;

  // P_n = C (C^{-1} K)^n
  auto power = [&](int p) {
    SparseMatrix out = sparse_diagonal(mass);
    for (int i = 0; i < p; ++i) {
      SparseMatrix next = k * inv_mass.asDiagonal() * out;
      out = symmetrize(next);
    }
    return out;
  };
  const double logdet_mass = mass.array().log().sum();
  const double logdet_k = sparse_logdet(k);
  const double logdet_tau2 = 2.0 * tau.array().log().sum();
  auto logdet_power = [&](int p) { return p * logdet_k - (p - 1) * logdet_mass; };

  FieldRepresentation out;
  out.vertex_count = n;
  if (integer) {
    if (whole < 1) throw DomainError("integer alpha must be at least 1");
    out.precision = diag_scale(power(whole), tau, tau);
    out.evaluation = sparse_identity(n);
    out.terms = 1;
    out.log_det = logdet_tau2 + logdet_power(whole);
    return out;
  }

  const auto [lmin, lmax] = spectral_interval(mass, k, kappa_mass);
  out.rational = rational_fractional(frac, lmin, lmax, m_order);
  const auto& ra = out.rational;
  const SparseMatrix pn = power(whole);
  std::vector<SparseMatrix> blocks;
  std::vector<double> weights;
  double logdet = 0.0;
  if (ra.k > 0.0) {
    blocks.push_back(diag_scale(pn, tau, tau));
    weights.push_back(std::sqrt(ra.k));
    logdet += logdet_tau2 + logdet_power(whole);
  }
  for (std::size_t i = 0; i < ra.poles.size(); ++i) {
    SparseMatrix shifted = k - ra.poles[i] * sparse_diagonal(mass);
    SparseMatrix qi = shifted * inv_mass.asDiagonal() * pn;
    blocks.push_back(diag_scale(symmetrize(qi), tau, tau));
    weights.push_back(std::sqrt(ra.residues[i]));
    logdet += logdet_tau2 + sparse_logdet(shifted) - logdet_mass + logdet_power(whole);
  }
  std::vector<const SparseMatrix*> ptrs;
  for (const auto& b : blocks) ptrs.push_back(&b);
  out.precision = block_diagonal(ptrs);
  std::vector<Triplet> et;
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (Eigen::Index v = 0; v < n; ++v) et.emplace_back(v, b * n + v, weights[b]);
  out.evaluation.resize(n, static_cast<Eigen::Index>(blocks.size()) * n);
  out.evaluation.setFromTriplets(et.begin(), et.end());
  out.terms = static_cast<int>(blocks.size());
  out.log_det = logdet;
  return out;
}

}  // namespace

FieldRepresentation stationary_precision(const AssembledOperators& ops, double kappa, double tau,
                                         double alpha, int m_order) {
  if (!(kappa > 0.0) || !(tau > 0.0)) throw DomainError("kappa and tau must be positive");
  const Eigen::Index n = ops.c_lumped.size();
  return build_field(ops.c_lumped, kappa * kappa * ops.c_lumped, ops.g,
                     Eigen::VectorXd::Constant(n, tau), alpha, m_order);
}

FieldRepresentation rational_precision(const AssembledOperators& ops, double kappa, double tau,
                                       double alpha, int m_order) {
  if (m_order < 1) throw DomainError("rational order must be at least 1");
  return stationary_precision(ops, kappa, tau, alpha, m_order);
}

FieldRepresentation nonstationary_precision(const Mesh& mesh, const AssembledOperators& ops,
                                            const std::array<double, 6>& gamma, double alpha,
                                            int m_order) {
  const int d = mesh.dim;
  const double nu = matern_nu(alpha, d);
  if (!(nu > 0.0)) throw DomainError("alpha must exceed d/2");
  for (double g : gamma)
    if (!std::isfinite(g)) throw DomainError("nonstationary coefficients must be finite");
  auto coord = [&](const Eigen::VectorXd& p, int axis) { return axis < d ? p(axis) : 0.0; };
  auto log_rho = [&](const Eigen::VectorXd& p) {
    return gamma[0] + gamma[2] * coord(p, 0) + gamma[4] * coord(p, 1);
  };
  auto log_sigma = [&](const Eigen::VectorXd& p) {
    return gamma[1] + gamma[3] * coord(p, 0) + gamma[5] * coord(p, 1);
  };
  Eigen::VectorXd kappa2(mesh.element_count());
  for (Eigen::Index e = 0; e < mesh.element_count(); ++e) {
    const double log_kappa = 0.5 * std::log(8.0 * nu) - log_rho(mesh.element_centroid(e));
    kappa2(e) = std::exp(2.0 * log_kappa);
  }
  const double kappa_spread = std::sqrt(kappa2.maxCoeff() / kappa2.minCoeff());
  if (!std::isfinite(kappa_spread) || kappa_spread > 1e3) {
    warn("nonstationary ranges vary by more than 1e3 across the mesh; the precision may be "
         "ill-conditioned");
  }
  Eigen::VectorXd tau(mesh.vertex_count());
  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
    const Eigen::VectorXd p = mesh.vertices.row(v).transpose();
    const double kappa = std::exp(0.5 * std::log(8.0 * nu) - log_rho(p));
    tau(v) = std::exp(matern_log_tau(std::exp(log_sigma(p)), kappa, alpha, d));
  }
  return build_field(ops.c_lumped, weighted_lumped_mass(mesh, kappa2), ops.g, tau, alpha,
                     m_order);
}

Eigen::Matrix2d anisotropy_matrix(double u, double theta) {
  Eigen::Matrix2d r;
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  const Eigen::Vector2d d(std::exp(2.0 * u), std::exp(-2.0 * u));
  Eigen::Matrix2d h = r * d.asDiagonal() * r.transpose();
  return 0.5 * (h + h.transpose());
}

FieldRepresentation anisotropic_precision(const Mesh& mesh, double kappa, double tau, double alpha,
                                          double u, double theta, int m_order) {
  if (mesh.dim != 2) throw DomainError("anisotropic field needs a 2-D mesh");
  const AssembledOperators ops = assemble(mesh, anisotropy_matrix(u, theta));
  return stationary_precision(ops, kappa, tau, alpha, m_order);
}

SpatiotemporalField spatiotemporal_precision(const AssembledOperators& ops, Eigen::Index time_points,
                                             double kappa, double gamma, double sigma, int alpha) {
  if (!(gamma > 0.0)) throw DomainError("temporal rate gamma must be positive");
  if (!(kappa > 0.0)) throw DomainError("kappa must be positive");
  if (!(sigma > 0.0)) throw DomainError("sigma must be positive");
  if (alpha != 1 && alpha != 2) throw DomainError("spatio-temporal alpha must be 1 or 2");
  if (time_points < 1) throw DomainError("need at least one time point");
  constexpr double dt = 1.0;
  const Eigen::Index n = ops.c_lumped.size();
  const Eigen::VectorXd& mass = ops.c_lumped;
  const Eigen::VectorXd inv_mass = mass.cwiseInverse();
  SparseMatrix k = symmetrize(SparseMatrix(ops.g + sparse_diagonal(kappa * kappa * mass)));
  SparseMatrix s = gamma * k;
  if (alpha == 2) s = symmetrize(SparseMatrix(gamma * (k * inv_mass.asDiagonal() * k)));
  const SparseMatrix m = symmetrize(SparseMatrix(sparse_diagonal(mass) + dt * s));
  const SparseMatrix qw = k / (sigma * sigma * dt);
  // blocks of the joint precision
  const SparseMatrix cinv_m = inv_mass.asDiagonal() * m;
  const SparseMatrix diag_next = symmetrize(SparseMatrix(cinv_m.transpose() * qw * cinv_m));
  const SparseMatrix off = -(qw * cinv_m);  // block (t, t + 1)

  // Stationary marginal from the generalized eigenproblem K v = lambda C v.
  const Eigen::MatrixXd kd(k);
  const Eigen::MatrixXd cd = mass.asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(kd, cd);
  const Eigen::VectorXd lambda = eig.eigenvalues();
  const Eigen::MatrixXd v = eig.eigenvectors();  // v' C v = I
  Eigen::VectorXd a(n), var(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double rate = dt * gamma * std::pow(lambda(j), alpha);
    a(j) = 1.0 / (1.0 + rate);
    var(j) = sigma * sigma * dt * a(j) * a(j) / (lambda(j) * (1.0 - a(j) * a(j)));
  }
  const Eigen::MatrixXd cv = cd * v;
  const Eigen::MatrixXd p1 = cv * var.cwiseInverse().asDiagonal() * cv.transpose();

  SpatiotemporalField out;
  out.time_points = time_points;
  out.vertex_count = n;
  out.terms = 1;
  out.propagator = v * a.asDiagonal() * cv.transpose();
  out.stationary_cov = v * var.asDiagonal() * v.transpose();
  {
    Eigen::VectorXd inn(n);
    for (Eigen::Index j = 0; j < n; ++j) inn(j) = sigma * sigma * dt * a(j) * a(j) / lambda(j);
    out.innovation_cov = v * inn.asDiagonal() * v.transpose();
  }

  std::vector<Triplet> t;
  const Eigen::Index T = time_points;
  t.reserve(T * (3 * diag_next.nonZeros() + 2 * off.nonZeros()) + n * n);
  auto add = [&](const SparseMatrix& b, Eigen::Index r0, Eigen::Index c0) {
    for (int j = 0; j < b.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(b, j); it; ++it)
        t.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
  };
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (p1(i, j) != 0.0) t.emplace_back(i, j, p1(i, j));
  for (Eigen::Index step = 0; step + 1 < T; ++step) {
    add(qw, step * n, step * n);
    add(diag_next, (step + 1) * n, (step + 1) * n);
    add(off, step * n, (step + 1) * n);
    add(SparseMatrix(off.transpose()), (step + 1) * n, step * n);
  }
  out.precision.resize(T * n, T * n);
  out.precision.setFromTriplets(t.begin(), t.end());
  out.precision = symmetrize(out.precision);
  out.evaluation = sparse_identity(T * n);

  // log det: p(u_1) times T - 1 transitions with conditional precision diag_next.
  const double logdet_p1 = mass.array().log().sum() - var.array().log().sum();
  const double logdet_cond = Eigen::MatrixXd(diag_next).ldlt().vectorD().array().log().sum();
  out.log_det = logdet_p1 + static_cast<double>(T - 1) * logdet_cond;
  return out;
}

double spatiotemporal_marginal_variance(double kappa, double gamma, double sigma, int alpha) {
  const double nu = alpha + 1.0 - 0.5;
  return sigma * sigma / (2.0 * gamma) * std::exp(std::lgamma(nu) - std::lgamma(nu + 0.5)) /
         (2.0 * std::sqrt(std::numbers::pi) * std::pow(kappa, 2.0 * nu));
}

}  // namespace yieldfield
