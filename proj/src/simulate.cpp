#include "yieldfield/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "yieldfield/fem.hpp"
#include "yieldfield/nsbasis.hpp"
#include "yieldfield/spdefields.hpp"

namespace yieldfield {

SimulatedPanel simulate_panel(Eigen::Index months, const std::vector<double>& maturities,
                              const DnsTruth& truth, std::uint64_t seed,
                              const std::optional<SpatiotemporalTruth>& field, int first_month) {
  if (months < 2) throw DomainError("simulate_panel: need at least 2 months");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  const Eigen::Index M = static_cast<Eigen::Index>(maturities.size());
  SimulatedPanel out;
  out.factors.resize(months, 3);
  for (int i = 0; i < 3; ++i) {
    const double phi = truth.phi[i], s = truth.innovation_sd[i];
    double x = s / std::sqrt(1.0 - phi * phi) * z(rng);
    for (Eigen::Index t = 0; t < months; ++t) {
      if (t > 0) x = phi * x + s * z(rng);
      out.factors(t, i) = truth.mu[i] + x;
    }
  }
  out.field = Eigen::MatrixXd::Zero(months, M);
  if (field) {
    const double m_min = *std::min_element(maturities.begin(), maturities.end());
    const double m_max = *std::max_element(maturities.begin(), maturities.end());
    const auto scaling = AxisScaling::from_data(0.0, 1.0, m_min, m_max);
    const Mesh mesh = build_mesh_1d({0.0, 1.0}, field->resolution, 0.1);
    const auto ops = assemble(mesh);
    const int a = field->alpha;
    const double kappa = kappa_from_range(field->range, a - 0.5);
    const double gamma = (1.0 / field->persistence - 1.0) / std::pow(kappa, 2.0 * a);
    const auto unit = spatiotemporal_precision(ops, 1, kappa, gamma, 1.0, a);
    double var = 0.0;
    int count = 0;
    for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
      const double x = mesh.vertices(v, 0);
      if (x < -1e-12 || x > 1.0 + 1e-12) continue;
      var += unit.stationary_cov(v, v);
      ++count;
    }
    const double scale2 = field->sd * field->sd / (var / count);
    const Eigen::MatrixXd l0 = (scale2 * unit.stationary_cov).llt().matrixL();
    const Eigen::MatrixXd li = (scale2 * unit.innovation_cov).llt().matrixL();
    Eigen::MatrixXd pts(M, 1);
    for (Eigen::Index j = 0; j < M; ++j) pts(j, 0) = scaling.maturity(maturities[j]);
    const SparseMatrix proj = projection_matrix(mesh, pts);
    const Eigen::Index n = mesh.vertex_count();
    auto normals = [&] {
      Eigen::VectorXd v(n);
      for (Eigen::Index k = 0; k < n; ++k) v(k) = z(rng);
      return v;
    };
    Eigen::VectorXd u = l0 * normals();
    for (Eigen::Index t = 0; t < months; ++t) {
      if (t > 0) u = unit.propagator * u + li * normals();
      out.field.row(t) = (proj * u).transpose();
    }
  }
  const auto l = nsbasis::observation_matrix(truth.lambda, maturities).matrix;
  out.panel.maturities = maturities;
  out.panel.yields = out.factors * l.transpose() + out.field;
  for (Eigen::Index t = 0; t < months; ++t) {
    out.panel.dates.push_back(add_months(first_month, static_cast<int>(t)));
    for (Eigen::Index j = 0; j < M; ++j) out.panel.yields(t, j) += truth.noise_sd * z(rng);
  }
  return out;
}

}  // namespace yieldfield
