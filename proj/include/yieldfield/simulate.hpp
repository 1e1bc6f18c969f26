#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "yieldfield/dataio.hpp"

namespace yieldfield {

// Synthetic panels for tests and the acceptance checks.
struct DnsTruth {
  double lambda = 0.0609;
  std::array<double, 3> mu{6.0, -1.5, 0.5};
  std::array<double, 3> phi{0.95, 0.9, 0.8};
  std::array<double, 3> innovation_sd{0.3, 0.4, 0.6};
  double noise_sd = 0.08;
};

// Spatio-temporal residual on scaled log-maturity, alpha in {1, 2}.
struct SpatiotemporalTruth {
  double range = 0.3;
  double sd = 0.15;
  double persistence = 0.7;  // 1 / (1 + gamma kappa^{2 alpha})
  int alpha = 1;
  double resolution = 0.08;
};

struct SimulatedPanel {
  YieldPanel panel;
  Eigen::MatrixXd factors;  // T x 3, mean included
  Eigen::MatrixXd field;    // T x M residual field, zero without one
};

SimulatedPanel simulate_panel(Eigen::Index months, const std::vector<double>& maturities,
                              const DnsTruth& truth, std::uint64_t seed,
                              const std::optional<SpatiotemporalTruth>& field = std::nullopt,
                              int first_month = 198501);

}  // namespace yieldfield
