#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace yieldfield {

struct NelderMeadOptions {
  double initial_step = 0.5;
  double tolerance = 1e-5;  // simplex diameter
  int max_evaluations = 2000;  // 1: evaluate x0 only
  int restarts = 1;  // fresh simplex around the incumbent after convergence
};

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  int iterations = 0;
  double diameter = 0.0;
  bool converged = false;
  std::vector<double> trace;  // best value after each iteration
};

// Minimizes f; non-finite values count as rejected points. Throws
// ConvergenceError when no finite value is ever seen.
OptimResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                        const Eigen::VectorXd& x0, const NelderMeadOptions& options = {});

}  // namespace yieldfield
