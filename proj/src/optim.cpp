#include "yieldfield/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "yieldfield/error.hpp"

namespace yieldfield {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Simplex {
  std::vector<Eigen::VectorXd> points;
  std::vector<double> values;

  void order() {
    std::vector<std::size_t> idx(points.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<Eigen::VectorXd> p;
    std::vector<double> v;
    for (auto i : idx) {
      p.push_back(points[i]);
      v.push_back(values[i]);
    }
    points = std::move(p);
    values = std::move(v);
  }

  double diameter() const {
    double d = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i)
      d = std::max(d, (points[i] - points[0]).lpNorm<Eigen::Infinity>());
    return d;
  }
};

}  // namespace

OptimResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                        const Eigen::VectorXd& x0, const NelderMeadOptions& options) {
  const Eigen::Index n = x0.size();
  OptimResult out;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++out.evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : kInf;
  };
  if (n == 0 || options.max_evaluations <= 1) {
    out.x = x0;
    out.value = eval(x0);
    out.converged = n == 0;
    return out;
  }
  // adaptive coefficients for higher dimensions
  const double dn = static_cast<double>(n);
  const double alpha = 1.0, beta = 1.0 + 2.0 / dn, gamma = 0.75 - 0.5 / dn, delta = 1.0 - 1.0 / dn;

  Eigen::VectorXd start = x0;
  double start_value = eval(x0);
  for (int round = 0; round <= options.restarts; ++round) {
    Simplex s;
    s.points.push_back(start);
    s.values.push_back(start_value);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd p = start;
      p(i) += options.initial_step;
      s.points.push_back(p);
      s.values.push_back(eval(p));
    }
    s.order();
    while (out.evaluations < options.max_evaluations) {
      ++out.iterations;
      out.diameter = s.diameter();
      if (out.diameter < options.tolerance && std::isfinite(s.values[0])) break;
      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (Eigen::Index i = 0; i < n; ++i) centroid += s.points[i];
      centroid /= dn;
      const Eigen::VectorXd& worst = s.points[n];
      const Eigen::VectorXd xr = centroid + alpha * (centroid - worst);
      const double fr = eval(xr);
      if (fr < s.values[0]) {
        const Eigen::VectorXd xe = centroid + beta * (xr - centroid);
        const double fe = eval(xe);
        if (fe < fr) {
          s.points[n] = xe;
          s.values[n] = fe;
        } else {
          s.points[n] = xr;
          s.values[n] = fr;
        }
      } else if (fr < s.values[n - 1]) {
        s.points[n] = xr;
        s.values[n] = fr;
      } else {
        const bool outside = fr < s.values[n];
        const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + gamma * (xr - centroid))
                                           : Eigen::VectorXd(centroid - gamma * (centroid - worst));
        const double fc = eval(xc);
        if (fc < (outside ? fr : s.values[n])) {
          s.points[n] = xc;
          s.values[n] = fc;
        } else {
          for (Eigen::Index i = 1; i <= n; ++i) {
            s.points[i] = s.points[0] + delta * (s.points[i] - s.points[0]);
            s.values[i] = eval(s.points[i]);
          }
        }
      }
      s.order();
      out.trace.push_back(s.values[0]);
    }
    start = s.points[0];
    start_value = s.values[0];
    out.diameter = s.diameter();
    out.converged = out.diameter < options.tolerance;
    if (out.evaluations >= options.max_evaluations) break;
  }
  if (!std::isfinite(start_value)) {
    throw ConvergenceError("Nelder-Mead: every evaluated point was rejected");
  }
  out.x = start;
  out.value = start_value;
  return out;
}

}  // namespace yieldfield
