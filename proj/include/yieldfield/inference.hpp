#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "yieldfield/dataio.hpp"
#include "yieldfield/fem.hpp"
#include "yieldfield/gmrf.hpp"
#include "yieldfield/nsbasis.hpp"
#include "yieldfield/optim.hpp"
#include "yieldfield/spdefields.hpp"

namespace yieldfield {

inline constexpr double kDefaultLambda = 0.0609;

enum class Trend { two_step, bdns };
enum class Residual { none, stationary, nonstationary, anisotropic, spatiotemporal };

Trend parse_trend(const std::string& name);
Residual parse_residual(const std::string& name);
std::string to_string(Trend t);
std::string to_string(Residual r);

// Prior on one unconstrained hyperparameter theta. For the positive families
// theta is the log of the natural parameter and the density includes the
// Jacobian of the exp map.
//   normal(a = mean, b = sd)          theta ~ N(a, b^2)
//   lognormal(a = meanlog, b = sdlog) exp(theta) lognormal, i.e. theta ~ N(a, b^2)
//   gamma(a = shape, b = rate)        exp(theta) ~ Gamma(a, b)
//   pc_range(a = median, b = dim)     exp(theta) has P(range < a) = 1/2
//   pc_sd(a = median)                 exp(theta) exponential with median a
//   uniform(a = lo, b = hi)           a + (b - a) logistic(theta)
//   flat                              constant
enum class PriorFamily { normal, lognormal, gamma, pc_range, pc_sd, uniform, flat };

struct PriorDescriptor {
  PriorFamily family = PriorFamily::flat;
  double a = 0.0;
  double b = 1.0;

  void validate() const;
  double log_density(double theta) const;
};

PriorFamily parse_prior_family(const std::string& name);
std::string to_string(PriorFamily f);

struct MeshSettings {
  double resolution = 0.04;             // spatial variants, scaled units
  double extension = 0.1;               // fraction of each side
  double maturity_resolution = 0.08;    // spatio-temporal maturity mesh
  int forward_months = 12;              // time coverage beyond the window
};

struct ModelSpec {
  Trend trend = Trend::bdns;
  Residual residual = Residual::none;
  bool joint_lambda = false;
  double lambda = kDefaultLambda;          // fixed value, or the starting point
  nsbasis::LambdaPrior lambda_prior;
  double alpha = 2.0;                    // spatial operator exponent
  bool estimate_alpha = false;           // alpha on (1, 3] for spatial variants
  int spatiotemporal_alpha = 1;
  int rational_order = 2;
  MeshSettings mesh;
  std::map<std::string, PriorDescriptor> priors;  // overrides by hyperparameter name
  NelderMeadOptions optimizer;

  void validate() const;
  std::string tag() const;
};

struct Hyperparameter {
  std::string name;
  PriorDescriptor prior;
  double initial = 0.0;
};

// Per-window data and the theta-independent pieces (mesh, operators, projections).
struct ModelContext {
  ModelSpec spec;
  YieldPanel window;
  Eigen::VectorXd y;  // time-major stacking, index t * M + j
  Mesh mesh;
  AxisScaling scaling;
  AssembledOperators ops;
  SparseMatrix projection;  // T*M x mesh vertices (spatial) or M x vertices (spatio-temporal)
  std::vector<Hyperparameter> hyper;

  Eigen::Index time_points() const { return window.months(); }
  Eigen::Index maturity_count() const { return window.maturity_count(); }
  std::vector<std::string> names() const;
  Eigen::VectorXd initial_theta() const;
  double log_prior(const Eigen::VectorXd& theta) const;
};

std::shared_ptr<const ModelContext> make_context(const ModelSpec& spec, const YieldPanel& window);

// Natural-scale hyperparameters decoded from theta.
struct DecodedHyper {
  double noise_precision = 1.0;
  std::array<Ar1Params, 3> factors{};
  // field
  double range = 0.0;
  double sd = 0.0;
  double alpha = 2.0;
  std::array<double, 6> gamma{};
  double aniso_u = 0.0;
  double aniso_theta = 0.0;
  double kappa = 0.0;
  double temporal_rate = 0.0;  // gamma_t
  double noise_sigma = 0.0;    // Q-Wiener amplitude
};

DecodedHyper decode(const ModelContext& ctx, const Eigen::VectorXd& theta);

// Latent ordering: [beta_1 (T), beta_2 (T), beta_3 (T), field, mu (3), lambda~].
// The factor blocks are mean-shifted AR(1)s, mu are fixed effects with sd 100.
struct LatentGaussianModel {
  Eigen::Index time_points = 0;
  Eigen::Index maturity_count = 0;
  double lambda = kDefaultLambda;
  Eigen::MatrixXd loadings;  // M x 3
  SparseMatrix q_prior;
  double prior_logdet = 0.0;
  SparseMatrix a;
  Eigen::VectorXd y;
  Eigen::VectorXd offset;
  double noise_precision = 1.0;
  Eigen::Index field_dim = 0;
  bool has_lambda = false;
  FieldRepresentation field;                   // spatial variants
  std::shared_ptr<SpatiotemporalField> st;     // spatio-temporal variant

  Eigen::Index latent_dimension() const { return 3 * time_points + field_dim; }
  Eigen::Index total_dimension() const { return q_prior.rows(); }
  Eigen::Index factor_index(int factor, Eigen::Index t) const { return factor * time_points + t; }
  Eigen::Index field_offset() const { return 3 * time_points; }
  Eigen::Index fixed_index(int factor) const { return latent_dimension() + factor; }
  Eigen::Index lambda_index() const { return latent_dimension() + 3; }
};

inline constexpr double kFixedEffectSd = 100.0;

// Linear model at a fixed lambda.
LatentGaussianModel assemble_lgm(const ModelContext& ctx, const Eigen::VectorXd& theta,
                                 double lambda);

// Linearization of eta = A(lambda(l~)) (beta + mu) + u around x0, where x0
// is in the augmented ordering (lambda~ last).
LatentGaussianModel linearize_lgm(const ModelContext& ctx, const Eigen::VectorXd& theta,
                                  const Eigen::VectorXd& x0);

// Nonlinear predictor at an augmented latent vector.
Eigen::VectorXd nonlinear_predictor(const ModelContext& ctx, const LatentGaussianModel& lgm,
                                    const Eigen::VectorXd& x);

// -log pi(theta) - log pi(y | theta); +inf when the model cannot be factorized.
double neg_log_posterior(const ModelContext& ctx, const Eigen::VectorXd& theta,
                         double lambda = kDefaultLambda);

struct FitResult {
  std::shared_ptr<const ModelContext> context;
  Eigen::VectorXd theta;
  DecodedHyper hyper;
  double log_posterior = 0.0;
  double log_marginal_likelihood = 0.0;
  int evaluations = 0;
  int iterations = 0;
  double final_step = 0.0;
  bool converged = false;
  std::vector<double> trace;
  LatentGaussianModel model;
  GaussianPosterior posterior;
  // lambda summary: posterior median and delta-method sd when joint
  double lambda = kDefaultLambda;
  double lambda_sd = 0.0;
  int outer_iterations = 0;
  std::vector<double> lambda_trace;

  Eigen::Vector3d mu() const;
  Eigen::MatrixXd factor_means() const;  // T x 3, mean included
  Eigen::MatrixXd field_means() const;   // T x M field at the observations
  Eigen::MatrixXd trend_means() const;   // T x M
};

FitResult fit_map(std::shared_ptr<const ModelContext> ctx,
                  const std::optional<Eigen::VectorXd>& init = std::nullopt);

inline constexpr int kMaxOuterIterations = 50;

FitResult fit_joint_lambda(std::shared_ptr<const ModelContext> ctx,
                           const std::optional<Eigen::VectorXd>& init = std::nullopt);

// Dispatches on spec.joint_lambda.
FitResult fit(std::shared_ptr<const ModelContext> ctx,
              const std::optional<Eigen::VectorXd>& init = std::nullopt);

// Two-step OLS factor paths (T x 3) of a panel window.
Eigen::MatrixXd ols_factors(const YieldPanel& window, double lambda);

// JSON document with named theta (unconstrained and natural), lambda summary,
// log posterior and convergence trace.
std::string to_json(const FitResult& fit);
// Binary sidecar: "YFLP", dimension, mean, then the factor as permutation,
// pivots and unit-lower triplets.
void write_latent_sidecar(std::ostream& out, const FitResult& fit);
struct LatentSidecar {
  Eigen::VectorXd mean;
  Eigen::VectorXi permutation;
  Eigen::VectorXd pivots;
  SparseMatrix lower;
  SparseMatrix precision() const;
};
LatentSidecar read_latent_sidecar(std::istream& in);

}  // namespace yieldfield
