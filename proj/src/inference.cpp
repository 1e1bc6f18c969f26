#include "yieldfield/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>

#include <json.hpp>

#include "yieldfield/error.hpp"

namespace yieldfield {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const char* const kFactorNames[3] = {"level", "slope", "curvature"};

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace

Trend parse_trend(const std::string& name) {
  if (name == "two_step" || name == "two-step" || name == "baseline") return Trend::two_step;
  if (name == "bdns") return Trend::bdns;
  throw ValidationError("unknown trend '" + name + "' (allowed: two_step, bdns)");
}

Residual parse_residual(const std::string& name) {
  if (name == "none") return Residual::none;
  if (name == "stationary") return Residual::stationary;
  if (name == "nonstationary") return Residual::nonstationary;
  if (name == "anisotropic") return Residual::anisotropic;
  if (name == "spatiotemporal") return Residual::spatiotemporal;
  throw ValidationError("unknown residual '" + name +
                        "' (allowed: none, stationary, nonstationary, anisotropic, "
                        "spatiotemporal)");
}

std::string to_string(Trend t) { return t == Trend::two_step ? "two_step" : "bdns"; }

std::string to_string(Residual r) {
  switch (r) {
    case Residual::none: return "none";
    case Residual::stationary: return "stationary";
    case Residual::nonstationary: return "nonstationary";
    case Residual::anisotropic: return "anisotropic";
    case Residual::spatiotemporal: return "spatiotemporal";
  }
  return "none";
}

PriorFamily parse_prior_family(const std::string& name) {
  static const std::map<std::string, PriorFamily> table{
      {"normal", PriorFamily::normal},   {"lognormal", PriorFamily::lognormal},
      {"gamma", PriorFamily::gamma},     {"pc_range", PriorFamily::pc_range},
      {"pc_sd", PriorFamily::pc_sd},     {"uniform", PriorFamily::uniform},
      {"flat", PriorFamily::flat}};
  auto it = table.find(name);
  if (it == table.end()) {
    throw ValidationError("unknown prior family '" + name +
                          "' (allowed: normal, lognormal, gamma, pc_range, pc_sd, uniform, flat)");
  }
  return it->second;
}

std::string to_string(PriorFamily f) {
  switch (f) {
    case PriorFamily::normal: return "normal";
    case PriorFamily::lognormal: return "lognormal";
    case PriorFamily::gamma: return "gamma";
    case PriorFamily::pc_range: return "pc_range";
    case PriorFamily::pc_sd: return "pc_sd";
    case PriorFamily::uniform: return "uniform";
    case PriorFamily::flat: return "flat";
  }
  return "flat";
}

void PriorDescriptor::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string("invalid prior: ") + what);
  };
  need(std::isfinite(a) && std::isfinite(b), "parameters must be finite");
  switch (family) {
    case PriorFamily::normal:
    case PriorFamily::lognormal: need(b > 0.0, "sd must be positive"); break;
    case PriorFamily::gamma: need(a > 0.0 && b > 0.0, "shape and rate must be positive"); break;
    case PriorFamily::pc_range: need(a > 0.0 && b >= 1.0, "median > 0 and dimension >= 1"); break;
    case PriorFamily::pc_sd: need(a > 0.0, "median must be positive"); break;
    case PriorFamily::uniform: need(b > a, "upper bound must exceed lower bound"); break;
    case PriorFamily::flat: break;
  }
}

double PriorDescriptor::log_density(double theta) const {
  constexpr double half_log_2pi = 0.91893853320467274178;
  switch (family) {
    case PriorFamily::normal:
    case PriorFamily::lognormal: {
      const double z = (theta - a) / b;
      return -half_log_2pi - std::log(b) - 0.5 * z * z;
    }
    case PriorFamily::gamma:
      return a * std::log(b) - std::lgamma(a) + a * theta - b * std::exp(theta);
    case PriorFamily::pc_range: {
      const double h = 0.5 * b;
      const double rate = std::numbers::ln2 * std::pow(a, h);
      return std::log(h * rate) - h * theta - rate * std::exp(-h * theta);
    }
    case PriorFamily::pc_sd: {
      const double rate = std::numbers::ln2 / a;
      return std::log(rate) + theta - rate * std::exp(theta);
    }
    case PriorFamily::uniform: {
      // log of logistic'(theta); the 1/(b - a) of the uniform cancels the Jacobian scale
      return -std::log1p(std::exp(-theta)) - std::log1p(std::exp(theta));
    }
    case PriorFamily::flat: return 0.0;
  }
  return 0.0;
}

void ModelSpec::validate() const {
  if (trend == Trend::two_step && residual != Residual::none) {
    throw ValidationError("the two-step baseline has no residual field");
  }
  if (trend == Trend::two_step && joint_lambda) {
    throw ValidationError("joint lambda estimation needs the bdns trend");
  }
  if (!(lambda > 0.0)) throw ValidationError("lambda must be positive");
  if (joint_lambda) lambda_prior.validate();
  if (residual != Residual::none && residual != Residual::spatiotemporal) {
    if (!(alpha > 1.0)) throw ValidationError("spatial alpha must exceed 1 in two dimensions");
  }
  if (spatiotemporal_alpha != 1 && spatiotemporal_alpha != 2) {
    throw ValidationError("spatio-temporal alpha must be 1 or 2");
  }
  if (rational_order < 1) throw ValidationError("rational order must be at least 1");
  if (!(mesh.resolution > 0.0) || !(mesh.maturity_resolution > 0.0)) {
    throw ValidationError("mesh resolutions must be positive");
  }
  if (!(mesh.extension >= 0.0)) throw ValidationError("mesh extension must be nonnegative");
  if (mesh.forward_months < 0) throw ValidationError("forward_months must be nonnegative");
  for (const auto& [name, prior] : priors) prior.validate();
  if (optimizer.max_evaluations < 1) throw ValidationError("max_evaluations must be positive");
}

std::string ModelSpec::tag() const {
  if (trend == Trend::two_step) return "baseline";
  std::string out;
  switch (residual) {
    case Residual::none: out = "bdns"; break;
    case Residual::stationary: out = "stat"; break;
    case Residual::nonstationary: out = "nonstat"; break;
    case Residual::anisotropic: out = "aniso"; break;
    case Residual::spatiotemporal: out = "spatemp"; break;
  }
  if (joint_lambda) {
    out += lambda_prior.family == nsbasis::PriorFamily::lognormal ? "_lognormal" : "_gamma";
  }
  return out;
}

std::vector<std::string> ModelContext::names() const {
  std::vector<std::string> out;
  for (const auto& h : hyper) out.push_back(h.name);
  return out;
}

Eigen::VectorXd ModelContext::initial_theta() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(hyper.size()));
  for (std::size_t i = 0; i < hyper.size(); ++i) out(static_cast<Eigen::Index>(i)) = hyper[i].initial;
  return out;
}

double ModelContext::log_prior(const Eigen::VectorXd& theta) const {
  if (theta.size() != static_cast<Eigen::Index>(hyper.size())) {
    throw SizeError("theta has " + std::to_string(theta.size()) + " entries, expected " +
                    std::to_string(hyper.size()));
  }
  double out = 0.0;
  for (std::size_t i = 0; i < hyper.size(); ++i)
    out += hyper[i].prior.log_density(theta(static_cast<Eigen::Index>(i)));
  return out;
}

Eigen::MatrixXd ols_factors(const YieldPanel& window, double lambda) {
  const auto l = nsbasis::observation_matrix(lambda, window.maturities).matrix;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(l);
  if (qr.rank() < 3) throw NumericalError("collinear Nelson-Siegel loadings");
  return qr.solve(window.yields.transpose()).transpose();
}

namespace {

struct Ar1Fit {
  double phi;
  double innovation_var;
};

Ar1Fit fit_ar1_demeaned(const Eigen::VectorXd& x) {
  const Eigen::VectorXd d = x.array() - x.mean();
  const Eigen::Index n = d.size();
  const double num = d.head(n - 1).dot(d.tail(n - 1));
  const double den = d.head(n - 1).squaredNorm();
  const double phi = den > 0.0 ? std::clamp(num / den, 0.05, 0.98) : 0.5;
  const Eigen::VectorXd e = d.tail(n - 1) - phi * d.head(n - 1);
  return {phi, std::max(e.squaredNorm() / static_cast<double>(n - 1), 1e-8)};
}

PriorDescriptor prior_or(const ModelSpec& spec, const std::string& name, PriorDescriptor fallback) {
  auto it = spec.priors.find(name);
  return it == spec.priors.end() ? fallback : it->second;
}

double spatial_nu(double alpha) { return alpha - 1.0; }

}  // namespace

std::shared_ptr<const ModelContext> make_context(const ModelSpec& spec, const YieldPanel& window) {
  spec.validate();
  window.validate();
  if (window.months() < 2) throw RangeError("the estimation window needs at least 2 months");
  auto ctx = std::make_shared<ModelContext>();
  ctx->spec = spec;
  ctx->window = window;
  const Eigen::Index T = window.months(), M = window.maturity_count();
  ctx->y.resize(T * M);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index j = 0; j < M; ++j) ctx->y(t * M + j) = window.yields(t, j);

  // starting values from the two-step fit
  const double start_lambda =
      spec.joint_lambda ? spec.lambda_prior.median() : spec.lambda;
  const Eigen::MatrixXd f = ols_factors(window, start_lambda);
  const auto l = nsbasis::observation_matrix(start_lambda, window.maturities).matrix;
  const double resid_var = std::max(
      (window.yields - f * l.transpose()).squaredNorm() / static_cast<double>(T * M), 1e-8);
  const bool has_field = spec.residual != Residual::none;
  const double noise_var = has_field ? 0.3 * resid_var : resid_var;
  const double field_sd = std::sqrt(0.7 * resid_var);

  const PriorDescriptor tau_prior{PriorFamily::gamma, 1.0, 5e-5};
  const PriorDescriptor phi_prior{PriorFamily::normal, 0.0, std::sqrt(10.0)};
  auto add = [&](const std::string& name, PriorDescriptor fallback, double initial) {
    ctx->hyper.push_back({name, prior_or(spec, name, fallback), initial});
  };
  add("noise.log_precision", tau_prior, -std::log(noise_var));
  for (int i = 0; i < 3; ++i) {
    const auto ar = fit_ar1_demeaned(f.col(i));
    add(std::string(kFactorNames[i]) + ".log_tau", tau_prior, -std::log(ar.innovation_var));
    add(std::string(kFactorNames[i]) + ".logit_phi", phi_prior, logit(ar.phi));
  }

  if (!has_field) return ctx;
  const double m_min = *std::min_element(window.maturities.begin(), window.maturities.end());
  const double m_max = *std::max_element(window.maturities.begin(), window.maturities.end());
  if (!(m_max > m_min)) throw ValidationError("field models need at least two maturities");
  ctx->scaling = AxisScaling::from_data(0.0, static_cast<double>(T - 1), m_min, m_max);
  const auto& ms = spec.mesh;

  if (spec.residual == Residual::spatiotemporal) {
    ctx->mesh = build_mesh_1d({0.0, 1.0}, ms.maturity_resolution, ms.extension);
    ctx->ops = assemble(ctx->mesh);
    Eigen::MatrixXd pts(M, 1);
    for (Eigen::Index j = 0; j < M; ++j) pts(j, 0) = ctx->scaling.maturity(window.maturities[j]);
    ctx->projection = projection_matrix(ctx->mesh, pts);
    add("field.log_range", {PriorFamily::pc_range, 1.0 / 3.0, 1.0}, std::log(1.0 / 3.0));
    add("field.log_sd", {PriorFamily::pc_sd, 0.3, 1.0}, std::log(field_sd));
    add("field.logit_persistence", phi_prior, logit(0.7));
    return ctx;
  }

  const double t_end = 1.0 + static_cast<double>(ms.forward_months) / static_cast<double>(T - 1);
  ctx->mesh = build_mesh_2d({0.0, t_end}, {0.0, 1.0}, ms.resolution, ms.extension);
  if (spec.residual != Residual::anisotropic) ctx->ops = assemble(ctx->mesh);
  Eigen::MatrixXd pts(T * M, 2);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index j = 0; j < M; ++j)
      pts.row(t * M + j) = ctx->scaling(static_cast<double>(t), window.maturities[j]).transpose();
  ctx->projection = projection_matrix(ctx->mesh, pts);

  const double median_range = std::sqrt(2.0) / 3.0;
  const PriorDescriptor range_prior{PriorFamily::pc_range, median_range, 2.0};
  const PriorDescriptor sd_prior{PriorFamily::pc_sd, 0.3, 1.0};
  const PriorDescriptor slope_prior{PriorFamily::normal, 0.0, 1.0};
  if (spec.residual == Residual::nonstationary) {
    add("field.gamma0", range_prior, std::log(median_range));
    add("field.gamma1", sd_prior, std::log(field_sd));
    for (int k = 2; k < 6; ++k) add("field.gamma" + std::to_string(k), slope_prior, 0.0);
  } else {
    add("field.log_range", range_prior, std::log(median_range));
    add("field.log_sd", sd_prior, std::log(field_sd));
  }
  if (spec.residual == Residual::anisotropic) {
    add("field.aniso_u", slope_prior, 0.0);
    add("field.aniso_theta", slope_prior, 0.0);
  }
  if (spec.estimate_alpha) {
    const double p = std::clamp((spec.alpha - 1.0) / 2.0, 0.05, 0.95);
    add("field.alpha", {PriorFamily::uniform, 1.0, 3.0}, logit(p));
  }
  return ctx;
}

DecodedHyper decode(const ModelContext& ctx, const Eigen::VectorXd& theta) {
  if (theta.size() != static_cast<Eigen::Index>(ctx.hyper.size())) {
    throw SizeError("theta has " + std::to_string(theta.size()) + " entries, expected " +
                    std::to_string(ctx.hyper.size()));
  }
  if (!theta.allFinite()) throw DomainError("theta must be finite");
  DecodedHyper h;
  h.alpha = ctx.spec.alpha;
  h.noise_precision = std::exp(theta(0));
  for (int i = 0; i < 3; ++i) h.factors[i] = hyper_transform_ar1(theta(1 + 2 * i), theta(2 + 2 * i));
  auto at = [&](const std::string& name) {
    for (std::size_t i = 0; i < ctx.hyper.size(); ++i)
      if (ctx.hyper[i].name == name) return theta(static_cast<Eigen::Index>(i));
    throw Error("missing hyperparameter " + name);
  };
  const Residual r = ctx.spec.residual;
  if (r == Residual::none) return h;
  if (ctx.spec.estimate_alpha && r != Residual::spatiotemporal) {
    h.alpha = 1.0 + 2.0 * logistic(at("field.alpha"));
  }
  if (r == Residual::spatiotemporal) {
    const int a = ctx.spec.spatiotemporal_alpha;
    h.alpha = a;
    h.range = std::exp(at("field.log_range"));
    h.sd = std::exp(at("field.log_sd"));
    h.kappa = kappa_from_range(h.range, a - 0.5);
    const double persistence = std::clamp(logistic(at("field.logit_persistence")), 1e-9, 1 - 1e-9);
    h.temporal_rate = (1.0 / persistence - 1.0) / std::pow(h.kappa, 2.0 * a);
    return h;
  }
  if (r == Residual::nonstationary) {
    for (int k = 0; k < 6; ++k) h.gamma[k] = at("field.gamma" + std::to_string(k));
    h.range = std::exp(h.gamma[0]);
    h.sd = std::exp(h.gamma[1]);
  } else {
    h.range = std::exp(at("field.log_range"));
    h.sd = std::exp(at("field.log_sd"));
  }
  if (r == Residual::anisotropic) {
    h.aniso_u = at("field.aniso_u");
    h.aniso_theta = at("field.aniso_theta");
  }
  h.kappa = kappa_from_range(h.range, spatial_nu(h.alpha));
  return h;
}

namespace {

// Spatio-temporal field scaled so the average stationary variance over the
// data range of maturities equals sd^2.
std::shared_ptr<SpatiotemporalField> build_spatiotemporal(const ModelContext& ctx,
                                                          DecodedHyper& h) {
  const Eigen::Index T = ctx.time_points();
  const int a = ctx.spec.spatiotemporal_alpha;
  const auto unit = spatiotemporal_precision(ctx.ops, 1, h.kappa, h.temporal_rate, 1.0, a);
  double var = 0.0;
  int count = 0;
  for (Eigen::Index v = 0; v < ctx.mesh.vertex_count(); ++v) {
    const double x = ctx.mesh.vertices(v, 0);
    if (x < -1e-12 || x > 1.0 + 1e-12) continue;
    var += unit.stationary_cov(v, v);
    ++count;
  }
  var /= count;
  h.noise_sigma = h.sd / std::sqrt(var);
  return std::make_shared<SpatiotemporalField>(
      spatiotemporal_precision(ctx.ops, T, h.kappa, h.temporal_rate, h.noise_sigma, a));
}

FieldRepresentation build_spatial(const ModelContext& ctx, const DecodedHyper& h) {
  const int order = ctx.spec.rational_order;
  const double tau = std::exp(matern_log_tau(h.sd, h.kappa, h.alpha, 2));
  switch (ctx.spec.residual) {
    case Residual::stationary: return stationary_precision(ctx.ops, h.kappa, tau, h.alpha, order);
    case Residual::nonstationary:
      return nonstationary_precision(ctx.mesh, ctx.ops, h.gamma, h.alpha, order);
    case Residual::anisotropic:
      return anisotropic_precision(ctx.mesh, h.kappa, tau, h.alpha, h.aniso_u, h.aniso_theta,
                                   order);
    default: break;
  }
  throw Error("not a spatial residual");
}

}  // namespace

LatentGaussianModel assemble_lgm(const ModelContext& ctx, const Eigen::VectorXd& theta,
                                 double lambda) {
  DecodedHyper h = decode(ctx, theta);
  const Eigen::Index T = ctx.time_points(), M = ctx.maturity_count();
  LatentGaussianModel lgm;
  lgm.time_points = T;
  lgm.maturity_count = M;
  lgm.lambda = lambda;
  lgm.loadings = nsbasis::observation_matrix(lambda, ctx.window.maturities).matrix;
  lgm.noise_precision = h.noise_precision;
  lgm.y = ctx.y;
  lgm.offset = Eigen::VectorXd::Zero(T * M);

  std::vector<SparseMatrix> blocks;
  double logdet = 0.0;
  for (int i = 0; i < 3; ++i) {
    const auto& p = h.factors[i];
    blocks.push_back(ar1_precision(T, p.tau, p.phi));
    logdet += static_cast<double>(T) * std::log(p.tau) + std::log1p(-p.phi * p.phi);
  }
  SparseMatrix field_obs;  // T*M x field_dim
  const Residual r = ctx.spec.residual;
  if (r == Residual::spatiotemporal) {
    lgm.st = build_spatiotemporal(ctx, h);
    lgm.field = *lgm.st;
    const Eigen::Index n = ctx.mesh.vertex_count();
    std::vector<Triplet> trip;
    for (Eigen::Index t = 0; t < T; ++t)
      for (int k = 0; k < ctx.projection.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(ctx.projection, k); it; ++it)
          trip.emplace_back(t * M + it.row(), t * n + it.col(), it.value());
    field_obs.resize(T * M, n * T);
    field_obs.setFromTriplets(trip.begin(), trip.end());
  } else if (r != Residual::none) {
    lgm.field = build_spatial(ctx, h);
    field_obs = ctx.projection * lgm.field.evaluation;
  }
  if (r != Residual::none) {
    lgm.field_dim = lgm.field.latent_size();
    blocks.push_back(lgm.field.precision);
    logdet += lgm.field.log_det;
  }
  const double fixed_prec = 1.0 / (kFixedEffectSd * kFixedEffectSd);
  blocks.push_back(sparse_identity(3, fixed_prec));
  logdet += 3.0 * std::log(fixed_prec);
  std::vector<const SparseMatrix*> ptrs;
  for (const auto& b : blocks) ptrs.push_back(&b);
  lgm.q_prior = block_diagonal(ptrs);
  lgm.prior_logdet = logdet;

  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(T * M * 6) + field_obs.nonZeros());
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index j = 0; j < M; ++j)
      for (int i = 0; i < 3; ++i) {
        trip.emplace_back(t * M + j, lgm.factor_index(i, t), lgm.loadings(j, i));
        trip.emplace_back(t * M + j, lgm.fixed_index(i), lgm.loadings(j, i));
      }
  for (int k = 0; k < field_obs.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(field_obs, k); it; ++it)
      trip.emplace_back(it.row(), lgm.field_offset() + it.col(), it.value());
  lgm.a.resize(T * M, lgm.total_dimension());
  lgm.a.setFromTriplets(trip.begin(), trip.end());
  return lgm;
}

Eigen::VectorXd nonlinear_predictor(const ModelContext& ctx, const LatentGaussianModel& lgm,
                                    const Eigen::VectorXd& x) {
  const Eigen::Index T = lgm.time_points, M = lgm.maturity_count;
  double lambda = lgm.lambda;
  if (lgm.has_lambda) {
    lambda = nsbasis::lambda_from_latent(x(lgm.lambda_index()), ctx.spec.lambda_prior).lambda;
  }
  const auto l = nsbasis::observation_matrix(lambda, ctx.window.maturities).matrix;
  Eigen::VectorXd eta(T * M);
  for (Eigen::Index t = 0; t < T; ++t) {
    Eigen::Vector3d beta;
    for (int i = 0; i < 3; ++i) beta(i) = x(lgm.factor_index(i, t)) + x(lgm.fixed_index(i));
    eta.segment(t * M, M) = l * beta;
  }
  if (lgm.field_dim > 0) {
    eta += lgm.a.middleCols(lgm.field_offset(), lgm.field_dim) *
           x.segment(lgm.field_offset(), lgm.field_dim);
  }
  return eta;
}

LatentGaussianModel linearize_lgm(const ModelContext& ctx, const Eigen::VectorXd& theta,
                                  const Eigen::VectorXd& x0) {
  const auto lat = nsbasis::lambda_from_latent(x0(x0.size() - 1), ctx.spec.lambda_prior);
  LatentGaussianModel lgm = assemble_lgm(ctx, theta, lat.lambda);
  if (x0.size() != lgm.total_dimension() + 1) throw SizeError("linearization point has the wrong size");
  const Eigen::Index T = lgm.time_points, M = lgm.maturity_count;
  const auto dl = nsbasis::observation_matrix_gradient(lat.lambda, ctx.window.maturities);
  const double tilde0 = x0(x0.size() - 1);
  Eigen::VectorXd b(T * M);
  for (Eigen::Index t = 0; t < T; ++t) {
    Eigen::Vector3d beta;
    for (int i = 0; i < 3; ++i) beta(i) = x0(lgm.factor_index(i, t)) + x0(lgm.fixed_index(i));
    b.segment(t * M, M) = lat.dlambda * (dl * beta);
  }
  lgm.offset = -tilde0 * b;
  // append the lambda~ column and its N(0, 1) prior
  const Eigen::Index n = lgm.total_dimension();
  std::vector<Triplet> trip;
  for (int k = 0; k < lgm.a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(lgm.a, k); it; ++it)
      trip.emplace_back(it.row(), it.col(), it.value());
  for (Eigen::Index r = 0; r < T * M; ++r)
    if (b(r) != 0.0) trip.emplace_back(r, n, b(r));
  lgm.a.resize(T * M, n + 1);
  lgm.a.setFromTriplets(trip.begin(), trip.end());
  const SparseMatrix one = sparse_identity(1);
  lgm.q_prior = block_diagonal({&lgm.q_prior, &one});
  lgm.has_lambda = true;
  return lgm;
}

namespace {

GaussianPosterior solve(const LatentGaussianModel& lgm) {
  const Eigen::VectorXd noise =
      Eigen::VectorXd::Constant(lgm.y.size(), lgm.noise_precision);
  return gaussian_posterior(lgm.q_prior, lgm.prior_logdet, lgm.a, noise, lgm.y - lgm.offset);
}

double objective(const ModelContext& ctx, const LatentGaussianModel& lgm) {
  (void)ctx;
  return -solve(lgm).log_marginal_likelihood;
}

// log p(y | x, theta) + log p(x | theta) up to theta-only constants.
double joint_log_density(const ModelContext& ctx, const LatentGaussianModel& lgm,
                         const Eigen::VectorXd& x) {
  const Eigen::VectorXd r = lgm.y - nonlinear_predictor(ctx, lgm, x);
  return -0.5 * lgm.noise_precision * r.squaredNorm() - 0.5 * x.dot(lgm.q_prior * x);
}

void summarize(FitResult& out) {
  out.hyper = decode(*out.context, out.theta);
  if (out.model.has_lambda) {
    const Eigen::Index k = out.model.lambda_index();
    const double tilde = out.posterior.mean(k);
    const auto lat = nsbasis::lambda_from_latent(tilde, out.context->spec.lambda_prior);
    out.lambda = lat.lambda;
    const double var = out.posterior.marginal_variances({k})(0);
    out.lambda_sd = std::abs(lat.dlambda) * std::sqrt(var);
  } else {
    out.lambda = out.model.lambda;
    out.lambda_sd = 0.0;
  }
}

}  // namespace

double neg_log_posterior(const ModelContext& ctx, const Eigen::VectorXd& theta, double lambda) {
  try {
    const double lp = ctx.log_prior(theta);
    if (!std::isfinite(lp)) return kInf;
    const double v = objective(ctx, assemble_lgm(ctx, theta, lambda)) - lp;
    return std::isfinite(v) ? v : kInf;
  } catch (const SizeError&) {
    throw;
  } catch (const Error&) {
    return kInf;
  }
}

FitResult fit_map(std::shared_ptr<const ModelContext> ctx,
                  const std::optional<Eigen::VectorXd>& init) {
  if (!ctx) throw Error("fit_map: no model context");
  if (ctx->spec.trend == Trend::two_step) {
    throw ValidationError("the two-step baseline is not fitted by marginal likelihood");
  }
  const Eigen::VectorXd start = init ? *init : ctx->initial_theta();
  const double lambda = ctx->spec.lambda;
  const auto res = nelder_mead(
      [&](const Eigen::VectorXd& th) { return neg_log_posterior(*ctx, th, lambda); }, start,
      ctx->spec.optimizer);
  FitResult out;
  out.context = ctx;
  out.theta = res.x;
  out.evaluations = res.evaluations;
  out.iterations = res.iterations;
  out.final_step = res.diameter;
  out.converged = res.converged;
  out.trace = res.trace;
  out.model = assemble_lgm(*ctx, res.x, lambda);
  out.posterior = solve(out.model);
  out.log_marginal_likelihood = out.posterior.log_marginal_likelihood;
  out.log_posterior = ctx->log_prior(res.x) + out.log_marginal_likelihood;
  summarize(out);
  return out;
}

FitResult fit_joint_lambda(std::shared_ptr<const ModelContext> ctx,
                           const std::optional<Eigen::VectorXd>& init) {
  if (!ctx) throw Error("fit_joint_lambda: no model context");
  const ModelContext& c = *ctx;
  if (!c.spec.joint_lambda) throw ValidationError("spec does not request joint lambda");
  Eigen::VectorXd theta = init ? *init : c.initial_theta();

  // expansion point: the linear model at the prior median (lambda~ = 0)
  Eigen::VectorXd x0;
  {
    const auto lgm = assemble_lgm(c, theta, nsbasis::lambda_from_latent(0.0, c.spec.lambda_prior).lambda);
    x0.resize(lgm.total_dimension() + 1);
    x0.head(lgm.total_dimension()) = solve(lgm).mean;
    x0(lgm.total_dimension()) = 0.0;
  }

  FitResult out;
  out.context = ctx;
  LatentGaussianModel lgm = linearize_lgm(c, theta, x0);
  Eigen::VectorXd eta_old = nonlinear_predictor(c, lgm, x0);
  out.lambda_trace.push_back(nsbasis::lambda_from_latent(0.0, c.spec.lambda_prior).lambda);
  bool theta_frozen = false;
  bool done = false;
  NelderMeadOptions inner = c.spec.optimizer;
  for (int outer = 1; outer <= kMaxOuterIterations; ++outer) {
    out.outer_iterations = outer;
    if (!theta_frozen) {
      const auto res = nelder_mead(
          [&](const Eigen::VectorXd& th) {
            try {
              const double lp = c.log_prior(th);
              const double v = objective(c, linearize_lgm(c, th, x0)) - lp;
              return std::isfinite(v) ? v : kInf;
            } catch (const SizeError&) {
              throw;
            } catch (const Error&) {
              return kInf;
            }
          },
          theta, inner);
      theta = res.x;
      out.evaluations += res.evaluations;
      out.iterations += res.iterations;
      out.final_step = res.diameter;
      out.converged = res.converged;
      out.trace.insert(out.trace.end(), res.trace.begin(), res.trace.end());
      inner.initial_step = 0.1;
      inner.restarts = 0;
    }
    lgm = linearize_lgm(c, theta, x0);
    const Eigen::VectorXd target = solve(lgm).mean;
    // step halving on the joint log density of the nonlinear model
    const double base = joint_log_density(c, lgm, x0);
    double step = 1.0;
    Eigen::VectorXd x = target;
    for (int k = 0; k < 10 && joint_log_density(c, lgm, x) < base; ++k) {
      step *= 0.5;
      x = x0 + step * (target - x0);
    }
    const Eigen::VectorXd eta_new = nonlinear_predictor(c, lgm, x);
    const double change = (eta_new - eta_old).lpNorm<Eigen::Infinity>();
    const double scale = 1.0 + eta_old.lpNorm<Eigen::Infinity>();
    out.lambda_trace.push_back(nsbasis::lambda_from_latent(x(x.size() - 1), c.spec.lambda_prior).lambda);
    x0 = x;
    eta_old = eta_new;
    if (change < 1e-4 * scale) theta_frozen = true;
    if (theta_frozen && change < 1e-6 * scale) {
      done = true;
      break;
    }
  }
  if (!done) {
    std::string traj;
    for (double v : out.lambda_trace) traj += " " + std::to_string(v);
    throw ConvergenceError("joint lambda linearization did not converge; lambda trajectory:" + traj);
  }
  out.theta = theta;
  out.model = linearize_lgm(c, theta, x0);
  out.posterior = solve(out.model);
  out.log_marginal_likelihood = out.posterior.log_marginal_likelihood;
  out.log_posterior = c.log_prior(theta) + out.log_marginal_likelihood;
  summarize(out);
  return out;
}

FitResult fit(std::shared_ptr<const ModelContext> ctx, const std::optional<Eigen::VectorXd>& init) {
  if (!ctx) throw Error("fit: no model context");
  return ctx->spec.joint_lambda ? fit_joint_lambda(ctx, init) : fit_map(ctx, init);
}

Eigen::Vector3d FitResult::mu() const {
  Eigen::Vector3d out;
  for (int i = 0; i < 3; ++i) out(i) = posterior.mean(model.fixed_index(i));
  return out;
}

Eigen::MatrixXd FitResult::factor_means() const {
  const Eigen::Index T = model.time_points;
  Eigen::MatrixXd out(T, 3);
  const Eigen::Vector3d m = mu();
  for (int i = 0; i < 3; ++i)
    for (Eigen::Index t = 0; t < T; ++t) out(t, i) = posterior.mean(model.factor_index(i, t)) + m(i);
  return out;
}

Eigen::MatrixXd FitResult::field_means() const {
  const Eigen::Index T = model.time_points, M = model.maturity_count;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(T, M);
  if (model.field_dim == 0) return out;
  const Eigen::VectorXd u = model.a.middleCols(model.field_offset(), model.field_dim) *
                            posterior.mean.segment(model.field_offset(), model.field_dim);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index j = 0; j < M; ++j) out(t, j) = u(t * M + j);
  return out;
}

Eigen::MatrixXd FitResult::trend_means() const {
  const auto l = nsbasis::observation_matrix(lambda, context->window.maturities).matrix;
  return factor_means() * l.transpose();
}

std::string to_json(const FitResult& fit) {
  using nlohmann::json;
  const auto& ctx = *fit.context;
  json j;
  j["model"] = ctx.spec.tag();
  j["trend"] = to_string(ctx.spec.trend);
  j["residual"] = to_string(ctx.spec.residual);
  j["window"] = {{"first", format_month(ctx.window.dates.front())},
                 {"last", format_month(ctx.window.dates.back())},
                 {"months", ctx.time_points()},
                 {"maturities", ctx.window.maturities}};
  json theta = json::object();
  for (std::size_t i = 0; i < ctx.hyper.size(); ++i)
    theta[ctx.hyper[i].name] = fit.theta(static_cast<Eigen::Index>(i));
  j["theta"] = theta;
  const auto& h = fit.hyper;
  json natural;
  natural["sigma_e"] = 1.0 / std::sqrt(h.noise_precision);
  const Eigen::Vector3d mu = fit.mu();
  for (int i = 0; i < 3; ++i) {
    natural[kFactorNames[i]] = {{"mu", mu(i)}, {"tau", h.factors[i].tau}, {"phi", h.factors[i].phi}};
  }
  if (ctx.spec.residual != Residual::none) {
    json f{{"range", h.range}, {"sd", h.sd}, {"alpha", h.alpha}, {"kappa", h.kappa}};
    if (ctx.spec.residual == Residual::nonstationary) f["gamma"] = h.gamma;
    if (ctx.spec.residual == Residual::anisotropic) {
      f["aniso_u"] = h.aniso_u;
      f["aniso_theta"] = h.aniso_theta;
    }
    if (ctx.spec.residual == Residual::spatiotemporal) {
      f["gamma_t"] = h.temporal_rate;
      f["sigma_noise"] = h.noise_sigma;
      f["xi"] = {std::log(h.kappa), std::log(h.noise_sigma), std::log(h.temporal_rate)};
    }
    natural["field"] = f;
  }
  j["natural"] = natural;
  j["lambda"] = {{"mode", ctx.spec.joint_lambda ? "joint" : "fixed"},
                 {"value", fit.lambda},
                 {"sd", fit.lambda_sd},
                 {"trajectory", fit.lambda_trace}};
  j["log_posterior"] = fit.log_posterior;
  j["log_marginal_likelihood"] = fit.log_marginal_likelihood;
  j["convergence"] = {{"evaluations", fit.evaluations},
                      {"iterations", fit.iterations},
                      {"outer_iterations", fit.outer_iterations},
                      {"final_step", fit.final_step},
                      {"converged", fit.converged},
                      {"trace", fit.trace}};
  j["latent_dimension"] = fit.model.latent_dimension();
  return j.dump(2);
}

namespace {

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("truncated latent sidecar", 0);
  return v;
}

}  // namespace

void write_latent_sidecar(std::ostream& out, const FitResult& fit) {
  const auto& f = *fit.posterior.factor;
  out.write("YFLP", 4);
  const std::int64_t n = fit.posterior.size();
  put(out, n);
  for (std::int64_t i = 0; i < n; ++i) put(out, fit.posterior.mean(i));
  const Eigen::VectorXi perm = f.permutation();
  for (std::int64_t i = 0; i < n; ++i) put(out, static_cast<std::int64_t>(perm(i)));
  for (std::int64_t i = 0; i < n; ++i) put(out, f.pivots()(i));
  const SparseMatrix l = f.factor_l();
  put(out, static_cast<std::int64_t>(l.nonZeros()));
  for (int k = 0; k < l.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(l, k); it; ++it) {
      put(out, static_cast<std::int64_t>(it.row()));
      put(out, static_cast<std::int64_t>(it.col()));
      put(out, it.value());
    }
}

LatentSidecar read_latent_sidecar(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "YFLP", 4) != 0) throw ParseError("not a latent sidecar", 0);
  const auto n = get<std::int64_t>(in);
  if (n < 0 || n > 100'000'000) throw ParseError("implausible sidecar dimension", 0);
  LatentSidecar s;
  s.mean.resize(n);
  for (std::int64_t i = 0; i < n; ++i) s.mean(i) = get<double>(in);
  s.permutation.resize(n);
  for (std::int64_t i = 0; i < n; ++i) s.permutation(i) = static_cast<int>(get<std::int64_t>(in));
  s.pivots.resize(n);
  for (std::int64_t i = 0; i < n; ++i) s.pivots(i) = get<double>(in);
  const auto nnz = get<std::int64_t>(in);
  std::vector<Triplet> trip;
  for (std::int64_t k = 0; k < nnz; ++k) {
    const auto r = get<std::int64_t>(in);
    const auto c = get<std::int64_t>(in);
    const auto v = get<double>(in);
    trip.emplace_back(r, c, v);
  }
  s.lower.resize(n, n);
  s.lower.setFromTriplets(trip.begin(), trip.end());
  return s;
}

SparseMatrix LatentSidecar::precision() const {
  const SparseMatrix ldl = lower * pivots.asDiagonal() * SparseMatrix(lower.transpose());
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> p(permutation);
  // the factor is of P Q P^T
  return SparseMatrix(p.transpose() * ldl * p);
}

}  // namespace yieldfield
