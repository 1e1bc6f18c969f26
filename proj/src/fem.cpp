#include "yieldfield/fem.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "yieldfield/error.hpp"

namespace yieldfield {

namespace {

constexpr double kDegenerate = 1e-12;
constexpr double kInsideTol = 1e-10;

int cell_count(double length, double resolution) {
  const double n = std::ceil(length / resolution - 1e-9);
  return std::max(1, static_cast<int>(n));
}

void check_range(const std::array<double, 2>& r, const char* what) {
  if (!(r[1] > r[0]) || !std::isfinite(r[0]) || !std::isfinite(r[1])) {
    throw DomainError(std::string("mesh: empty ") + what + " range");
  }
}

// Gradients of the three barycentric functions on triangle (p0, p1, p2), as
// columns of a 2x3 matrix, and the signed area.
double triangle_gradients(const Eigen::Vector2d& p0, const Eigen::Vector2d& p1,
                          const Eigen::Vector2d& p2, Eigen::Matrix<double, 2, 3>& grad) {
  const Eigen::Vector2d e1 = p1 - p0, e2 = p2 - p0;
  const double det = e1.x() * e2.y() - e1.y() * e2.x();
  // grad phi_i is the inward normal of the opposite edge over 2 * area
  grad.col(0) << p1.y() - p2.y(), p2.x() - p1.x();
  grad.col(1) << p2.y() - p0.y(), p0.x() - p2.x();
  grad.col(2) << p0.y() - p1.y(), p1.x() - p0.x();
  grad /= det;
  return 0.5 * det;
}

}  // namespace

AxisScaling AxisScaling::from_data(double t_first, double t_last, double m_min, double m_max) {
  if (!(t_last > t_first) || !(m_max > m_min) || !(m_min > 0.0)) {
    throw DomainError("axis scaling: need increasing time and positive increasing maturity");
  }
  AxisScaling s;
  s.t0 = t_first;
  s.t_range = t_last - t_first;
  s.lm0 = std::log(m_min);
  s.lm_range = std::log(m_max) - std::log(m_min);
  return s;
}

double AxisScaling::maturity(double m) const {
  if (!(m > 0.0)) throw DomainError("axis scaling: maturity must be positive");
  return (std::log(m) - lm0) / lm_range;
}

double Mesh::element_measure(Eigen::Index e) const {
  if (dim == 1) {
    return std::abs(vertices(elements(e, 1), 0) - vertices(elements(e, 0), 0));
  }
  const Eigen::Vector2d p0 = vertices.row(elements(e, 0)).transpose();
  const Eigen::Vector2d p1 = vertices.row(elements(e, 1)).transpose();
  const Eigen::Vector2d p2 = vertices.row(elements(e, 2)).transpose();
  const Eigen::Vector2d a = p1 - p0, b = p2 - p0;
  return 0.5 * (a.x() * b.y() - a.y() * b.x());
}

Eigen::VectorXd Mesh::element_centroid(Eigen::Index e) const {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
  for (int k = 0; k <= dim; ++k) c += vertices.row(elements(e, k)).transpose();
  return c / (dim + 1);
}

double Mesh::domain_measure() const {
  double total = 0.0;
  for (Eigen::Index e = 0; e < element_count(); ++e) total += element_measure(e);
  return total;
}

void Mesh::write_csv(std::ostream& vout, std::ostream& eout) const {
  vout << std::setprecision(17);
  vout << (dim == 2 ? "index,t,m,boundary\n" : "index,m,boundary\n");
  for (Eigen::Index i = 0; i < vertex_count(); ++i) {
    vout << i;
    for (int d = 0; d < dim; ++d) vout << ',' << vertices(i, d);
    vout << ',' << (boundary[i] ? 1 : 0) << '\n';
  }
  eout << (dim == 2 ? "index,v0,v1,v2\n" : "index,v0,v1\n");
  for (Eigen::Index e = 0; e < element_count(); ++e) {
    eout << e;
    for (int k = 0; k <= dim; ++k) eout << ',' << elements(e, k);
    eout << '\n';
  }
}

Mesh build_mesh_2d(std::array<double, 2> x_range, std::array<double, 2> y_range, double resolution,
                   double extension) {
  check_range(x_range, "x");
  check_range(y_range, "y");
  if (!(resolution > 0.0)) throw DomainError("mesh: resolution must be positive");
  if (!(extension >= 0.0)) throw DomainError("mesh: extension must be nonnegative");
  const double ex = extension * (x_range[1] - x_range[0]);
  const double ey = extension * (y_range[1] - y_range[0]);
  Mesh mesh;
  mesh.dim = 2;
  mesh.lower = {x_range[0] - ex, y_range[0] - ey};
  mesh.upper = {x_range[1] + ex, y_range[1] + ey};
  const Eigen::Vector2d size = mesh.upper - mesh.lower;
  const double nx = std::ceil(size.x() / resolution - 1e-9);
  const double ny = std::ceil(size.y() / resolution - 1e-9);
  if ((nx + 1) * (ny + 1) > static_cast<double>(kMaxMeshVertices)) {
    throw SizeError("mesh: resolution yields more than 1e6 vertices");
  }
  mesh.nx = cell_count(size.x(), resolution);
  mesh.ny = cell_count(size.y(), resolution);
  const double hx = size.x() / mesh.nx, hy = size.y() / mesh.ny;
  const int nvx = mesh.nx + 1, nvy = mesh.ny + 1;

  mesh.vertices.resize(nvx * nvy, 2);
  mesh.boundary.assign(nvx * nvy, false);
  for (int j = 0; j < nvy; ++j) {
    for (int i = 0; i < nvx; ++i) {
      const int v = j * nvx + i;
      mesh.vertices(v, 0) = i == mesh.nx ? mesh.upper.x() : mesh.lower.x() + i * hx;
      mesh.vertices(v, 1) = j == mesh.ny ? mesh.upper.y() : mesh.lower.y() + j * hy;
      mesh.boundary[v] = i == 0 || j == 0 || i == mesh.nx || j == mesh.ny;
    }
  }
  mesh.elements.resize(2 * mesh.nx * mesh.ny, 3);
  for (int j = 0; j < mesh.ny; ++j) {
    for (int i = 0; i < mesh.nx; ++i) {
      const int v00 = j * nvx + i, v10 = v00 + 1, v01 = v00 + nvx, v11 = v01 + 1;
      const int e = 2 * (j * mesh.nx + i);
      mesh.elements.row(e) << v00, v10, v11;
      mesh.elements.row(e + 1) << v00, v11, v01;
    }
  }
  for (Eigen::Index e = 0; e < mesh.element_count(); ++e) {
    if (!(mesh.element_measure(e) > kDegenerate)) throw DomainError("mesh: degenerate element");
  }
  return mesh;
}

Mesh build_mesh_1d(std::array<double, 2> range, double resolution, double extension) {
  check_range(range, "maturity");
  if (!(resolution > 0.0)) throw DomainError("mesh: resolution must be positive");
  if (!(extension >= 0.0)) throw DomainError("mesh: extension must be nonnegative");
  const double ext = extension * (range[1] - range[0]);
  Mesh mesh;
  mesh.dim = 1;
  mesh.lower = {range[0] - ext, 0.0};
  mesh.upper = {range[1] + ext, 0.0};
  const double length = mesh.upper.x() - mesh.lower.x();
  if (std::ceil(length / resolution) + 1 > static_cast<double>(kMaxMeshVertices)) {
    throw SizeError("mesh: resolution yields more than 1e6 vertices");
  }
  mesh.nx = cell_count(length, resolution);
  mesh.ny = 0;
  const double h = length / mesh.nx;
  mesh.vertices.resize(mesh.nx + 1, 1);
  mesh.boundary.assign(mesh.nx + 1, false);
  for (int i = 0; i <= mesh.nx; ++i) {
    mesh.vertices(i, 0) = i == mesh.nx ? mesh.upper.x() : mesh.lower.x() + i * h;
  }
  mesh.boundary.front() = mesh.boundary.back() = true;
  mesh.elements.resize(mesh.nx, 2);
  for (int i = 0; i < mesh.nx; ++i) mesh.elements.row(i) << i, i + 1;
  if (!(h > kDegenerate)) throw DomainError("mesh: degenerate element");
  return mesh;
}

AssembledOperators assemble(const Mesh& mesh) {
  return assemble(mesh, Eigen::MatrixXd::Identity(mesh.dim, mesh.dim));
}

AssembledOperators assemble(const Mesh& mesh, const Eigen::MatrixXd& h) {
  if (h.rows() != mesh.dim || h.cols() != mesh.dim) throw SizeError("assemble: H has wrong size");
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-14 * h.cwiseAbs().maxCoeff()) {
    throw DomainError("assemble: H must be symmetric");
  }
  if (Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues().minCoeff() <= 0.0) {
    throw DomainError("assemble: H must be positive definite");
  }
  const Eigen::Index n = mesh.vertex_count();
  std::vector<Triplet> ct, gt;
  const int k = mesh.dim + 1;
  ct.reserve(mesh.element_count() * k * k);
  gt.reserve(mesh.element_count() * k * k);
  for (Eigen::Index e = 0; e < mesh.element_count(); ++e) {
    if (mesh.dim == 1) {
      const int a = mesh.elements(e, 0), b = mesh.elements(e, 1);
      const double len = mesh.element_measure(e);
      const double m_diag = len / 3.0, m_off = len / 6.0;
      const double s = h(0, 0) / len;
      ct.emplace_back(a, a, m_diag);
      ct.emplace_back(b, b, m_diag);
      ct.emplace_back(a, b, m_off);
      ct.emplace_back(b, a, m_off);
      gt.emplace_back(a, a, s);
      gt.emplace_back(b, b, s);
      gt.emplace_back(a, b, -s);
      gt.emplace_back(b, a, -s);
      continue;
    }
    const Eigen::Vector2d p0 = mesh.vertices.row(mesh.elements(e, 0)).transpose();
    const Eigen::Vector2d p1 = mesh.vertices.row(mesh.elements(e, 1)).transpose();
    const Eigen::Vector2d p2 = mesh.vertices.row(mesh.elements(e, 2)).transpose();
    Eigen::Matrix<double, 2, 3> grad;
    const double area = triangle_gradients(p0, p1, p2, grad);
    const Eigen::Matrix3d ge = area * grad.transpose() * h * grad;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const int vi = mesh.elements(e, i), vj = mesh.elements(e, j);
        ct.emplace_back(vi, vj, area / 12.0 * (i == j ? 2.0 : 1.0));
        gt.emplace_back(vi, vj, ge(i, j));
      }
    }
  }
  AssembledOperators ops;
  ops.c.resize(n, n);
  ops.c.setFromTriplets(ct.begin(), ct.end());
  ops.g.resize(n, n);
  ops.g.setFromTriplets(gt.begin(), gt.end());
  ops.c_lumped = ops.c * Eigen::VectorXd::Ones(n);
  return ops;
}

Eigen::VectorXd weighted_lumped_mass(const Mesh& mesh, const Eigen::VectorXd& element_weight) {
  if (element_weight.size() != mesh.element_count()) {
    throw SizeError("weighted_lumped_mass: one weight per element required");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mesh.vertex_count());
  const int k = mesh.dim + 1;
  for (Eigen::Index e = 0; e < mesh.element_count(); ++e) {
    const double share = element_weight(e) * mesh.element_measure(e) / k;
    for (int i = 0; i < k; ++i) out(mesh.elements(e, i)) += share;
  }
  return out;
}

SparseMatrix projection_matrix(const Mesh& mesh, const Eigen::MatrixXd& points) {
  if (points.cols() != mesh.dim) throw SizeError("projection_matrix: wrong point dimension");
  std::vector<Triplet> t;
  t.reserve(points.rows() * (mesh.dim + 1));
  const double hx = (mesh.upper.x() - mesh.lower.x()) / mesh.nx;
  for (Eigen::Index p = 0; p < points.rows(); ++p) {
    const double x = points(p, 0);
    const double tol_x = kInsideTol * std::max(1.0, std::abs(hx));
    if (!(x >= mesh.lower.x() - tol_x && x <= mesh.upper.x() + tol_x)) {
      throw LocationError("point outside the mesh", static_cast<std::size_t>(p));
    }
    const int i = std::clamp(static_cast<int>(std::floor((x - mesh.lower.x()) / hx)), 0, mesh.nx - 1);
    if (mesh.dim == 1) {
      const int a = mesh.elements(i, 0), b = mesh.elements(i, 1);
      const double xa = mesh.vertices(a, 0), xb = mesh.vertices(b, 0);
      const double s = std::clamp((x - xa) / (xb - xa), 0.0, 1.0);
      if (1.0 - s != 0.0) t.emplace_back(p, a, 1.0 - s);
      if (s != 0.0) t.emplace_back(p, b, s);
      continue;
    }
    const double y = points(p, 1);
    const double hy = (mesh.upper.y() - mesh.lower.y()) / mesh.ny;
    const double tol_y = kInsideTol * std::max(1.0, std::abs(hy));
    if (!(y >= mesh.lower.y() - tol_y && y <= mesh.upper.y() + tol_y)) {
      throw LocationError("point outside the mesh", static_cast<std::size_t>(p));
    }
    const int j = std::clamp(static_cast<int>(std::floor((y - mesh.lower.y()) / hy)), 0, mesh.ny - 1);
    const int v00 = j * (mesh.nx + 1) + i;
    const double sx = (x - mesh.vertices(v00, 0)) / hx;
    const double sy = (y - mesh.vertices(v00, 1)) / hy;
    const Eigen::Index e = 2 * (j * mesh.nx + i) + (sx >= sy ? 0 : 1);
    const Eigen::Vector2d p0 = mesh.vertices.row(mesh.elements(e, 0)).transpose();
    const Eigen::Vector2d p1 = mesh.vertices.row(mesh.elements(e, 1)).transpose();
    const Eigen::Vector2d p2 = mesh.vertices.row(mesh.elements(e, 2)).transpose();
    Eigen::Matrix2d basis;
    basis << p1 - p0, p2 - p0;
    const Eigen::Vector2d rs = basis.partialPivLu().solve(Eigen::Vector2d(x, y) - p0);
    Eigen::Vector3d w(1.0 - rs.x() - rs.y(), rs.x(), rs.y());
    w = w.cwiseMax(0.0);
    w /= w.sum();
    for (int k = 0; k < 3; ++k) {
      if (w(k) != 0.0) t.emplace_back(p, mesh.elements(e, k), w(k));
    }
  }
  SparseMatrix out(points.rows(), mesh.vertex_count());
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

}  // namespace yieldfield
