#pragma once

#include <array>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "yieldfield/gmrf.hpp"

namespace yieldfield {

// Affine map from (month index, maturity in months) to the unit-scaled
// (time, log-maturity) coordinates the meshes live in.
struct AxisScaling {
  double t0 = 0.0;
  double t_range = 1.0;
  double lm0 = 0.0;
  double lm_range = 1.0;

  static AxisScaling from_data(double t_first, double t_last, double m_min, double m_max);

  double time(double t) const { return (t - t0) / t_range; }
  double maturity(double m) const;
  Eigen::Vector2d operator()(double t, double m) const { return {time(t), maturity(m)}; }
};

// Structured simplicial mesh: right triangles on a rectangle (dim 2) or a
// uniform partition of an interval (dim 1).
struct Mesh {
  int dim = 2;
  Eigen::MatrixXd vertices;  // n x dim
  Eigen::MatrixXi elements;  // k x (dim + 1)
  std::vector<bool> boundary;

  // Grid bookkeeping used for point location.
  Eigen::Vector2d lower = Eigen::Vector2d::Zero();
  Eigen::Vector2d upper = Eigen::Vector2d::Zero();
  int nx = 0;
  int ny = 0;

  Eigen::Index vertex_count() const { return vertices.rows(); }
  Eigen::Index element_count() const { return elements.rows(); }
  double element_measure(Eigen::Index e) const;
  Eigen::VectorXd element_centroid(Eigen::Index e) const;
  double domain_measure() const;
  double diameter() const { return (upper - lower).head(dim).norm(); }

  void write_csv(std::ostream& vertices_out, std::ostream& elements_out) const;
};

inline constexpr Eigen::Index kMaxMeshVertices = 1'000'000;

// The rectangle grows by extension * (side length) on each side; the grid
// spacing is the largest value not exceeding the resolution.
Mesh build_mesh_2d(std::array<double, 2> x_range, std::array<double, 2> y_range, double resolution,
                   double extension);
Mesh build_mesh_1d(std::array<double, 2> range, double resolution, double extension);

struct AssembledOperators {
  SparseMatrix c;               // consistent mass
  Eigen::VectorXd c_lumped;     // row sums of c
  SparseMatrix g;               // stiffness, grad' H grad
};

// H must be symmetric positive definite (1x1 for 1-D meshes).
AssembledOperators assemble(const Mesh& mesh, const Eigen::MatrixXd& h);
AssembledOperators assemble(const Mesh& mesh);

// Lumped mass with a per-element weight: sum_e w_e |e| / (dim + 1) on each vertex.
Eigen::VectorXd weighted_lumped_mass(const Mesh& mesh, const Eigen::VectorXd& element_weight);

// Barycentric evaluation rows for points (rows of `points`, dim columns).
SparseMatrix projection_matrix(const Mesh& mesh, const Eigen::MatrixXd& points);

}  // namespace yieldfield
