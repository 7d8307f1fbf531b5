// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "fcmg/common.hpp"
#include "fcmg/geometry.hpp"
#include "fcmg/mesh.hpp"

namespace fcmg {

/// Equal-order Q1-Q1 degrees of freedom on the regular nodes of a mesh.
/// Velocity DoFs come first, interleaved per node (u_x, u_y), followed by one
/// pressure DoF per regular node. Hanging nodes carry no DoFs; their values
/// are combinations of regular nodes given by `expansion`.
class DofMap {
public:
  explicit DofMap(const QuadtreeMesh& mesh);

  Index n_u() const { return 2 * n_regular_; }
  Index n_p() const { return n_regular_; }
  Index n_x() const { return 3 * n_regular_; }
  Index num_regular_nodes() const { return n_regular_; }

  /// Regular index of mesh node n, or -1 if hanging.
  int regular_index(std::size_t n) const { return regular_[n]; }
  Index velocity_dof(Index reg, int comp) const { return 2 * reg + comp; }
  Index pressure_dof(Index reg) const { return 2 * n_regular_ + reg; }

  /// Mesh node n as a weighted combination of regular-node indices.
  std::span<const std::pair<int, double>> expansion(std::size_t n) const {
    return {expansion_.data() + offsets_[n], expansion_.data() + offsets_[n + 1]};
  }

  /// Extract the mesh-node values of (u_x, u_y, p) from a coefficient vector.
  std::array<double, 3> nodal_values(const Vector& x, std::size_t node) const;

private:
  Index n_regular_ = 0;
  std::vector<int> regular_;
  std::vector<std::size_t> offsets_;
  std::vector<std::pair<int, double>> expansion_;
};

struct PhysicsParams {
  double eta = 1e-3;
  /// Nitsche parameter lambda = max(nitsche_factor * eta / h_cell, 4 eta mu_cell)
  /// where mu_cell bounds ||n.grad v||^2 on the cell's Dirichlet boundary by
  /// ||alpha^(1/2) grad v||^2 on the cell.
  double nitsche_factor = 20.0;
  double alpha_out = 1e-6;
  double beta = 10.0;
  /// Weight the pressure stabilization with alpha like the other volume terms.
  bool alpha_weighted_stabilization = true;
  /// Multiplier on the convection term (0 = Stokes).
  double convection = 1.0;
  /// Integrate convection with alpha_out outside the physical domain instead
  /// of dropping it there.
  bool fictitious_convection = false;
  std::function<Vec2(Vec2)> body_force;
  int integration_depth = kDefaultIntegrationDepth;
  int volume_order = kDefaultVolumeOrder;
  int segment_order = kDefaultSegmentOrder;

  void validate() const;
};

/// Per-cell quadrature for one mesh: volume points with alpha weights and all
/// boundary points (immersed and fitted) with normals and tags.
struct LevelGeometry {
  std::vector<CellClass> classes;
  std::vector<double> inside_fraction;
  std::vector<std::vector<VolumePoint>> volume;
  std::vector<std::vector<InterfacePoint>> boundary;
  std::vector<double> nitsche;
  int degenerate_subcells = 0;

  static LevelGeometry compute(const QuadtreeMesh& mesh, const ImplicitDomain& domain,
                               const PhysicsParams& params);
  std::size_t num_cut_cells() const;
};

/// Assembled block system [[A, B], [B^T, C]] (u, p) = (f, g) on the reduced
/// (constraint-free) DoF space.
struct SaddleSystem {
  SparseMatrix matrix;
  Vector rhs;
  Index n_u = 0;
  Index n_p = 0;

  Index n_x() const { return n_u + n_p; }
  SparseMatrix block(int row_block, int col_block) const;
};

/// Discrete problem on one mesh. Holds non-owning references to mesh and
/// domain, which must outlive it.
class Discretization {
public:
  Discretization(const QuadtreeMesh& mesh, const ImplicitDomain& domain, PhysicsParams params);

  const QuadtreeMesh& mesh() const { return *mesh_; }
  const ImplicitDomain& domain() const { return *domain_; }
  const DofMap& dofs() const { return dofs_; }
  const PhysicsParams& params() const { return params_; }
  const LevelGeometry& geometry() const { return geometry_; }

  /// Stokes system: viscous and Nitsche terms, divergence coupling, pressure
  /// stabilization and all load terms.
  const SaddleSystem& stokes() const;

  /// Convection matrix at `state`: the advective block (v, u^k . grad du)
  /// or, with `reactive`, the block (v, du . grad u^k).
  SparseMatrix convection_matrix(const Vector& state, bool reactive) const;
  /// Vector of (v, u . grad u) over all velocity test functions.
  Vector convection_vector(const Vector& state) const;

  SaddleSystem newton(const Vector& state) const;
  SaddleSystem picard(const Vector& state) const;
  /// Nonlinear residual R(x) = b - L_stokes x - N(x); zero at a solution.
  Vector residual(const Vector& state) const;

  /// Field value (u_x, u_y, p) at a point of the embedding box.
  std::array<double, 3> evaluate(const Vector& state, Vec2 p) const;
  /// Coefficient vector of the nodal interpolant of a field.
  Vector interpolate(const std::function<std::array<double, 3>(Vec2)>& field) const;

private:
  double convection_weight(const VolumePoint& q) const;

  const QuadtreeMesh* mesh_;
  const ImplicitDomain* domain_;
  PhysicsParams params_;
  DofMap dofs_;
  LevelGeometry geometry_;
  mutable std::optional<SaddleSystem> stokes_;
};

SaddleSystem assemble_stokes(const Discretization& disc);
SaddleSystem assemble_newton(const Discretization& disc, const Vector& state);
SaddleSystem assemble_picard(const Discretization& disc, const Vector& state);

/// ||b - L x||_2, divided by ||b||_2 when `relative` and ||b|| > 0.
double residual_norm(const SaddleSystem& system, const Vector& x, bool relative = false);

void write_matrix_market(std::ostream& os, const SparseMatrix& m);
void write_vector(std::ostream& os, const Vector& v);

} // namespace fcmg
