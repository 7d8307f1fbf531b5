// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <vector>

#include <Eigen/SparseLU>

#include "fcmg/discretization.hpp"
#include "fcmg/mesh.hpp"

namespace fcmg {

/// Prolongation (fine x coarse) and restriction (coarse x fine, R = P^T)
/// between the reduced DoF spaces of two nested levels.
struct Transfer {
  SparseMatrix prolongation;
  SparseMatrix restriction;
};

/// Throws HierarchyError if the fine mesh is not nested in the coarse one.
Transfer build_transfer(const Discretization& coarse, const Discretization& fine);

enum class SmootherKind { Cell, Cutcell };
enum class Weighting { UniformDamping, Harmonic };

struct SmootherConfig {
  SmootherKind kind = SmootherKind::Cell;
  Weighting weighting = Weighting::UniformDamping;
  double omega = 2.0 / 3.0;
  int pre_steps = 3;
  int post_steps = 3;
  /// Alternate forward and backward sweeps.
  bool symmetric = false;

  void validate() const;
};

/// DoF sets of the cell-based Vanka subdomains: one per leaf, holding the
/// pressure DoFs of the cell (hanging corners through their masters) and every
/// velocity DoF coupled to them in B^T. Sorted ascending.
std::vector<std::vector<Index>> cell_subdomains(const Discretization& disc,
                                                const SaddleSystem& system);

/// Cell-based subdomains of the cut cells followed by one node-based subdomain
/// {p_i} + coupled velocity DoFs for every pressure DoF not covered by them.
std::vector<std::vector<Index>> cutcell_subdomains(const Discretization& disc,
                                                   const SaddleSystem& system);

struct Subdomain {
  std::vector<Index> dofs;
  Eigen::PartialPivLU<DenseMatrix> lu;
  /// Diagonal of the weighting matrix omega_i.
  Vector weights;
};

/// Multiplicative Schwarz smoother over a fixed ordered list of subdomains.
class SchwarzSmoother {
public:
  SchwarzSmoother() = default;
  /// Extracts and factorizes the principal submatrices. Throws
  /// FactorizationError naming the subdomain if one is singular.
  SchwarzSmoother(const SparseMatrix& matrix, std::vector<std::vector<Index>> sets,
                  const SmootherConfig& config);

  /// `steps` sweeps of x <- x + R_i^T w_i L_i^{-1} R_i (b - L x) in build order.
  void smooth(const SparseMatrix& matrix, Vector& x, const Vector& b, int steps) const;

  std::size_t size() const { return subdomains_.size(); }
  const Subdomain& subdomain(std::size_t i) const { return subdomains_[i]; }
  /// Number of subdomains containing each global DoF.
  const std::vector<int>& multiplicity() const { return multiplicity_; }
  double mean_dimension() const;

private:
  void sweep(const SparseMatrix& matrix, Vector& x, const Vector& b, bool backward) const;

  std::vector<Subdomain> subdomains_;
  std::vector<int> multiplicity_;
  bool symmetric_ = false;
};

struct PhaseTimes {
  double smoothing_ms = 0;
  double transfer_ms = 0;
  double base_ms = 0;
  double residual_ms = 0;
  double setup_ms = 0;
};

struct SolveReport {
  std::vector<double> abs_residual;  // index 0 = initial residual
  std::vector<double> rel_residual;
  std::vector<double> elapsed_ms;    // cumulative, index 0 = 0
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
  double total_ms = 0;
  PhaseTimes phases;

  /// Geometric mean of successive residual ratios.
  double average_reduction() const;
  double ms_per_iteration() const { return iterations > 0 ? total_ms / iterations : 0.0; }
  void write_csv(std::ostream& os) const;
};

/// One level of the hierarchy: discretization, its current system, the
/// transfer to the next coarser level and the smoother.
struct Level {
  std::unique_ptr<QuadtreeMesh> mesh;
  std::unique_ptr<Discretization> disc;
  SaddleSystem system;
  Transfer to_coarser;  // empty on the base level
  SchwarzSmoother smoother;
};

/// Geometric multigrid over nested quadtree meshes with rediscretized coarse
/// operators, Vanka-type Schwarz smoothing and a sparse direct base solver.
/// Level 0 is the base grid, back() the finest.
class Multigrid {
public:
  Multigrid(const MeshHierarchy& meshes, const ImplicitDomain& domain, const PhysicsParams& params,
            SmootherConfig smoother);

  int depth() const { return static_cast<int>(levels_.size()); }
  const Level& level(int l) const { return levels_[static_cast<std::size_t>(l)]; }
  const Level& finest() const { return levels_.back(); }
  const SmootherConfig& smoother_config() const { return smoother_; }
  void set_smoother(const SmootherConfig& smoother);

  void assemble_stokes();
  /// Rediscretize the Newton (or Picard) linearization on every level at the
  /// fine state, interpolated to coarser levels.
  void assemble_newton(const Vector& fine_state);
  void assemble_picard(const Vector& fine_state);
  /// Install explicit systems (index = level) and rebuild smoothers and the
  /// base factorization.
  void set_systems(std::vector<SaddleSystem> systems);

  const SaddleSystem& fine_system() const { return levels_.back().system; }

  /// One V-cycle on level l starting from x.
  void v_cycle(int l, Vector& x, const Vector& b) const;
  /// V-cycle from a zero initial guess on the finest level.
  Vector precondition(const Vector& r) const;

  SolveReport solve(const Vector& b, Vector& x, double rtol, int max_iters) const;

  PhaseTimes& phase_times() const { return phases_; }
  std::vector<Vector> interpolate_state(const Vector& fine_state) const;

private:
  void rebuild_solvers();

  std::vector<Level> levels_;
  SmootherConfig smoother_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> base_;
  mutable PhaseTimes phases_;
};

/// Fixed-point multigrid iteration from x = 0.
SolveReport gmg_solve(const Multigrid& mg, const Vector& b, Vector& x, double rtol, int max_iters);

} // namespace fcmg
