// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include "fcmg/multigrid.hpp"

namespace fcmg {

using LinearOperator = std::function<Vector(const Vector&)>;

enum class LinearMode { GmgFixedPoint, BicgstabGmg };

struct LinearSolverConfig {
  LinearMode mode = LinearMode::GmgFixedPoint;
  double rtol = 1e-9;
  int max_iters = 200;
  /// V-cycles per preconditioner application.
  int cycles = 1;

  void validate() const;
};

/// Right-preconditioned BiCGSTAB from the initial x. Stops when the true
/// relative residual ||b - L x|| / ||b|| <= rtol. A breakdown (|r_hat.r| below
/// 1e-30 |r_hat| |r|, |r_hat.v| below 1e-30 |r_hat| |v|, or |omega| below 1e-30)
/// restarts from the current iterate at most twice; a third breakdown throws
/// SolverError. Reaching max_iters returns unconverged.
SolveReport bicgstab(const LinearOperator& apply, const Vector& b, const LinearOperator& precond,
                     Vector& x, double rtol, int max_iters);

/// Solves the finest system of `mg` with right-hand side b from x = 0.
SolveReport solve_linear(const Multigrid& mg, const Vector& b, Vector& x,
                         const LinearSolverConfig& config);

enum class Linearization { Newton, Picard };
enum class InitialGuess { Zero, StokesSolution, Provided };

struct NonlinearConfig {
  Linearization linearization = Linearization::Newton;
  /// Each linearized system is solved until its residual drops by this factor.
  double inner_reduction = 1e2;
  /// Stop when ||R(x_k)|| <= outer_tol ||R(x_0)||.
  double outer_tol = 1e-8;
  int max_outer = 30;
  InitialGuess initial_guess = InitialGuess::Zero;
  /// Also solve every linearized system with the GMG fixed-point iteration to
  /// the same reduction and record its iteration count.
  bool compare_fixed_point = false;

  void validate() const;
};

struct OuterStep {
  int outer_iter = 0;
  double nonlinear_residual = 0;  // ||R(x_k)||, k = outer_iter
  int inner_iters = 0;
  double inner_final_rel_res = 0;
  double elapsed_ms = 0;
  int fixed_point_iters = -1;
};

struct NonlinearReport {
  std::vector<OuterStep> steps;  // steps[0] describes x_0 (no inner solve)
  std::vector<SolveReport> inner;
  bool converged = false;
  double total_ms = 0;

  int outer_iterations() const { return static_cast<int>(steps.size()) - 1; }
  void write_csv(std::ostream& os) const;
};

/// Newton or Picard iteration on the finest level of `mg`. The linearized
/// operator is rediscretized on every level at each outer step. On entry x is
/// the initial guess when the config asks for a provided one. Inner solver
/// failures are rethrown as SolverError naming the outer step.
NonlinearReport nonlinear_solve(Multigrid& mg, Vector& x, const NonlinearConfig& nonlinear,
                                const LinearSolverConfig& linear);

NonlinearReport newton_solve(Multigrid& mg, Vector& x, NonlinearConfig nonlinear,
                             const LinearSolverConfig& linear);
NonlinearReport picard_solve(Multigrid& mg, Vector& x, NonlinearConfig nonlinear,
                             const LinearSolverConfig& linear);

} // namespace fcmg
