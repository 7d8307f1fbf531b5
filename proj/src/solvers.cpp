// SPDX-License-Identifier: Apache-2.0
#include "fcmg/solvers.hpp"

#include <chrono>
#include <cmath>
#include <string>

namespace fcmg {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

constexpr double kBreakdown = 1e-30;

} // namespace

void LinearSolverConfig::validate() const {
  if (!(rtol > 0)) throw ConfigError("linear rtol must be positive");
  if (max_iters < 0) throw ConfigError("linear max_iters must be non-negative");
  if (cycles < 1) throw ConfigError("cycles per preconditioner application must be >= 1");
}

void NonlinearConfig::validate() const {
  if (!(inner_reduction > 1)) throw ConfigError("inner reduction factor must exceed 1");
  if (!(outer_tol > 0)) throw ConfigError("outer tolerance must be positive");
  if (max_outer < 1) throw ConfigError("max outer iterations must be >= 1");
}

SolveReport bicgstab(const LinearOperator& apply, const Vector& b, const LinearOperator& precond,
                     Vector& x, double rtol, int max_iters) {
  SolveReport rep;
  const auto t0 = Clock::now();
  const double bnorm = b.norm();
  if (x.size() != b.size()) x = Vector::Zero(b.size());
  Vector r = b - apply(x);
  double rn = r.norm();
  rep.abs_residual.push_back(rn);
  rep.rel_residual.push_back(bnorm > 0 ? rn / bnorm : 0.0);
  rep.elapsed_ms.push_back(0.0);
  if (bnorm == 0.0 || rn <= rtol * bnorm) {
    if (bnorm == 0.0) x.setZero();
    rep.converged = true;
    return rep;
  }

  int restarts = 0;
  Vector r_hat, p, v, y, s, z, t;
  double rho = 1, alpha = 1, omega = 1;
  auto reset = [&] {
    r_hat = r;
    p = Vector::Zero(b.size());
    v = Vector::Zero(b.size());
    rho = alpha = omega = 1;
  };
  auto breakdown = [&](const char* what) {
    if (++restarts > 2)
      throw SolverError(std::string("BiCGSTAB breakdown (") + what + ") after 2 restarts");
    r = b - apply(x);
    reset();
  };
  auto record = [&](int k) {
    rep.abs_residual.push_back(rn);
    rep.rel_residual.push_back(rn / bnorm);
    rep.elapsed_ms.push_back(ms_since(t0));
    rep.iterations = k;
  };
  reset();

  for (int k = 1; k <= max_iters; ++k) {
    const double rho_new = r_hat.dot(r);
    if (std::abs(rho_new) < kBreakdown * r_hat.norm() * r.norm()) {
      breakdown("rho");
      --k;
      continue;
    }
    const double beta = (rho_new / rho) * (alpha / omega);
    rho = rho_new;
    p = r + beta * (p - omega * v);
    y = precond(p);
    v = apply(y);
    const double rv = r_hat.dot(v);
    if (std::abs(rv) < kBreakdown * r_hat.norm() * v.norm()) {
      breakdown("r_hat.v");
      --k;
      continue;
    }
    alpha = rho / rv;
    s = r - alpha * v;
    if (s.norm() <= rtol * bnorm) {
      const Vector xh = x + alpha * y;
      const double true_rn = (b - apply(xh)).norm();
      if (true_rn <= rtol * bnorm) {
        x = xh;
        rn = true_rn;
        record(k);
        rep.converged = true;
        break;
      }
    }
    z = precond(s);
    t = apply(z);
    const double tt = t.dot(t);
    omega = tt > 0 ? t.dot(s) / tt : 0.0;
    x += alpha * y + omega * z;
    r = s - omega * t;
    rn = r.norm();
    if (!std::isfinite(rn)) {
      record(k);
      rep.diverged = true;
      break;
    }
    if (rn <= rtol * bnorm) {
      r = b - apply(x);
      rn = r.norm();
      if (rn <= rtol * bnorm) {
        record(k);
        rep.converged = true;
        break;
      }
    }
    record(k);
    if (std::abs(omega) < kBreakdown) breakdown("omega");
  }
  rep.total_ms = ms_since(t0);
  return rep;
}

SolveReport solve_linear(const Multigrid& mg, const Vector& b, Vector& x,
                         const LinearSolverConfig& config) {
  config.validate();
  if (config.mode == LinearMode::GmgFixedPoint) return mg.solve(b, x, config.rtol, config.max_iters);
  const SparseMatrix& L = mg.fine_system().matrix;
  const PhaseTimes before = mg.phase_times();
  auto apply = [&](const Vector& v) -> Vector { return L * v; };
  auto precond = [&](const Vector& v) -> Vector {
    Vector e = Vector::Zero(v.size());
    for (int c = 0; c < config.cycles; ++c) mg.v_cycle(mg.depth() - 1, e, v);
    return e;
  };
  x = Vector::Zero(b.size());
  SolveReport rep = bicgstab(apply, b, precond, x, config.rtol, config.max_iters);
  const PhaseTimes& now = mg.phase_times();
  rep.phases.smoothing_ms = now.smoothing_ms - before.smoothing_ms;
  rep.phases.transfer_ms = now.transfer_ms - before.transfer_ms;
  rep.phases.base_ms = now.base_ms - before.base_ms;
  rep.phases.setup_ms = now.setup_ms;
  return rep;
}

void NonlinearReport::write_csv(std::ostream& os) const {
  os << "outer_iter,nonlinear_residual,inner_iters,inner_final_rel_res,elapsed_ms\n";
  const auto prec = os.precision(17);
  for (const auto& s : steps)
    os << s.outer_iter << ',' << s.nonlinear_residual << ',' << s.inner_iters << ','
       << s.inner_final_rel_res << ',' << s.elapsed_ms << '\n';
  os.precision(prec);
}

NonlinearReport nonlinear_solve(Multigrid& mg, Vector& x, const NonlinearConfig& nonlinear,
                                const LinearSolverConfig& linear) {
  nonlinear.validate();
  linear.validate();
  const Discretization& fine = *mg.finest().disc;
  const Index n = fine.dofs().n_x();
  const auto t0 = Clock::now();
  NonlinearReport rep;

  switch (nonlinear.initial_guess) {
  case InitialGuess::Zero:
    x = Vector::Zero(n);
    break;
  case InitialGuess::StokesSolution: {
    mg.assemble_stokes();
    LinearSolverConfig cfg = linear;
    cfg.rtol = std::min(linear.rtol, nonlinear.outer_tol);
    const SolveReport s = solve_linear(mg, fine.stokes().rhs, x, cfg);
    if (!s.converged) throw SolverError("Stokes initial guess did not converge");
    break;
  }
  case InitialGuess::Provided:
    if (x.size() != n) throw SolverError("provided initial guess has the wrong size");
    break;
  }

  const double r0 = fine.residual(x).norm();
  rep.steps.push_back({0, r0, 0, 0.0, ms_since(t0), -1});
  if (r0 == 0.0) {
    rep.converged = true;
    rep.total_ms = ms_since(t0);
    return rep;
  }

  LinearSolverConfig inner = linear;
  inner.rtol = 1.0 / nonlinear.inner_reduction;
  for (int k = 1; k <= nonlinear.max_outer; ++k) {
    Vector rhs;
    if (nonlinear.linearization == Linearization::Newton) {
      mg.assemble_newton(x);
      rhs = mg.fine_system().rhs;
    } else {
      mg.assemble_picard(x);
      rhs = mg.fine_system().rhs - mg.fine_system().matrix * x;
    }
    Vector delta;
    SolveReport s;
    try {
      s = solve_linear(mg, rhs, delta, inner);
    } catch (const Error& e) {
      throw SolverError("outer iteration " + std::to_string(k) + ": " + e.what());
    }
    if (!s.converged)
      throw SolverError("outer iteration " + std::to_string(k) + ": linear solve " +
                        (s.diverged ? "diverged" : "reached max iterations"));
    OuterStep step;
    if (nonlinear.compare_fixed_point) {
      Vector d2;
      const SolveReport fp = mg.solve(rhs, d2, inner.rtol, linear.max_iters);
      step.fixed_point_iters = fp.converged ? fp.iterations : -1;
    }
    x += delta;
    step.outer_iter = k;
    step.nonlinear_residual = fine.residual(x).norm();
    step.inner_iters = s.iterations;
    step.inner_final_rel_res = s.rel_residual.back();
    step.elapsed_ms = ms_since(t0);
    rep.steps.push_back(step);
    rep.inner.push_back(std::move(s));
    if (!std::isfinite(step.nonlinear_residual)) break;
    if (step.nonlinear_residual <= nonlinear.outer_tol * r0) {
      rep.converged = true;
      break;
    }
  }
  rep.total_ms = ms_since(t0);
  return rep;
}

NonlinearReport newton_solve(Multigrid& mg, Vector& x, NonlinearConfig nonlinear,
                             const LinearSolverConfig& linear) {
  nonlinear.linearization = Linearization::Newton;
  return nonlinear_solve(mg, x, nonlinear, linear);
}

NonlinearReport picard_solve(Multigrid& mg, Vector& x, NonlinearConfig nonlinear,
                             const LinearSolverConfig& linear) {
  nonlinear.linearization = Linearization::Picard;
  return nonlinear_solve(mg, x, nonlinear, linear);
}

} // namespace fcmg
