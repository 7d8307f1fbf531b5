// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fcmg/discretization.hpp"
#include "fcmg/geometry.hpp"
#include "fcmg/mesh.hpp"
#include "fcmg/multigrid.hpp"
#include "fcmg/solvers.hpp"

namespace fcmg {

enum class ProblemKind { Stokes, NavierStokes };

struct BoundarySpec {
  std::string name;
  BcType type = BcType::Dirichlet;
  std::string where;  // expression in x, y, immersed
  std::string vx = "0";
  std::string vy = "0";
};

/// Refine leaves created by the previous refinement step while they lie
/// within distance d0 * 2^-(step-1) of the zero set of `distance`, for at
/// most max_steps steps (-1 = all).
struct RefineRule {
  std::string name;
  std::string distance;  // expression in x, y; must be 1-Lipschitz
  double d0 = 0.0;
  int max_steps = -1;
};

struct MmsSpec {
  std::vector<int> levels{2, 3, 4, 5};
  double eta = 1.0;
  double beta = 0.1;
};

/// Full description of one run. Every field has a default reproducing the
/// cylinder benchmark; see configs/cylinder.ini for the file grammar.
struct RunConfig {
  std::map<std::string, double> constants;
  BBox box{{0.0, 0.0}, {2.2, 0.41}};
  int roots_x = 11;
  int roots_y = 2;
  std::vector<std::pair<std::string, std::string>> primitives;
  std::string region;
  std::vector<BoundarySpec> boundaries;
  std::string force_x = "0";
  std::string force_y = "0";

  int base_level = 2;
  int depth = 4;
  std::vector<RefineRule> refine;

  ProblemKind problem = ProblemKind::Stokes;
  PhysicsParams physics;
  SmootherConfig smoother;
  bool auto_weighting = true;  // uniform for cell, harmonic for cutcell
  LinearSolverConfig linear;
  NonlinearConfig nonlinear;
  LinearMode nonlinear_linear_mode = LinearMode::BicgstabGmg;

  std::filesystem::path out_dir = "out";
  bool deterministic = true;
  unsigned seed = 1;
  bool write_vtk = true;

  MmsSpec mms;

  void validate() const;
};

RunConfig default_config();

/// INI-style parser: `[section]` headers, `key = value` lines, `#` comments.
/// Keys not mentioned keep the values of `base`. Throws ConfigError naming the
/// line on unknown keys or malformed values.
RunConfig parse_config(std::istream& in, RunConfig base = default_config());
/// Throws InputError if the file cannot be read.
RunConfig load_config(const std::filesystem::path& path);

void set_smoother_kind(RunConfig& cfg, SmootherKind kind);

/// Physical domain and boundary conditions. Disks must lie strictly inside
/// the embedding box. Throws ConfigError.
ImplicitDomain build_domain(const RunConfig& cfg);
PhysicsParams build_physics(const RunConfig& cfg);

/// Uniform base mesh followed by depth - 1 marking steps of the refine rules.
QuadtreeMesh build_fine_mesh(const RunConfig& cfg, int depth);

struct BenchmarkSetup {
  std::shared_ptr<const ImplicitDomain> domain;
  MeshHierarchy hierarchy;
  PhysicsParams physics;
};

BenchmarkSetup setup_benchmark(const RunConfig& cfg, int depth);

/// ubar * 2/3 * D / eta of the first disk primitive, or nullopt.
std::optional<double> reynolds_number(const RunConfig& cfg);

struct LevelRow {
  int level = 0;
  std::size_t n_cells = 0;
  Index n_dofs = 0;
  std::size_t n_cut_cells = 0;
  std::size_t n_hanging = 0;
};

struct SolveRow {
  std::string problem;
  std::string smoother;
  int depth = 0;
  std::size_t n_cells = 0;
  Index n_dofs = 0;
  std::string mode;
  int iterations = 0;
  int outer_iterations = 0;
  bool converged = false;
  bool diverged = false;
  double avg_reduction = 0;
  double final_rel_residual = 0;
  double mass_balance = 0;
  std::size_t n_subdomains = 0;
  double mean_subdomain_dim = 0;
  double ms_per_iter = 0;
  double total_ms = 0;
  double setup_ms = 0;
  PhaseTimes phases;
  std::string error;

  SolveReport linear;
  NonlinearReport nonlinear;
};

struct BenchmarkReport {
  std::vector<LevelRow> levels;
  std::vector<SolveRow> rows;
  /// Finest solve of the run, kept for field output.
  std::shared_ptr<Multigrid> multigrid;
  std::shared_ptr<const ImplicitDomain> domain;
  Vector solution;

  bool all_converged() const;
};

std::vector<LevelRow> level_table(const Multigrid& mg);

/// Solve the configured problem on one hierarchy.
SolveRow solve_on(Multigrid& mg, const RunConfig& cfg, Vector& x);

BenchmarkReport run_solve(const RunConfig& cfg);

/// M^i for every depth i: the first i levels of one deepest hierarchy, so all
/// problems share the base grid. Solver errors are recorded per row.
BenchmarkReport run_mesh_study(const RunConfig& cfg, const std::vector<int>& depths,
                               const std::vector<SmootherKind>& smoothers);

struct MmsRow {
  int level = 0;
  double h = 0;
  Index n_dofs = 0;
  double error_u = 0;
  double error_p = 0;
  double order_u = 0;
  double order_p = 0;
  double interpolant_residual = 0;
};

/// Manufactured Stokes solution u = (sin(pi x) sin(pi y), cos(pi x) cos(pi y)),
/// p = sin(pi x) cos(pi y) on the configured domain with uniform meshes.
std::vector<MmsRow> run_mms(const RunConfig& cfg);

/// |inlet flux - outlet flux| / inlet flux through the left and right sides of
/// the embedding box, integrated with 2-point Gauss between boundary nodes.
double mass_balance(const Discretization& disc, const Vector& state);
/// Flux of u_x through the vertical line x = box side (left when `left`).
double boundary_flux(const Discretization& disc, const Vector& state, bool left);

/// Legacy ASCII VTK unstructured grid with point data "velocity", "pressure"
/// and cell data "alpha" (1, alpha_out or the inside fraction) and "level".
void write_vtk(std::ostream& os, const Discretization& disc, const Vector& state);
void write_vtk(const std::filesystem::path& path, const Discretization& disc, const Vector& state);

void write_report_csv(std::ostream& os, const std::vector<SolveRow>& rows);
void write_levels_csv(std::ostream& os, const std::vector<LevelRow>& levels);
void write_residuals_csv(std::ostream& os, const std::vector<SolveRow>& rows);
void write_nonlinear_csv(std::ostream& os, const std::vector<SolveRow>& rows);
void write_mms_csv(std::ostream& os, const std::vector<MmsRow>& rows);

/// Columns of the CSV outputs that depend on wall-clock time.
const std::vector<std::string>& timing_columns();

std::string to_string(SmootherKind kind);
std::string to_string(ProblemKind kind);

} // namespace fcmg
