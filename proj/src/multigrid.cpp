// SPDX-License-Identifier: Apache-2.0
#include "fcmg/multigrid.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <string>

namespace fcmg {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Velocity DoFs in the B^T row of pressure DoF p, appended to out.
void append_coupled_velocity(const SparseMatrix& m, Index n_u, Index p, std::vector<Index>& out) {
  for (SparseMatrix::InnerIterator it(m, p); it; ++it)
    if (it.col() < n_u) out.push_back(it.col());
}

void sort_unique(std::vector<Index>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

std::vector<Index> cell_pressure_dofs(const Discretization& disc, std::size_t c) {
  std::vector<Index> out;
  for (int node : disc.mesh().cell_nodes(c))
    for (auto [r, w] : disc.dofs().expansion(static_cast<std::size_t>(node)))
      out.push_back(disc.dofs().pressure_dof(r));
  sort_unique(out);
  return out;
}

std::vector<Index> cell_subdomain(const Discretization& disc, const SaddleSystem& system,
                                  std::size_t c) {
  std::vector<Index> dofs = cell_pressure_dofs(disc, c);
  const std::size_t np = dofs.size();
  for (std::size_t k = 0; k < np; ++k)
    append_coupled_velocity(system.matrix, system.n_u, dofs[k], dofs);
  sort_unique(dofs);
  return dofs;
}

} // namespace

Transfer build_transfer(const Discretization& coarse, const Discretization& fine) {
  const QuadtreeMesh& cm = coarse.mesh();
  const QuadtreeMesh& fm = fine.mesh();
  if (cm.roots_x() != fm.roots_x() || cm.roots_y() != fm.roots_y() ||
      !(cm.root_bbox().lo == fm.root_bbox().lo) || !(cm.root_bbox().hi == fm.root_bbox().hi))
    throw HierarchyError("transfer between meshes with different root arrays", 0);
  for (const CellKey& k : fm.leaves())
    if (!cm.covering_leaf(k))
      throw HierarchyError("fine mesh is not nested in the coarse mesh", 0);

  const DofMap& cd = coarse.dofs();
  const DofMap& fd = fine.dofs();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(fd.n_x()) * 4);
  std::map<int, double> row;
  for (std::size_t n = 0; n < fm.num_nodes(); ++n) {
    const int rf = fd.regular_index(n);
    if (rf < 0) continue;
    const NodeKey key = fm.node_key(n);
    const std::size_t c = cm.locate(key);
    const auto corners = cm.corner_keys(cm.leaf(c));
    const double s = static_cast<double>(key.I - corners[0].I) /
                     static_cast<double>(corners[3].I - corners[0].I);
    const double t = static_cast<double>(key.J - corners[0].J) /
                     static_cast<double>(corners[3].J - corners[0].J);
    const std::array<double, 4> N{(1 - s) * (1 - t), s * (1 - t), (1 - s) * t, s * t};
    row.clear();
    const auto& nodes = cm.cell_nodes(c);
    for (int a = 0; a < 4; ++a) {
      if (N[a] == 0.0) continue;
      for (auto [rc, w] : cd.expansion(static_cast<std::size_t>(nodes[a]))) row[rc] += N[a] * w;
    }
    for (auto [rc, w] : row) {
      if (w == 0.0) continue;
      for (int comp = 0; comp < 2; ++comp)
        trip.emplace_back(fd.velocity_dof(rf, comp), cd.velocity_dof(rc, comp), w);
      trip.emplace_back(fd.pressure_dof(rf), cd.pressure_dof(rc), w);
    }
  }
  Transfer t;
  t.prolongation.resize(fd.n_x(), cd.n_x());
  t.prolongation.setFromTriplets(trip.begin(), trip.end());
  t.restriction = t.prolongation.transpose();
  return t;
}

void SmootherConfig::validate() const {
  if (pre_steps < 0 || post_steps < 0) throw ConfigError("smoothing steps must be non-negative");
  if (weighting == Weighting::UniformDamping && !(omega > 0 && omega <= 1))
    throw ConfigError("damping factor must lie in (0, 1]");
}

std::vector<std::vector<Index>> cell_subdomains(const Discretization& disc,
                                                const SaddleSystem& system) {
  std::vector<std::vector<Index>> sets;
  sets.reserve(disc.mesh().num_leaves());
  for (std::size_t c = 0; c < disc.mesh().num_leaves(); ++c)
    sets.push_back(cell_subdomain(disc, system, c));
  return sets;
}

std::vector<std::vector<Index>> cutcell_subdomains(const Discretization& disc,
                                                   const SaddleSystem& system) {
  std::vector<std::vector<Index>> sets;
  std::vector<bool> covered(static_cast<std::size_t>(system.n_p), false);
  const auto& classes = disc.geometry().classes;
  for (std::size_t c = 0; c < disc.mesh().num_leaves(); ++c) {
    if (classes[c] != CellClass::Cut) continue;
    sets.push_back(cell_subdomain(disc, system, c));
    for (Index p : cell_pressure_dofs(disc, c)) covered[static_cast<std::size_t>(p - system.n_u)] = true;
  }
  for (Index k = 0; k < system.n_p; ++k) {
    if (covered[static_cast<std::size_t>(k)]) continue;
    const Index p = system.n_u + k;
    std::vector<Index> dofs{p};
    append_coupled_velocity(system.matrix, system.n_u, p, dofs);
    sort_unique(dofs);
    sets.push_back(std::move(dofs));
  }
  return sets;
}

SchwarzSmoother::SchwarzSmoother(const SparseMatrix& matrix, std::vector<std::vector<Index>> sets,
                                 const SmootherConfig& config)
    : symmetric_(config.symmetric) {
  const Index n = matrix.rows();
  multiplicity_.assign(static_cast<std::size_t>(n), 0);
  for (const auto& s : sets)
    for (Index j : s) {
      if (j < 0 || j >= n) throw FactorizationError("subdomain DoF index out of range");
      ++multiplicity_[static_cast<std::size_t>(j)];
    }
  subdomains_.resize(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    Subdomain& sd = subdomains_[i];
    sd.dofs = std::move(sets[i]);
    if (!std::is_sorted(sd.dofs.begin(), sd.dofs.end()) ||
        std::adjacent_find(sd.dofs.begin(), sd.dofs.end()) != sd.dofs.end())
      throw FactorizationError("subdomain " + std::to_string(i) + " has unsorted or repeated DoFs");
    const Index m = static_cast<Index>(sd.dofs.size());
    DenseMatrix local = DenseMatrix::Zero(m, m);
    for (Index a = 0; a < m; ++a) {
      for (SparseMatrix::InnerIterator it(matrix, sd.dofs[a]); it; ++it) {
        auto pos = std::lower_bound(sd.dofs.begin(), sd.dofs.end(), it.col());
        if (pos != sd.dofs.end() && *pos == it.col()) local(a, pos - sd.dofs.begin()) = it.value();
      }
    }
    sd.lu.compute(local);
    const auto diag = sd.lu.matrixLU().diagonal().cwiseAbs();
    const double dmax = m > 0 ? diag.maxCoeff() : 1.0;
    if (m > 0 && (!std::isfinite(dmax) || !(diag.minCoeff() > 1e-15 * dmax)))
      throw FactorizationError("singular local matrix in subdomain " + std::to_string(i));
    sd.weights.resize(m);
    for (Index a = 0; a < m; ++a)
      sd.weights[a] = config.weighting == Weighting::Harmonic
                          ? 1.0 / multiplicity_[static_cast<std::size_t>(sd.dofs[a])]
                          : config.omega;
  }
}

double SchwarzSmoother::mean_dimension() const {
  if (subdomains_.empty()) return 0.0;
  double s = 0;
  for (const auto& sd : subdomains_) s += static_cast<double>(sd.dofs.size());
  return s / static_cast<double>(subdomains_.size());
}

void SchwarzSmoother::sweep(const SparseMatrix& matrix, Vector& x, const Vector& b,
                            bool backward) const {
  Vector r;
  const std::size_t ns = subdomains_.size();
  for (std::size_t k = 0; k < ns; ++k) {
    const Subdomain& sd = subdomains_[backward ? ns - 1 - k : k];
    const Index m = static_cast<Index>(sd.dofs.size());
    r.resize(m);
    for (Index a = 0; a < m; ++a) {
      const Index row = sd.dofs[a];
      double v = b[row];
      for (SparseMatrix::InnerIterator it(matrix, row); it; ++it) v -= it.value() * x[it.col()];
      r[a] = v;
    }
    const Vector e = sd.lu.solve(r);
    for (Index a = 0; a < m; ++a) x[sd.dofs[a]] += sd.weights[a] * e[a];
  }
}

void SchwarzSmoother::smooth(const SparseMatrix& matrix, Vector& x, const Vector& b,
                             int steps) const {
  for (int s = 0; s < steps; ++s) sweep(matrix, x, b, symmetric_ && (s % 2 == 1));
}

double SolveReport::average_reduction() const {
  if (iterations == 0 || abs_residual.empty() || abs_residual.front() == 0.0) return 0.0;
  return std::pow(abs_residual.back() / abs_residual.front(), 1.0 / iterations);
}

void SolveReport::write_csv(std::ostream& os) const {
  os << "iteration,abs_residual,rel_residual,elapsed_ms\n";
  const auto prec = os.precision(17);
  for (std::size_t k = 0; k < abs_residual.size(); ++k)
    os << k << ',' << abs_residual[k] << ',' << rel_residual[k] << ',' << elapsed_ms[k] << '\n';
  os.precision(prec);
}

Multigrid::Multigrid(const MeshHierarchy& meshes, const ImplicitDomain& domain,
                     const PhysicsParams& params, SmootherConfig smoother)
    : smoother_(smoother) {
  if (meshes.empty()) throw HierarchyError("empty mesh hierarchy", 0);
  smoother_.validate();
  const auto t0 = Clock::now();
  levels_.resize(meshes.size());
  for (std::size_t l = 0; l < meshes.size(); ++l) {
    levels_[l].mesh = std::make_unique<QuadtreeMesh>(meshes[l]);
    levels_[l].disc = std::make_unique<Discretization>(*levels_[l].mesh, domain, params);
    if (l > 0) levels_[l].to_coarser = build_transfer(*levels_[l - 1].disc, *levels_[l].disc);
  }
  phases_.setup_ms += ms_since(t0);
  assemble_stokes();
}

void Multigrid::set_smoother(const SmootherConfig& smoother) {
  smoother.validate();
  smoother_ = smoother;
  rebuild_solvers();
}

void Multigrid::assemble_stokes() {
  std::vector<SaddleSystem> systems;
  for (const auto& lv : levels_) systems.push_back(lv.disc->stokes());
  set_systems(std::move(systems));
}

std::vector<Vector> Multigrid::interpolate_state(const Vector& fine_state) const {
  std::vector<Vector> states(levels_.size());
  const Discretization& fine = *levels_.back().disc;
  states.back() = fine_state;
  for (std::size_t l = 0; l + 1 < levels_.size(); ++l)
    states[l] = levels_[l].disc->interpolate([&](Vec2 p) { return fine.evaluate(fine_state, p); });
  return states;
}

void Multigrid::assemble_newton(const Vector& fine_state) {
  const auto states = interpolate_state(fine_state);
  std::vector<SaddleSystem> systems;
  for (std::size_t l = 0; l < levels_.size(); ++l) systems.push_back(levels_[l].disc->newton(states[l]));
  set_systems(std::move(systems));
}

void Multigrid::assemble_picard(const Vector& fine_state) {
  const auto states = interpolate_state(fine_state);
  std::vector<SaddleSystem> systems;
  for (std::size_t l = 0; l < levels_.size(); ++l) systems.push_back(levels_[l].disc->picard(states[l]));
  set_systems(std::move(systems));
}

void Multigrid::set_systems(std::vector<SaddleSystem> systems) {
  if (systems.size() != levels_.size()) throw HierarchyError("one system per level required", depth());
  for (std::size_t l = 0; l < levels_.size(); ++l) levels_[l].system = std::move(systems[l]);
  rebuild_solvers();
}

void Multigrid::rebuild_solvers() {
  const auto t0 = Clock::now();
  for (std::size_t l = 1; l < levels_.size(); ++l) {
    Level& lv = levels_[l];
    auto sets = smoother_.kind == SmootherKind::Cell ? cell_subdomains(*lv.disc, lv.system)
                                                     : cutcell_subdomains(*lv.disc, lv.system);
    lv.smoother = SchwarzSmoother(lv.system.matrix, std::move(sets), smoother_);
  }
  const Eigen::SparseMatrix<double> base = levels_.front().system.matrix;
  base_.analyzePattern(base);
  base_.factorize(base);
  if (base_.info() != Eigen::Success)
    throw FactorizationError("base-level factorization failed: " + base_.lastErrorMessage());
  phases_.setup_ms += ms_since(t0);
}

void Multigrid::v_cycle(int l, Vector& x, const Vector& b) const {
  const Level& lv = levels_[static_cast<std::size_t>(l)];
  if (l == 0) {
    const auto t0 = Clock::now();
    x = base_.solve(b);
    phases_.base_ms += ms_since(t0);
    return;
  }
  auto t0 = Clock::now();
  lv.smoother.smooth(lv.system.matrix, x, b, smoother_.pre_steps);
  phases_.smoothing_ms += ms_since(t0);

  t0 = Clock::now();
  const Vector r = b - lv.system.matrix * x;
  const Vector rc = lv.to_coarser.restriction * r;
  phases_.transfer_ms += ms_since(t0);

  Vector ec = Vector::Zero(rc.size());
  v_cycle(l - 1, ec, rc);

  t0 = Clock::now();
  x += lv.to_coarser.prolongation * ec;
  phases_.transfer_ms += ms_since(t0);

  t0 = Clock::now();
  lv.smoother.smooth(lv.system.matrix, x, b, smoother_.post_steps);
  phases_.smoothing_ms += ms_since(t0);
}

Vector Multigrid::precondition(const Vector& r) const {
  Vector x = Vector::Zero(r.size());
  v_cycle(depth() - 1, x, r);
  return x;
}

SolveReport Multigrid::solve(const Vector& b, Vector& x, double rtol, int max_iters) const {
  const SparseMatrix& L = fine_system().matrix;
  SolveReport rep;
  const PhaseTimes before = phases_;
  const auto t0 = Clock::now();
  x = Vector::Zero(b.size());
  const double bnorm = b.norm();
  rep.abs_residual.push_back(bnorm);
  rep.rel_residual.push_back(bnorm > 0 ? 1.0 : 0.0);
  rep.elapsed_ms.push_back(0.0);
  if (bnorm == 0.0) {
    rep.converged = true;
    return rep;
  }
  int rising = 0;
  for (int k = 1; k <= max_iters; ++k) {
    v_cycle(depth() - 1, x, b);
    const auto tr = Clock::now();
    const double rn = (b - L * x).norm();
    phases_.residual_ms += ms_since(tr);
    const double prev = rep.abs_residual.back();
    rep.abs_residual.push_back(rn);
    rep.rel_residual.push_back(rn / bnorm);
    rep.elapsed_ms.push_back(ms_since(t0));
    rep.iterations = k;
    if (!std::isfinite(rn)) {
      rep.diverged = true;
      break;
    }
    if (rn / bnorm <= rtol) {
      rep.converged = true;
      break;
    }
    rising = rn > prev ? rising + 1 : 0;
    if (rising >= 5) {
      rep.diverged = true;
      break;
    }
  }
  rep.total_ms = ms_since(t0);
  rep.phases.smoothing_ms = phases_.smoothing_ms - before.smoothing_ms;
  rep.phases.transfer_ms = phases_.transfer_ms - before.transfer_ms;
  rep.phases.base_ms = phases_.base_ms - before.base_ms;
  rep.phases.residual_ms = phases_.residual_ms - before.residual_ms;
  rep.phases.setup_ms = phases_.setup_ms;
  return rep;
}

SolveReport gmg_solve(const Multigrid& mg, const Vector& b, Vector& x, double rtol, int max_iters) {
  return mg.solve(b, x, rtol, max_iters);
}

} // namespace fcmg
