// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <set>

#include "fcmg/bench.hpp"
#include "fcmg/multigrid.hpp"
#include "oracles.hpp"

using namespace fcmg;
using oracle::random_vector;

namespace {

const BBox kUnit{{0, 0}, {1, 1}};

ImplicitDomain box_domain() {
  ImplicitDomain d;
  d.embedding = kUnit;
  d.phi = LevelSet::rectangle(BBox{{-1, -1}, {2, 2}});
  d.conditions.push_back({"bottom", BcType::Dirichlet, [](Vec2 p, bool) { return p.y < 1e-12; },
                          [](Vec2 p) { return Vec2{p.x * (1 - p.x), 0.0}; }});
  d.conditions.push_back({"rest", BcType::Neumann, [](Vec2, bool) { return true; },
                          [](Vec2) { return Vec2{0.0, 0.1}; }});
  return d;
}

std::array<double, 3> linear_field(Vec2 p) { return {1 + 2 * p.x - 3 * p.y, -0.5 + p.y, 4 * p.x + p.y}; }

// Velocity DoFs in the sparsity pattern of the B^T rows of `pdofs`.
std::set<Index> coupled_velocity(const SaddleSystem& s, const std::set<Index>& pdofs) {
  std::set<Index> out;
  for (Index p : pdofs)
    for (SparseMatrix::InnerIterator it(s.matrix, p); it; ++it)
      if (it.col() < s.n_u) out.insert(it.col());
  return out;
}

// Pressure DoFs of a leaf: corners, hanging corners through their masters.
std::set<Index> cell_pressure_dofs(const Discretization& disc, std::size_t c) {
  std::set<Index> out;
  const auto& mesh = disc.mesh();
  for (int n : mesh.cell_nodes(c))
    for (auto [r, w] : disc.dofs().expansion(static_cast<std::size_t>(n))) out.insert(disc.dofs().pressure_dof(r));
  return out;
}

struct Small {
  QuadtreeMesh mesh = QuadtreeMesh::uniform(kUnit, 1, 1, 1);
  ImplicitDomain domain = box_domain();
  Discretization disc{mesh, domain, PhysicsParams{}};
};

} // namespace

TEST(Transfer, UniformEntriesAndExactReproduction) {
  const auto dom = box_domain();
  const auto coarse_mesh = QuadtreeMesh::uniform(kUnit, 1, 1, 2);
  const auto fine_mesh = QuadtreeMesh::uniform(kUnit, 1, 1, 3);
  const Discretization coarse(coarse_mesh, dom, PhysicsParams{});
  const Discretization fine(fine_mesh, dom, PhysicsParams{});
  const Transfer t = build_transfer(coarse, fine);
  const SparseMatrix& P = t.prolongation;
  ASSERT_EQ(P.rows(), fine.dofs().n_x());
  ASSERT_EQ(P.cols(), coarse.dofs().n_x());
  for (int k = 0; k < P.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(P, k); it; ++it)
      EXPECT_TRUE(it.value() == 1.0 || it.value() == 0.5 || it.value() == 0.25) << it.value();
  const Vector pc = P * coarse.interpolate(linear_field);
  EXPECT_EQ((pc - fine.interpolate(linear_field)).lpNorm<Eigen::Infinity>(), 0.0);
  const SparseMatrix Pt = P.transpose();
  EXPECT_EQ((SparseMatrix(t.restriction) - Pt).norm(), 0.0);
}

TEST(Transfer, BenchmarkHierarchyReproducesLinears) {
  RunConfig cfg = default_config();
  const auto setup = setup_benchmark(cfg, 3);
  const Multigrid mg(setup.hierarchy, *setup.domain, setup.physics, cfg.smoother);
  for (int l = 1; l < mg.depth(); ++l) {
    const auto& fine = *mg.level(l).disc;
    const auto& coarse = *mg.level(l - 1).disc;
    const Transfer& t = mg.level(l).to_coarser;
    const Vector pc = t.prolongation * coarse.interpolate(linear_field);
    EXPECT_LT((pc - fine.interpolate(linear_field)).lpNorm<Eigen::Infinity>(), 1e-13) << "level " << l;
    const Vector ones = t.prolongation * Vector::Ones(coarse.dofs().n_x());
    EXPECT_LT((ones - Vector::Ones(fine.dofs().n_x())).lpNorm<Eigen::Infinity>(), 1e-14);
    const SparseMatrix Pt = t.prolongation.transpose();
    EXPECT_EQ((SparseMatrix(t.restriction) - Pt).norm(), 0.0);
  }
}

TEST(Transfer, NonNestedMeshesAreRejected) {
  const auto dom = box_domain();
  const auto a = QuadtreeMesh::uniform(kUnit, 1, 1, 2);
  const auto b = QuadtreeMesh::uniform(kUnit, 1, 1, 3);
  const Discretization coarse(a, dom, PhysicsParams{});
  const Discretization fine(b, dom, PhysicsParams{});
  EXPECT_THROW(build_transfer(fine, coarse), HierarchyError);
}

TEST(Subdomains, CellSubdomainsMatchBruteForce) {
  const auto dom = box_domain();
  QuadtreeMesh mesh = QuadtreeMesh::uniform(kUnit, 1, 1, 3);
  mesh = refine(mesh, {mesh.leaf(20).id()});
  const Discretization disc(mesh, dom, PhysicsParams{});
  const auto& sys = disc.stokes();
  const auto sets = cell_subdomains(disc, sys);
  ASSERT_EQ(sets.size(), mesh.num_leaves());
  for (std::size_t c = 0; c < sets.size(); ++c) {
    const auto pd = cell_pressure_dofs(disc, c);
    std::set<Index> expect = coupled_velocity(sys, pd);
    expect.insert(pd.begin(), pd.end());
    EXPECT_EQ(std::set<Index>(sets[c].begin(), sets[c].end()), expect) << "cell " << c;
    EXPECT_TRUE(std::is_sorted(sets[c].begin(), sets[c].end()));
  }
  const auto uniform = QuadtreeMesh::uniform(kUnit, 1, 1, 3);
  const Discretization udisc(uniform, dom, PhysicsParams{});
  const auto usets = cell_subdomains(udisc, udisc.stokes());
  for (std::size_t c = 0; c < usets.size(); ++c) {
    const BBox b = uniform.bbox(uniform.leaf(c));
    if (b.lo.x > 0 && b.lo.y > 0 && b.hi.x < 1 && b.hi.y < 1) EXPECT_EQ(usets[c].size(), 36u);
  }
}

TEST(Subdomains, CutcellSubdomainsCoverEveryPressureDof) {
  RunConfig cfg = default_config();
  const auto setup = setup_benchmark(cfg, 2);
  const Discretization disc(setup.hierarchy.back(), *setup.domain, setup.physics);
  const auto& sys = disc.stokes();
  const auto sets = cutcell_subdomains(disc, sys);
  std::vector<std::size_t> cut;
  for (std::size_t c = 0; c < disc.mesh().num_leaves(); ++c)
    if (disc.geometry().classes[c] == CellClass::Cut) cut.push_back(c);
  ASSERT_FALSE(cut.empty());
  std::set<Index> covered;
  for (std::size_t i = 0; i < cut.size(); ++i) {
    const auto pd = cell_pressure_dofs(disc, cut[i]);
    std::set<Index> expect = coupled_velocity(sys, pd);
    expect.insert(pd.begin(), pd.end());
    EXPECT_EQ(std::set<Index>(sets[i].begin(), sets[i].end()), expect);
    covered.insert(pd.begin(), pd.end());
  }
  const std::size_t n_node = static_cast<std::size_t>(sys.n_p) - covered.size();
  ASSERT_EQ(sets.size(), cut.size() + n_node);
  std::set<Index> node_pressures;
  for (std::size_t i = cut.size(); i < sets.size(); ++i) {
    std::set<Index> pd;
    for (Index d : sets[i])
      if (d >= sys.n_u) pd.insert(d);
    ASSERT_EQ(pd.size(), 1u);
    EXPECT_FALSE(covered.count(*pd.begin()));
    node_pressures.insert(*pd.begin());
    std::set<Index> expect = coupled_velocity(sys, pd);
    expect.insert(pd.begin(), pd.end());
    EXPECT_EQ(std::set<Index>(sets[i].begin(), sets[i].end()), expect);
  }
  EXPECT_EQ(node_pressures.size(), n_node);
}

TEST(Schwarz, SweepMatchesDenseSequentialBlockSolves) {
  Small s;
  const auto& sys = s.disc.stokes();
  ASSERT_LE(sys.n_x(), 30);
  const DenseMatrix L = DenseMatrix(sys.matrix);
  const Vector b = random_vector(sys.n_x(), 1);
  const Vector x0 = random_vector(sys.n_x(), 2);
  for (auto kind : {SmootherKind::Cell, SmootherKind::Cutcell})
    for (auto weighting : {Weighting::UniformDamping, Weighting::Harmonic}) {
      SmootherConfig cfg;
      cfg.kind = kind;
      cfg.weighting = weighting;
      const auto sets = kind == SmootherKind::Cell ? cell_subdomains(s.disc, sys) : cutcell_subdomains(s.disc, sys);
      const SchwarzSmoother sm(sys.matrix, sets, cfg);
      const std::vector<int> mult = oracle::membership_count(sets, sys.n_x());
      EXPECT_EQ(sm.multiplicity(), mult);
      std::vector<Vector> weights;
      for (const auto& set : sets) {
        Vector w(static_cast<Index>(set.size()));
        for (std::size_t a = 0; a < set.size(); ++a)
          w[static_cast<Index>(a)] = weighting == Weighting::Harmonic ? 1.0 / mult[static_cast<std::size_t>(set[a])]
                                                                     : cfg.omega;
        weights.push_back(w);
      }
      Vector x = x0;
      sm.smooth(sys.matrix, x, b, 1);
      const Vector ref = oracle::dense_schwarz_sweep(L, b, x0, sets, weights);
      EXPECT_LT((x - ref).lpNorm<Eigen::Infinity>(), 1e-12 * ref.lpNorm<Eigen::Infinity>());
    }
}

TEST(Schwarz, WholeSystemSubdomainIsAnExactSolve) {
  Small s;
  const auto& sys = s.disc.stokes();
  std::vector<Index> all(static_cast<std::size_t>(sys.n_x()));
  std::iota(all.begin(), all.end(), Index{0});
  SmootherConfig cfg;
  cfg.omega = 1.0;
  const SchwarzSmoother sm(sys.matrix, {all}, cfg);
  Vector x = random_vector(sys.n_x(), 5);
  sm.smooth(sys.matrix, x, sys.rhs, 1);
  EXPECT_LT((sys.rhs - sys.matrix * x).norm(), 1e-12 * sys.rhs.norm());
  EXPECT_EQ(sm.mean_dimension(), static_cast<double>(sys.n_x()));
}

TEST(Schwarz, SingularSubdomainThrows) {
  SparseMatrix m(4, 4);
  m.insert(0, 0) = 1.0;
  m.insert(1, 1) = 1.0;
  m.makeCompressed();
  EXPECT_THROW(SchwarzSmoother(m, {{0, 1}, {2, 3}}, SmootherConfig{}), FactorizationError);
}

// Each of the configured smoothing sweeps reduces ||b - L x|| from x = 0 and,
// after the first sweep, from a random iterate. Long runs stay bounded.
TEST(Schwarz, SweepsReduceTheBenchmarkResidual) {
  RunConfig cfg = default_config();
  const auto setup = setup_benchmark(cfg, 3);
  for (auto kind : {SmootherKind::Cell, SmootherKind::Cutcell}) {
    set_smoother_kind(cfg, kind);
    const Multigrid mg(setup.hierarchy, *setup.domain, setup.physics, cfg.smoother);
    EXPECT_EQ(mg.level(0).smoother.size(), 0u);
    const int steps = cfg.smoother.pre_steps;
    for (int l = 1; l < mg.depth(); ++l) {
      const Level& lev = mg.level(l);
      for (bool random_start : {false, true}) {
        Vector x = random_start ? random_vector(lev.system.n_x(), 10 + static_cast<unsigned>(l))
                                : Vector::Zero(lev.system.n_x());
        const double r0 = (lev.system.rhs - lev.system.matrix * x).norm();
        double prev = r0;
        for (int k = 0; k < 20; ++k) {
          lev.smoother.smooth(lev.system.matrix, x, lev.system.rhs, 1);
          const double r = (lev.system.rhs - lev.system.matrix * x).norm();
          if (k < steps + (random_start ? 1 : 0) && (!random_start || k > 0))
            EXPECT_LT(r, prev) << to_string(kind) << " level " << l << " sweep " << k;
          EXPECT_LT(r, random_start ? 2 * r0 : r0) << to_string(kind) << " level " << l << " sweep " << k;
          prev = r;
        }
      }
    }
  }
}

TEST(Multigrid, VcycleIsLinearAndSolvesTheBenchmark) {
  RunConfig cfg = default_config();
  const auto setup = setup_benchmark(cfg, 3);
  for (auto kind : {SmootherKind::Cell, SmootherKind::Cutcell}) {
    set_smoother_kind(cfg, kind);
    Multigrid mg(setup.hierarchy, *setup.domain, setup.physics, cfg.smoother);
    mg.assemble_stokes();
    const Index n = mg.fine_system().n_x();
    const Vector a = random_vector(n, 1), b = random_vector(n, 2);
    const Vector lin = mg.precondition(2.0 * a - 3.0 * b) - (2.0 * mg.precondition(a) - 3.0 * mg.precondition(b));
    EXPECT_LT(lin.norm(), 1e-9 * mg.precondition(a).norm());
    Vector x;
    const SolveReport rep = mg.solve(mg.fine_system().rhs, x, 1e-9, 40);
    EXPECT_TRUE(rep.converged) << to_string(kind);
    EXPECT_LE(rep.iterations, 12) << to_string(kind);
    EXPECT_LT(residual_norm(mg.fine_system(), x, true), 1e-9);
    EXPECT_EQ(rep.abs_residual.size(), static_cast<std::size_t>(rep.iterations) + 1);
  }
}

TEST(Multigrid, TwoLevelBaseSolveIsExact) {
  RunConfig cfg = default_config();
  const auto setup = setup_benchmark(cfg, 1);
  Multigrid mg(setup.hierarchy, *setup.domain, setup.physics, cfg.smoother);
  mg.assemble_stokes();
  Vector x;
  const SolveReport rep = mg.solve(mg.fine_system().rhs, x, 1e-9, 5);
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(rep.iterations, 1);
}

TEST(Multigrid, ConfigValidation) {
  SmootherConfig s;
  s.omega = -0.1;
  EXPECT_THROW(s.validate(), ConfigError);
  s.omega = 0.5;
  s.pre_steps = -1;
  EXPECT_THROW(s.validate(), ConfigError);
}
