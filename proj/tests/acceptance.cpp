// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: prints one PASS/FAIL line per criterion and exits non-zero
// if any fails.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <Eigen/SparseLU>

#include "fcmg/bench.hpp"
#include "oracles.hpp"

using namespace fcmg;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [FAILED: " << what << "]";
    }
  }
};

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

// Shared mesh study: Stokes, GMG fixed point, rtol 1e-9, 3+3 sweeps, omega 2/3.
const BenchmarkReport& stokes_study() {
  static const BenchmarkReport rep = [] {
    RunConfig cfg = default_config();
    cfg.problem = ProblemKind::Stokes;
    cfg.linear.mode = LinearMode::GmgFixedPoint;
    cfg.linear.rtol = 1e-9;
    cfg.linear.max_iters = 100;
    cfg.smoother.omega = 2.0 / 3.0;
    cfg.smoother.pre_steps = 3;
    cfg.smoother.post_steps = 3;
    return run_mesh_study(cfg, {2, 3, 4, 5}, {SmootherKind::Cell, SmootherKind::Cutcell});
  }();
  return rep;
}

const SolveRow& study_row(int depth, const std::string& smoother) {
  for (const auto& r : stokes_study().rows)
    if (r.depth == depth && r.smoother == smoother) return r;
  throw std::runtime_error("missing study row");
}

struct NsRun {
  int depth = 0;
  SolveRow newton;
  SolveRow picard;
};

// Newton and Picard with BiCGSTAB + GMG on the prefixes of one depth-5 hierarchy.
const std::vector<NsRun>& ns_runs() {
  static const std::vector<NsRun> runs = [] {
    RunConfig cfg = default_config();
    cfg.problem = ProblemKind::NavierStokes;
    cfg.nonlinear.inner_reduction = 1e2;
    cfg.nonlinear.outer_tol = 1e-8;
    cfg.nonlinear.max_outer = 30;
    cfg.nonlinear.initial_guess = InitialGuess::Zero;
    cfg.nonlinear.compare_fixed_point = true;
    cfg.nonlinear_linear_mode = LinearMode::BicgstabGmg;
    const BenchmarkSetup setup = setup_benchmark(cfg, 5);
    std::vector<NsRun> out;
    for (int d = 3; d <= 5; ++d) {
      const MeshHierarchy prefix(setup.hierarchy.begin(), setup.hierarchy.begin() + d);
      Multigrid mg(prefix, *setup.domain, setup.physics, cfg.smoother);
      NsRun run;
      run.depth = d;
      for (auto lin : {Linearization::Newton, Linearization::Picard}) {
        RunConfig c = cfg;
        c.nonlinear.linearization = lin;
        Vector x;
        SolveRow row;
        try {
          row = solve_on(mg, c, x);
        } catch (const Error& e) {
          row.error = e.what();
        }
        (lin == Linearization::Newton ? run.newton : run.picard) = std::move(row);
      }
      out.push_back(std::move(run));
    }
    return out;
  }();
  return runs;
}

Verdict mesh_independence() {
  constexpr double kMaxRatio = 1.5;
  constexpr int kMaxIters = 60;
  Verdict v;
  int lo = 1 << 30, hi = 0;
  v.detail << "cell smoother iterations by depth:";
  for (int d = 2; d <= 5; ++d) {
    const SolveRow& r = study_row(d, "cell");
    v.detail << ' ' << d << ':' << r.iterations << " (" << r.n_dofs << " dofs)";
    v.check(r.converged, "depth " + std::to_string(d) + " did not converge " + r.error);
    v.check(r.iterations <= kMaxIters, "depth " + std::to_string(d) + " above 60 iterations");
    lo = std::min(lo, r.iterations);
    hi = std::max(hi, r.iterations);
  }
  v.detail << "; max/min " << fmt(static_cast<double>(hi) / lo);
  v.check(hi <= kMaxRatio * lo, "max/min above 1.5");
  return v;
}

Verdict smoother_tradeoff() {
  constexpr double kTotalSlack = 1.1;
  Verdict v;
  for (int d = 2; d <= 5; ++d) {
    const SolveRow& c = study_row(d, "cell");
    const SolveRow& k = study_row(d, "cutcell");
    const std::string D = "depth " + std::to_string(d);
    v.detail << D << ": red " << fmt(c.avg_reduction) << '/' << fmt(k.avg_reduction) << ", ms/it "
             << fmt(c.ms_per_iter) << '/' << fmt(k.ms_per_iter) << ", total " << fmt(c.total_ms) << '/'
             << fmt(k.total_ms) << "; ";
    v.check(c.converged && k.converged, D + " not converged");
    v.check(c.avg_reduction <= k.avg_reduction, D + " (a) cell reduction worse than cutcell");
    v.check(k.ms_per_iter < c.ms_per_iter, D + " (b) cutcell time per iteration not smaller");
    v.check(k.total_ms <= kTotalSlack * c.total_ms, D + " (c) cutcell total above 1.1 x cell");
    if (d == 5) v.check(k.total_ms < c.total_ms, D + " (c) cutcell total not strictly smaller");
  }
  v.detail << "(cell/cutcell)";
  return v;
}

Verdict navier_stokes() {
  constexpr int kMaxOuter = 12;
  constexpr int kPlateauAfter = 3;
  constexpr int kMaxPlateauInner = 5;
  constexpr int kPicardExtra = 4;
  Verdict v;
  for (const NsRun& r : ns_runs()) {
    const std::string D = "depth " + std::to_string(r.depth);
    const auto& n = r.newton;
    const auto& p = r.picard;
    v.detail << D << ": newton " << n.outer_iterations << " outer, inner {";
    for (std::size_t k = 1; k < n.nonlinear.steps.size(); ++k)
      v.detail << (k > 1 ? "," : "") << n.nonlinear.steps[k].inner_iters;
    v.detail << "}, picard " << p.outer_iterations << " outer; ";
    v.check(n.converged, D + " newton not converged " + n.error);
    v.check(n.outer_iterations <= kMaxOuter, D + " newton above 12 outer iterations");
    for (std::size_t k = kPlateauAfter + 1; k < n.nonlinear.steps.size(); ++k)
      v.check(n.nonlinear.steps[k].inner_iters <= kMaxPlateauInner,
              D + " newton inner count above 5 at outer step " + std::to_string(k));
    v.check(p.converged, D + " picard not converged " + p.error);
    v.check(p.outer_iterations <= n.outer_iterations + kPicardExtra,
            D + " picard needs " + std::to_string(p.outer_iterations - n.outer_iterations) +
                " more outer iterations than newton");
  }
  return v;
}

Verdict bicgstab_acceleration() {
  Verdict v;
  int systems = 0, worst_margin = 1 << 30, fp_unconverged = 0;
  for (const NsRun& r : ns_runs())
    for (const SolveRow* row : {&r.newton, &r.picard}) {
      const std::string what =
          "depth " + std::to_string(r.depth) + (row == &r.newton ? " newton" : " picard");
      v.check(!row->nonlinear.steps.empty(), what + " has no outer steps");
      for (std::size_t k = 1; k < row->nonlinear.steps.size(); ++k) {
        const OuterStep& s = row->nonlinear.steps[k];
        ++systems;
        if (s.fixed_point_iters < 0) {
          ++fp_unconverged;
          continue;
        }
        worst_margin = std::min(worst_margin, s.fixed_point_iters - s.inner_iters);
        v.check(s.inner_iters <= s.fixed_point_iters,
                what + " step " + std::to_string(k) + ": bicgstab " + std::to_string(s.inner_iters) +
                    " > fixed point " + std::to_string(s.fixed_point_iters));
      }
    }
  v.detail << systems << " linearized systems, min (fixed point - bicgstab) iterations " << worst_margin
           << ", fixed point unconverged on " << fp_unconverged;
  return v;
}

Verdict linearization_oracle() {
  constexpr double kEntryTol = 1e-12;
  constexpr double kSlopeTol = 0.1;
  Verdict v;
  RunConfig cfg = default_config();
  cfg.problem = ProblemKind::NavierStokes;
  const BenchmarkSetup setup = setup_benchmark(cfg, 2);
  const Discretization disc(setup.hierarchy.back(), *setup.domain, setup.physics);
  const Index n = disc.dofs().n_x();
  double worst = 0;
  for (unsigned seed : {101u, 102u, 103u}) {
    const Vector x = oracle::random_vector(n, seed);
    const SparseMatrix diff = disc.newton(x).matrix - disc.picard(x).matrix - disc.convection_matrix(x, true);
    worst = std::max(worst, oracle::max_abs(diff));
  }
  v.detail << "max |N - P - reactive| " << fmt(worst);
  v.check(worst <= kEntryTol, "entrywise mismatch above 1e-12");
  const Vector x = 0.5 * oracle::random_vector(n, 104);
  const Vector d = oracle::random_vector(n, 105);
  const Vector Jd = disc.newton(x).matrix * d;
  const Vector r0 = disc.residual(x);
  std::vector<double> errs;
  for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) errs.push_back(((r0 - disc.residual(x + eps * d)) / eps - Jd).norm() / Jd.norm());
  v.detail << "; FD slopes";
  for (std::size_t i = 1; i < errs.size(); ++i) {
    const double slope = std::log10(errs[i - 1] / errs[i]);
    v.detail << ' ' << fmt(slope);
    v.check(std::abs(slope - 1.0) <= kSlopeTol, "FD slope not first order");
  }
  return v;
}

Verdict cut_quadrature() {
  constexpr double kRelTol = 1e-3;
  constexpr int kDepth = 8;
  Verdict v;
  const BBox unit{{0, 0}, {1, 1}};
  const Vec2 c{0.5, 0.5};
  const double r = 0.3, cut = 0.6;
  const auto mesh = QuadtreeMesh::uniform(unit, 1, 1, 3);
  auto domain = [&](LevelSet phi) {
    ImplicitDomain d;
    d.embedding = unit;
    d.phi = std::move(phi);
    return d;
  };
  const ImplicitDomain rect_disk = domain(LevelSet::disk(c, r) & LevelSet::half_plane({0, 1}, cut));
  const ImplicitDomain disk = domain(LevelSet::disk(c, r));
  const ImplicitDomain holed = domain(!LevelSet::disk(c, r));
  const double area_exact = oracle::disk_below_line_area(c, r, cut);
  const double len_exact = 2 * std::numbers::pi * r;
  double prev_a = INFINITY, prev_l = INFINITY, err_a = 0, err_l = 0;
  for (int depth : {2, 4, 6, 8}) {
    double a = 0, l = 0;
    for (const auto& k : mesh.leaves()) {
      for (const auto& q : volume_quadrature(rect_disk, mesh.bbox(k), depth, 2, 0.0)) a += q.w * q.alpha;
      if (classify_cell(disk, mesh.bbox(k)) == CellClass::Cut)
        for (const auto& q : interface_quadrature(disk, mesh.bbox(k), depth, 3).points) l += q.w;
    }
    err_a = std::abs(a - area_exact) / area_exact;
    err_l = std::abs(l - len_exact) / len_exact;
    v.check(err_a <= prev_a, "area error increases at depth " + std::to_string(depth));
    v.check(err_l <= prev_l, "length error increases at depth " + std::to_string(depth));
    prev_a = err_a;
    prev_l = err_l;
  }
  double vol = 0, flux = 0;
  auto F = [](Vec2 p) { return Vec2{p.x * p.x, p.x * p.y}; };
  for (const auto& k : mesh.leaves()) {
    const BBox b = mesh.bbox(k);
    for (const auto& q : volume_quadrature(holed, b, kDepth, 2, 0.0)) vol += q.w * q.alpha * 3 * q.x.x;
    for (const auto& q : interface_quadrature(holed, b, kDepth, 3).points) flux += q.w * dot(F(q.x), q.normal);
    for (const auto& q : embedding_boundary_quadrature(holed, b, kDepth, 3)) flux += q.w * dot(F(q.x), q.normal);
  }
  const double err_div = std::abs(vol - flux) / std::abs(vol);
  v.detail << "depth 8 relative errors: area " << fmt(err_a) << ", circumference " << fmt(err_l)
           << ", divergence theorem " << fmt(err_div) << "; area/length monotone over depths 2,4,6,8";
  v.check(err_a <= kRelTol, "area error above 1e-3");
  v.check(err_l <= kRelTol, "circumference error above 1e-3");
  v.check(err_div <= kRelTol, "divergence theorem error above 1e-3");
  return v;
}

Verdict schwarz_oracle() {
  constexpr double kTol = 1e-12;
  constexpr Index kMaxDofs = 30;
  Verdict v;
  ImplicitDomain dom = oracle::unit_channel([](Vec2 p) { return Vec2{p.x * (1 - p.x), 0.0}; });
  const auto mesh = QuadtreeMesh::uniform(dom.embedding, 1, 1, 1);
  const Discretization disc(mesh, dom, PhysicsParams{});
  const SaddleSystem& sys = disc.stokes();
  v.check(sys.n_x() <= kMaxDofs, "system larger than 30 DoFs");
  const DenseMatrix L = DenseMatrix(sys.matrix);
  const Vector b = oracle::random_vector(sys.n_x(), 201);
  const Vector x0 = oracle::random_vector(sys.n_x(), 202);
  double worst = 0;
  for (auto kind : {SmootherKind::Cell, SmootherKind::Cutcell})
    for (auto weighting : {Weighting::UniformDamping, Weighting::Harmonic}) {
      SmootherConfig cfg;
      cfg.kind = kind;
      cfg.weighting = weighting;
      const auto sets = kind == SmootherKind::Cell ? cell_subdomains(disc, sys) : cutcell_subdomains(disc, sys);
      const SchwarzSmoother sm(sys.matrix, sets, cfg);
      const std::vector<int> mult = oracle::membership_count(sets, sys.n_x());
      v.check(sm.multiplicity() == mult, "multiplicity differs from brute-force count");
      std::vector<Vector> w;
      for (const auto& s : sets) {
        Vector wi(static_cast<Index>(s.size()));
        for (std::size_t a = 0; a < s.size(); ++a)
          wi[static_cast<Index>(a)] =
              weighting == Weighting::Harmonic ? 1.0 / mult[static_cast<std::size_t>(s[a])] : cfg.omega;
        w.push_back(wi);
      }
      Vector x = x0;
      sm.smooth(sys.matrix, x, b, 1);
      const Vector ref = oracle::dense_schwarz_sweep(L, b, x0, sets, w);
      worst = std::max(worst, (x - ref).lpNorm<Eigen::Infinity>() / ref.lpNorm<Eigen::Infinity>());
    }
  v.detail << sys.n_x() << " DoFs, 4 smoother configurations, max relative deviation " << fmt(worst);
  v.check(worst <= kTol, "sweep deviates from dense oracle by more than 1e-12");
  return v;
}

Verdict consistency() {
  constexpr double kCouetteTol = 1e-8;
  constexpr double kSymTol = 1e-10;
  constexpr double kGradedTransferTol = 1e-13;
  Verdict v;
  auto solve = [](const SaddleSystem& s) {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    const Eigen::SparseMatrix<double> A = s.matrix;
    lu.compute(A);
    return Vector(lu.solve(s.rhs));
  };
  const BBox unit{{0, 0}, {1, 1}};
  QuadtreeMesh graded = QuadtreeMesh::uniform(unit, 1, 1, 2);
  graded = refine(graded, {graded.leaf(0).id(), graded.leaf(5).id()});
  const auto couette = oracle::unit_channel([](Vec2 p) { return Vec2{p.y, 0.0}; });
  double couette_err = 0;
  for (const auto& mesh : {QuadtreeMesh::uniform(unit, 1, 1, 3), graded}) {
    PhysicsParams pp;
    pp.eta = 0.1;
    pp.convection = 0.0;
    const Discretization disc(mesh, couette, pp);
    const Vector exact = disc.interpolate([](Vec2 p) { return std::array<double, 3>{p.y, 0.0, 0.0}; });
    couette_err = std::max(couette_err, (solve(disc.stokes()) - exact).lpNorm<Eigen::Infinity>());
  }
  v.check(couette_err <= kCouetteTol, "Couette error above 1e-8");

  RunConfig zero_cfg = default_config();
  zero_cfg.boundaries = {{"all", BcType::Dirichlet, "1", "0", "0"}};
  const BenchmarkSetup zs = setup_benchmark(zero_cfg, 2);
  const Discretization zd(zs.hierarchy.back(), *zs.domain, zs.physics);
  const double zero_norm = solve(zd.stokes()).norm();
  v.check(zero_norm == 0.0, "zero data gives non-zero solution");

  const BenchmarkSetup bs = setup_benchmark(default_config(), 3);
  const Multigrid mg(bs.hierarchy, *bs.domain, bs.physics, SmootherConfig{});
  const SparseMatrix& L = mg.finest().disc->stokes().matrix;
  const double asym = oracle::max_abs(L - SparseMatrix(L.transpose())) / oracle::max_abs(L);
  v.check(asym <= kSymTol, "Stokes matrix asymmetry above 1e-10");

  auto linear = [](Vec2 p) { return std::array<double, 3>{1 + 2 * p.x - 3 * p.y, -0.5 + p.y, 4 * p.x + p.y}; };
  auto constant = [](Vec2) { return std::array<double, 3>{1.5, -2.0, 0.25}; };
  const auto dom = oracle::unit_channel([](Vec2) { return Vec2{}; });
  const auto cm = QuadtreeMesh::uniform(unit, 1, 1, 2), fm = QuadtreeMesh::uniform(unit, 1, 1, 3);
  const Discretization cd(cm, dom, PhysicsParams{}), fd(fm, dom, PhysicsParams{});
  const Transfer t = build_transfer(cd, fd);
  double uni_err = 0;
  for (const auto& f : {std::function<std::array<double, 3>(Vec2)>(linear), std::function<std::array<double, 3>(Vec2)>(constant)})
    uni_err = std::max(uni_err, (t.prolongation * cd.interpolate(f) - fd.interpolate(f)).lpNorm<Eigen::Infinity>());
  double rt_err = (SparseMatrix(t.restriction) - SparseMatrix(t.prolongation.transpose())).norm();
  double graded_err = 0;
  for (int l = 1; l < mg.depth(); ++l) {
    const Transfer& tl = mg.level(l).to_coarser;
    for (const auto& f : {std::function<std::array<double, 3>(Vec2)>(linear), std::function<std::array<double, 3>(Vec2)>(constant)})
      graded_err = std::max(graded_err, (tl.prolongation * mg.level(l - 1).disc->interpolate(f) -
                                         mg.level(l).disc->interpolate(f)).lpNorm<Eigen::Infinity>());
    rt_err = std::max(rt_err, (SparseMatrix(tl.restriction) - SparseMatrix(tl.prolongation.transpose())).norm());
  }
  v.check(uni_err == 0.0, "uniform transfer does not reproduce constants/linears exactly");
  v.check(graded_err <= kGradedTransferTol, "graded transfer reproduction error above rounding");
  v.check(rt_err == 0.0, "R differs from P^T");
  v.detail << "Couette " << fmt(couette_err) << ", zero data |x| " << zero_norm << ", asymmetry " << fmt(asym)
           << ", transfer error uniform " << uni_err << " / graded " << fmt(graded_err) << ", |R - P^T| "
           << rt_err;
  return v;
}

Verdict manufactured() {
  constexpr double kOrderU = 1.8;
  constexpr double kOrderP = 0.9;
  Verdict v;
  const auto rows = run_mms(default_config());
  v.detail << "orders (u, p) by level:";
  for (std::size_t i = 1; i < rows.size(); ++i)
    v.detail << ' ' << rows[i].level << ":(" << fmt(rows[i].order_u) << ", " << fmt(rows[i].order_p) << ')';
  v.check(rows.size() >= 2, "fewer than two levels");
  if (rows.size() >= 2) {
    v.check(rows.back().order_u >= kOrderU, "velocity order below 1.8");
    v.check(rows.back().order_p >= kOrderP, "pressure order below 0.9");
  }
  return v;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  Verdict v;
  const fs::path root = fs::temp_directory_path() / ("fcmg_acceptance_" + std::to_string(::getpid()));
  const std::string config = FCMG_SOURCE_DIR "/configs/cylinder_ns.ini";
  const std::vector<std::string> files{"report.csv", "levels.csv", "residuals.csv", "nonlinear.csv"};
  std::vector<std::string> outputs[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path out = root / std::to_string(run);
    fs::create_directories(out);
    const std::string cmd = std::string("\"") + FCMG_CLI + "\" solve --config \"" + config +
                            "\" --levels 3 --deterministic --out \"" + out.string() + "\" 2> /dev/null";
    const int status = std::system(cmd.c_str());
    v.check(status == 0, "run " + std::to_string(run) + " exited with status " + std::to_string(status));
    for (const auto& f : files) outputs[run].push_back(oracle::strip_timing(read_file(out / f)));
  }
  std::size_t lines = 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    v.check(!outputs[0][i].empty(), files[i] + " missing");
    v.check(outputs[0][i] == outputs[1][i], files[i] + " differs between runs");
    lines += static_cast<std::size_t>(std::count(outputs[0][i].begin(), outputs[0][i].end(), '\n'));
  }
  v.detail << "two CLI runs (Navier-Stokes, depth 3): " << lines << " non-timing CSV lines compared";
  std::error_code ec;
  fs::remove_all(root, ec);
  return v;
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"mesh independence", mesh_independence},
      {"smoother trade-off", smoother_tradeoff},
      {"Navier-Stokes Re 20", navier_stokes},
      {"BiCGSTAB acceleration", bicgstab_acceleration},
      {"linearization oracle", linearization_oracle},
      {"cut quadrature", cut_quadrature},
      {"Schwarz oracle", schwarz_oracle},
      {"consistency suite", consistency},
      {"manufactured solution", manufactured},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " [FAILED: exception " << e.what() << "]";
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
              << "): " << v.detail.str() << " (" << fmt(s) << " s)" << std::endl;
  }
  std::cout << criteria.size() - static_cast<std::size_t>(failures) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
