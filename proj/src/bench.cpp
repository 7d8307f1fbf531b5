// SPDX-License-Identifier: Apache-2.0
#include "fcmg/bench.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "fcmg/expression.hpp"
#include "fcmg/quadrature.hpp"

namespace fcmg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

double eval_number(const std::string& text, const std::map<std::string, double>& constants) {
  return Expression::parse(text, {}, constants)(std::span<const double>{});
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

int parse_int(const std::string& v, const std::map<std::string, double>& constants) {
  const double d = eval_number(v, constants);
  if (d != std::floor(d)) throw ConfigError("expected an integer, got '" + v + "'");
  return static_cast<int>(d);
}

struct Primitive {
  LevelSet phi;
  std::optional<std::pair<Vec2, double>> disk;
};

Primitive parse_primitive(const std::string& spec, const std::map<std::string, double>& constants) {
  const auto w = words(spec);
  if (w.empty()) throw ConfigError("empty primitive");
  std::vector<double> a;
  for (std::size_t k = 1; k < w.size(); ++k) a.push_back(eval_number(w[k], constants));
  auto need = [&](std::size_t n) {
    if (a.size() != n)
      throw ConfigError("primitive '" + w[0] + "' expects " + std::to_string(n) + " arguments");
  };
  Primitive p;
  if (w[0] == "disk") {
    need(3);
    if (!(a[2] > 0)) throw ConfigError("disk radius must be positive");
    p.phi = LevelSet::disk({a[0], a[1]}, a[2]);
    p.disk = std::make_pair(Vec2{a[0], a[1]}, a[2]);
  } else if (w[0] == "rectangle") {
    need(4);
    p.phi = LevelSet::rectangle(BBox{{a[0], a[1]}, {a[2], a[3]}});
  } else if (w[0] == "halfplane") {
    need(3);
    p.phi = LevelSet::half_plane({a[0], a[1]}, a[2]);
  } else {
    throw ConfigError("unknown primitive kind '" + w[0] + "'");
  }
  return p;
}

SmootherKind parse_smoother(const std::string& v) {
  if (v == "cell") return SmootherKind::Cell;
  if (v == "cutcell") return SmootherKind::Cutcell;
  throw ConfigError("smoother must be cell or cutcell, got '" + v + "'");
}

LinearMode parse_mode(const std::string& v) {
  if (v == "gmg") return LinearMode::GmgFixedPoint;
  if (v == "bicgstab") return LinearMode::BicgstabGmg;
  throw ConfigError("linear mode must be gmg or bicgstab, got '" + v + "'");
}

std::string mode_name(LinearMode m) { return m == LinearMode::GmgFixedPoint ? "gmg" : "bicgstab"; }

std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

constexpr double kPi = std::numbers::pi;

struct Manufactured {
  double eta;
  std::array<double, 3> value(Vec2 p) const {
    const double sx = std::sin(kPi * p.x), cx = std::cos(kPi * p.x);
    const double sy = std::sin(kPi * p.y), cy = std::cos(kPi * p.y);
    return {sx * sy, cx * cy, sx * cy};
  }
  // Rows d/dx, d/dy of (u_x, u_y).
  std::array<std::array<double, 2>, 2> gradient(Vec2 p) const {
    const double sx = std::sin(kPi * p.x), cx = std::cos(kPi * p.x);
    const double sy = std::sin(kPi * p.y), cy = std::cos(kPi * p.y);
    return {{{kPi * cx * sy, kPi * sx * cy}, {-kPi * sx * cy, -kPi * cx * sy}}};
  }
  Vec2 force(Vec2 p) const {
    const double sx = std::sin(kPi * p.x), cx = std::cos(kPi * p.x);
    const double sy = std::sin(kPi * p.y), cy = std::cos(kPi * p.y);
    const double k = 2 * kPi * kPi * eta;
    return {k * sx * sy + kPi * cx * cy, k * cx * cy - kPi * sx * sy};
  }
  Vec2 traction(Vec2 p, Vec2 n) const {
    const auto g = gradient(p);
    const double pr = value(p)[2];
    return {eta * (g[0][0] * n.x + g[0][1] * n.y) - pr * n.x,
            eta * (g[1][0] * n.x + g[1][1] * n.y) - pr * n.y};
  }
};

Vec2 boundary_normal(const ImplicitDomain& domain, Vec2 p) {
  const BBox& b = domain.embedding;
  const double tol = 1e-12 * b.diameter();
  if (std::abs(p.x - b.lo.x) <= tol) return {-1, 0};
  if (std::abs(p.x - b.hi.x) <= tol) return {1, 0};
  if (std::abs(p.y - b.lo.y) <= tol) return {0, -1};
  if (std::abs(p.y - b.hi.y) <= tol) return {0, 1};
  const Vec2 g = level_set_gradient(domain.phi, p, 1e-8 * b.diameter());
  return (1.0 / norm(g)) * g;
}

} // namespace

std::string to_string(SmootherKind kind) { return kind == SmootherKind::Cell ? "cell" : "cutcell"; }
std::string to_string(ProblemKind kind) {
  return kind == ProblemKind::Stokes ? "stokes" : "navier-stokes";
}

void RunConfig::validate() const {
  if (!(box.width() > 0 && box.height() > 0)) throw ConfigError("embedding box is empty");
  if (roots_x < 1 || roots_y < 1) throw ConfigError("root counts must be >= 1");
  if (base_level < 0 || base_level > 12) throw ConfigError("base level must lie in [0, 12]");
  if (depth < 1) throw ConfigError("hierarchy depth must be >= 1");
  for (const auto& r : refine)
    if (!(r.d0 > 0)) throw ConfigError("refine rule '" + r.name + "' needs a positive distance");
  if (boundaries.empty()) throw ConfigError("no boundary conditions defined");
  physics.validate();
  smoother.validate();
  linear.validate();
  nonlinear.validate();
  if (mms.levels.size() < 2) throw ConfigError("mms needs at least two levels");
}

RunConfig default_config() {
  RunConfig c;
  c.constants = {{"L", 2.2}, {"H", 0.41}, {"ubar", 0.3}};
  c.primitives = {{"cyl", "disk 0.2 0.2 0.05"}};
  c.region = "!cyl";
  c.boundaries = {
      {"cylinder", BcType::Dirichlet, "immersed", "0", "0"},
      {"inlet", BcType::Dirichlet, "x <= 1e-9", "4*ubar*y*(H-y)/H^2", "0"},
      {"outlet", BcType::Neumann, "x >= L - 1e-9", "0", "0"},
      {"walls", BcType::Dirichlet, "1", "0", "0"},
  };
  c.refine = {
      {"cylinder", "abs(sqrt((x-0.2)^2 + (y-0.2)^2) - 0.05)", 0.4, -1},
      {"walls", "min(y, H - y)", 0.2, -1},
  };
  c.smoother.kind = SmootherKind::Cell;
  c.smoother.weighting = Weighting::UniformDamping;
  c.linear.rtol = 1e-9;
  c.linear.max_iters = 100;
  return c;
}

void set_smoother_kind(RunConfig& cfg, SmootherKind kind) {
  cfg.smoother.kind = kind;
  if (cfg.auto_weighting)
    cfg.smoother.weighting = kind == SmootherKind::Cell ? Weighting::UniformDamping : Weighting::Harmonic;
}

RunConfig parse_config(std::istream& in, RunConfig cfg) {
  std::string section;
  std::string line;
  int lineno = 0;
  bool fresh_primitives = true, fresh_boundaries = true, fresh_refine = true;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    try {
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string val = trim(line.substr(eq + 1));
      const auto& K = cfg.constants;
      auto num = [&] { return eval_number(val, K); };
      auto unknown = [&] { throw ConfigError("unknown key '" + key + "' in [" + section + "]"); };

      if (section == "constants") {
        cfg.constants[key] = num();
      } else if (section == "domain") {
        if (key == "box") {
          const auto w = words(val);
          if (w.size() != 4) throw ConfigError("box expects x0 y0 x1 y1");
          cfg.box = BBox{{eval_number(w[0], K), eval_number(w[1], K)},
                         {eval_number(w[2], K), eval_number(w[3], K)}};
        } else if (key == "roots") {
          const auto w = words(val);
          if (w.size() != 2) throw ConfigError("roots expects nx ny");
          cfg.roots_x = parse_int(w[0], K);
          cfg.roots_y = parse_int(w[1], K);
        } else if (key.rfind("primitive.", 0) == 0) {
          if (fresh_primitives) cfg.primitives.clear();
          fresh_primitives = false;
          cfg.primitives.emplace_back(key.substr(10), val);
        } else if (key == "region") {
          cfg.region = val;
        } else if (key.rfind("bc.", 0) == 0) {
          if (fresh_boundaries) cfg.boundaries.clear();
          fresh_boundaries = false;
          const auto f = split(val, ';');
          if (f.size() != 4) throw ConfigError("bc expects type; where; vx; vy");
          BoundarySpec b;
          b.name = key.substr(3);
          if (f[0] == "dirichlet") b.type = BcType::Dirichlet;
          else if (f[0] == "neumann") b.type = BcType::Neumann;
          else throw ConfigError("bc type must be dirichlet or neumann");
          b.where = f[1];
          b.vx = f[2];
          b.vy = f[3];
          cfg.boundaries.push_back(b);
        } else if (key == "force") {
          const auto f = split(val, ';');
          if (f.size() != 2) throw ConfigError("force expects fx; fy");
          cfg.force_x = f[0];
          cfg.force_y = f[1];
        } else {
          unknown();
        }
      } else if (section == "mesh") {
        if (key == "base_level") cfg.base_level = parse_int(val, K);
        else if (key == "depth") cfg.depth = parse_int(val, K);
        else if (key.rfind("refine.", 0) == 0) {
          if (fresh_refine) cfg.refine.clear();
          fresh_refine = false;
          const auto f = split(val, ';');
          if (f.size() != 2 && f.size() != 3) throw ConfigError("refine expects distance; d0 [; max_steps]");
          RefineRule r{key.substr(7), f[0], eval_number(f[1], K), -1};
          if (f.size() == 3) r.max_steps = parse_int(f[2], K);
          cfg.refine.push_back(r);
        } else unknown();
      } else if (section == "physics") {
        auto& p = cfg.physics;
        if (key == "problem") {
          if (val == "stokes") cfg.problem = ProblemKind::Stokes;
          else if (val == "navier-stokes") cfg.problem = ProblemKind::NavierStokes;
          else throw ConfigError("problem must be stokes or navier-stokes");
        } else if (key == "eta") p.eta = num();
        else if (key == "beta") p.beta = num();
        else if (key == "nitsche") p.nitsche_factor = num();
        else if (key == "alpha_out") p.alpha_out = num();
        else if (key == "integration_depth") p.integration_depth = parse_int(val, K);
        else if (key == "volume_order") p.volume_order = parse_int(val, K);
        else if (key == "segment_order") p.segment_order = parse_int(val, K);
        else if (key == "alpha_weighted_stabilization") p.alpha_weighted_stabilization = parse_bool(val);
        else if (key == "fictitious_convection") p.fictitious_convection = parse_bool(val);
        else unknown();
      } else if (section == "solver") {
        if (key == "smoother") set_smoother_kind(cfg, parse_smoother(val));
        else if (key == "weighting") {
          if (val == "auto") {
            cfg.auto_weighting = true;
            set_smoother_kind(cfg, cfg.smoother.kind);
          } else if (val == "uniform") {
            cfg.auto_weighting = false;
            cfg.smoother.weighting = Weighting::UniformDamping;
          } else if (val == "harmonic") {
            cfg.auto_weighting = false;
            cfg.smoother.weighting = Weighting::Harmonic;
          } else throw ConfigError("weighting must be auto, uniform or harmonic");
        } else if (key == "omega") cfg.smoother.omega = num();
        else if (key == "pre") cfg.smoother.pre_steps = parse_int(val, K);
        else if (key == "post") cfg.smoother.post_steps = parse_int(val, K);
        else if (key == "symmetric") cfg.smoother.symmetric = parse_bool(val);
        else if (key == "mode") cfg.linear.mode = parse_mode(val);
        else if (key == "rtol") cfg.linear.rtol = num();
        else if (key == "max_iters") cfg.linear.max_iters = parse_int(val, K);
        else if (key == "cycles") cfg.linear.cycles = parse_int(val, K);
        else unknown();
      } else if (section == "nonlinear") {
        auto& n = cfg.nonlinear;
        if (key == "linearization") {
          if (val == "newton") n.linearization = Linearization::Newton;
          else if (val == "picard") n.linearization = Linearization::Picard;
          else throw ConfigError("linearization must be newton or picard");
        } else if (key == "inner_reduction") n.inner_reduction = num();
        else if (key == "outer_tol") n.outer_tol = num();
        else if (key == "max_outer") n.max_outer = parse_int(val, K);
        else if (key == "initial_guess") {
          if (val == "zero") n.initial_guess = InitialGuess::Zero;
          else if (val == "stokes") n.initial_guess = InitialGuess::StokesSolution;
          else throw ConfigError("initial_guess must be zero or stokes");
        } else if (key == "linear_mode") cfg.nonlinear_linear_mode = parse_mode(val);
        else if (key == "compare_fixed_point") n.compare_fixed_point = parse_bool(val);
        else unknown();
      } else if (section == "output") {
        if (key == "dir") cfg.out_dir = val;
        else if (key == "deterministic") cfg.deterministic = parse_bool(val);
        else if (key == "seed") cfg.seed = static_cast<unsigned>(parse_int(val, K));
        else if (key == "vtk") cfg.write_vtk = parse_bool(val);
        else unknown();
      } else if (section == "mms") {
        if (key == "levels") {
          cfg.mms.levels.clear();
          for (const auto& w : words(val)) cfg.mms.levels.push_back(parse_int(w, K));
        } else if (key == "eta") cfg.mms.eta = num();
        else if (key == "beta") cfg.mms.beta = num();
        else unknown();
      } else {
        throw ConfigError("key outside a known section: '" + key + "'");
      }
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  return parse_config(in);
}

ImplicitDomain build_domain(const RunConfig& cfg) {
  ImplicitDomain d;
  d.embedding = cfg.box;
  std::map<std::string, LevelSet> prims;
  for (const auto& [name, spec] : cfg.primitives) {
    const Primitive p = parse_primitive(spec, cfg.constants);
    if (p.disk) {
      const auto [c, r] = *p.disk;
      const BBox& b = cfg.box;
      if (!(c.x - r > b.lo.x && c.x + r < b.hi.x && c.y - r > b.lo.y && c.y + r < b.hi.y))
        throw ConfigError("disk '" + name + "' does not lie strictly inside the embedding box");
    }
    prims[name] = p.phi;
  }
  d.phi = cfg.region.empty() ? LevelSet([](Vec2) { return -1.0; }) : parse_csg(cfg.region, prims);
  for (const auto& s : cfg.boundaries) {
    BoundaryCondition bc;
    bc.name = s.name;
    bc.type = s.type;
    const Expression where = Expression::parse(s.where, {"x", "y", "immersed"}, cfg.constants);
    const Expression vx = Expression::parse(s.vx, {"x", "y"}, cfg.constants);
    const Expression vy = Expression::parse(s.vy, {"x", "y"}, cfg.constants);
    bc.applies = [where](Vec2 p, bool immersed) {
      const double v[3] = {p.x, p.y, immersed ? 1.0 : 0.0};
      return where(v) != 0.0;
    };
    bc.value = [vx, vy](Vec2 p) { return Vec2{vx(p.x, p.y), vy(p.x, p.y)}; };
    d.conditions.push_back(std::move(bc));
  }
  return d;
}

PhysicsParams build_physics(const RunConfig& cfg) {
  PhysicsParams p = cfg.physics;
  p.convection = cfg.problem == ProblemKind::NavierStokes ? 1.0 : 0.0;
  if (cfg.force_x != "0" || cfg.force_y != "0") {
    const Expression fx = Expression::parse(cfg.force_x, {"x", "y"}, cfg.constants);
    const Expression fy = Expression::parse(cfg.force_y, {"x", "y"}, cfg.constants);
    p.body_force = [fx, fy](Vec2 q) { return Vec2{fx(q.x, q.y), fy(q.x, q.y)}; };
  }
  p.validate();
  return p;
}

QuadtreeMesh build_fine_mesh(const RunConfig& cfg, int depth) {
  if (depth < 1) throw ConfigError("hierarchy depth must be >= 1");
  std::vector<std::pair<Expression, const RefineRule*>> rules;
  for (const auto& r : cfg.refine)
    rules.emplace_back(Expression::parse(r.distance, {"x", "y"}, cfg.constants), &r);
  QuadtreeMesh m = QuadtreeMesh::uniform(cfg.box, cfg.roots_x, cfg.roots_y, cfg.base_level);
  for (int step = 1; step < depth; ++step) {
    std::set<std::uint64_t> marks;
    const int level = cfg.base_level + step - 1;
    for (const auto& k : m.leaves()) {
      if (k.level != level) continue;
      const BBox b = m.bbox(k);
      const Vec2 c = b.center();
      for (const auto& [dist, rule] : rules) {
        if (rule->max_steps >= 0 && step > rule->max_steps) continue;
        const double limit = rule->d0 * std::ldexp(1.0, -(step - 1));
        if (dist(c.x, c.y) - 0.5 * b.diameter() < limit) {
          marks.insert(k.id());
          break;
        }
      }
    }
    if (marks.empty())
      throw HierarchyError("refinement step " + std::to_string(step) + " marked no cells", step);
    m = refine(m, marks);
  }
  return m;
}

BenchmarkSetup setup_benchmark(const RunConfig& cfg, int depth) {
  BenchmarkSetup s;
  s.domain = std::make_shared<const ImplicitDomain>(build_domain(cfg));
  s.physics = build_physics(cfg);
  s.hierarchy = build_hierarchy(build_fine_mesh(cfg, depth), depth);
  return s;
}

std::optional<double> reynolds_number(const RunConfig& cfg) {
  const auto u = cfg.constants.find("ubar");
  if (u == cfg.constants.end()) return std::nullopt;
  for (const auto& [name, spec] : cfg.primitives) {
    const Primitive p = parse_primitive(spec, cfg.constants);
    if (p.disk) return (2.0 / 3.0) * u->second * 2.0 * p.disk->second / cfg.physics.eta;
  }
  return std::nullopt;
}

bool BenchmarkReport::all_converged() const {
  return std::all_of(rows.begin(), rows.end(), [](const SolveRow& r) { return r.converged; });
}

std::vector<LevelRow> level_table(const Multigrid& mg) {
  std::vector<LevelRow> out;
  for (int l = 0; l < mg.depth(); ++l) {
    const Level& lv = mg.level(l);
    out.push_back({l + 1, lv.mesh->num_leaves(), lv.disc->dofs().n_x(),
                   lv.disc->geometry().num_cut_cells(), lv.mesh->hanging_constraints().size()});
  }
  return out;
}

SolveRow solve_on(Multigrid& mg, const RunConfig& cfg, Vector& x) {
  SolveRow row;
  row.problem = to_string(cfg.problem);
  row.smoother = to_string(mg.smoother_config().kind);
  row.depth = mg.depth();
  row.n_cells = mg.finest().mesh->num_leaves();
  row.n_dofs = mg.finest().disc->dofs().n_x();
  const double setup0 = mg.phase_times().setup_ms;
  const PhaseTimes before = mg.phase_times();

  if (cfg.problem == ProblemKind::Stokes) {
    row.mode = mode_name(cfg.linear.mode);
    row.linear = solve_linear(mg, mg.fine_system().rhs, x, cfg.linear);
    row.iterations = row.linear.iterations;
    row.converged = row.linear.converged;
    row.diverged = row.linear.diverged;
    row.avg_reduction = row.linear.average_reduction();
    row.final_rel_residual = row.linear.rel_residual.back();
    row.total_ms = row.linear.total_ms;
  } else {
    LinearSolverConfig lc = cfg.linear;
    lc.mode = cfg.nonlinear_linear_mode;
    row.mode = mode_name(lc.mode);
    row.nonlinear = nonlinear_solve(mg, x, cfg.nonlinear, lc);
    row.outer_iterations = row.nonlinear.outer_iterations();
    row.converged = row.nonlinear.converged;
    row.diverged = !row.nonlinear.converged;
    double log_sum = 0;
    for (const auto& s : row.nonlinear.inner) {
      row.iterations += s.iterations;
      if (s.iterations > 0 && s.abs_residual.front() > 0)
        log_sum += std::log(s.abs_residual.back() / s.abs_residual.front());
    }
    row.avg_reduction = row.iterations > 0 ? std::exp(log_sum / row.iterations) : 0.0;
    const auto& st = row.nonlinear.steps;
    row.final_rel_residual =
        st.front().nonlinear_residual > 0 ? st.back().nonlinear_residual / st.front().nonlinear_residual : 0.0;
    row.total_ms = row.nonlinear.total_ms;
  }
  row.ms_per_iter = row.iterations > 0 ? row.total_ms / row.iterations : 0.0;
  const PhaseTimes& now = mg.phase_times();
  row.setup_ms = now.setup_ms - setup0;
  row.phases.smoothing_ms = now.smoothing_ms - before.smoothing_ms;
  row.phases.transfer_ms = now.transfer_ms - before.transfer_ms;
  row.phases.base_ms = now.base_ms - before.base_ms;
  row.phases.residual_ms = now.residual_ms - before.residual_ms;
  if (mg.depth() > 1) {
    row.n_subdomains = mg.finest().smoother.size();
    row.mean_subdomain_dim = mg.finest().smoother.mean_dimension();
  }
  row.mass_balance = mass_balance(*mg.finest().disc, x);
  return row;
}

BenchmarkReport run_solve(const RunConfig& cfg) {
  cfg.validate();
  BenchmarkReport rep;
  BenchmarkSetup setup = setup_benchmark(cfg, cfg.depth);
  rep.domain = setup.domain;
  rep.multigrid = std::make_shared<Multigrid>(setup.hierarchy, *setup.domain, setup.physics, cfg.smoother);
  rep.levels = level_table(*rep.multigrid);
  SolveRow row;
  try {
    row = solve_on(*rep.multigrid, cfg, rep.solution);
  } catch (const SolverError& e) {
    row.problem = to_string(cfg.problem);
    row.smoother = to_string(cfg.smoother.kind);
    row.depth = cfg.depth;
    row.error = e.what();
    row.diverged = true;
  }
  rep.rows.push_back(std::move(row));
  return rep;
}

BenchmarkReport run_mesh_study(const RunConfig& cfg, const std::vector<int>& depths,
                               const std::vector<SmootherKind>& smoothers) {
  cfg.validate();
  if (depths.empty() || smoothers.empty()) throw ConfigError("study needs depths and smoothers");
  if (!std::is_sorted(depths.begin(), depths.end()) || depths.front() < 1)
    throw ConfigError("study depths must be ascending and >= 1");
  BenchmarkReport rep;
  BenchmarkSetup setup = setup_benchmark(cfg, depths.back());
  rep.domain = setup.domain;
  for (int d : depths) {
    const MeshHierarchy prefix(setup.hierarchy.begin(), setup.hierarchy.begin() + d);
    RunConfig c = cfg;
    set_smoother_kind(c, smoothers.front());
    auto mg = std::make_shared<Multigrid>(prefix, *setup.domain, setup.physics, c.smoother);
    for (std::size_t s = 0; s < smoothers.size(); ++s) {
      set_smoother_kind(c, smoothers[s]);
      SolveRow row;
      Vector x;
      try {
        if (s > 0) {
          if (c.problem == ProblemKind::Stokes) mg->assemble_stokes();
          mg->set_smoother(c.smoother);
        }
        row = solve_on(*mg, c, x);
      } catch (const Error& e) {
        row.problem = to_string(c.problem);
        row.smoother = to_string(smoothers[s]);
        row.depth = d;
        row.n_cells = prefix.back().num_leaves();
        row.error = e.what();
        row.diverged = true;
      }
      if (d == depths.back() && s == 0) {
        rep.multigrid = mg;
        rep.solution = x;
      }
      rep.rows.push_back(std::move(row));
    }
    if (d == depths.back()) rep.levels = level_table(*mg);
  }
  return rep;
}

std::vector<MmsRow> run_mms(const RunConfig& cfg) {
  cfg.validate();
  const Manufactured ms{cfg.mms.eta};
  ImplicitDomain domain = build_domain(cfg);
  for (auto& bc : domain.conditions) {
    if (bc.type == BcType::Dirichlet) {
      bc.value = [ms](Vec2 p) {
        const auto v = ms.value(p);
        return Vec2{v[0], v[1]};
      };
    } else {
      const ImplicitDomain* dp = &domain;
      bc.value = [ms, dp](Vec2 p) { return ms.traction(p, boundary_normal(*dp, p)); };
    }
  }
  PhysicsParams pp = cfg.physics;
  pp.eta = cfg.mms.eta;
  pp.beta = cfg.mms.beta;
  pp.convection = 0.0;
  pp.body_force = [ms](Vec2 p) { return ms.force(p); };
  pp.validate();

  std::vector<MmsRow> rows;
  for (int level : cfg.mms.levels) {
    const QuadtreeMesh mesh = QuadtreeMesh::uniform(cfg.box, cfg.roots_x, cfg.roots_y, level);
    const Discretization disc(mesh, domain, pp);
    const SaddleSystem& sys = disc.stokes();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    const Eigen::SparseMatrix<double> A = sys.matrix;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw FactorizationError("mms direct solve failed");
    const Vector x = lu.solve(sys.rhs);

    MmsRow row;
    row.level = level;
    row.n_dofs = sys.n_x();
    double eu = 0, ep = 0;
    for (std::size_t c = 0; c < mesh.num_leaves(); ++c) {
      row.h = std::max(row.h, mesh.bbox(mesh.leaf(c)).diameter());
      for (const auto& q : disc.geometry().volume[c]) {
        if (q.alpha != 1.0) continue;
        const auto uh = disc.evaluate(x, q.x);
        const auto ue = ms.value(q.x);
        eu += q.w * ((uh[0] - ue[0]) * (uh[0] - ue[0]) + (uh[1] - ue[1]) * (uh[1] - ue[1]));
        ep += q.w * (uh[2] - ue[2]) * (uh[2] - ue[2]);
      }
    }
    row.error_u = std::sqrt(eu);
    row.error_p = std::sqrt(ep);
    const Vector xi = disc.interpolate([&](Vec2 p) { return ms.value(p); });
    row.interpolant_residual = residual_norm(sys, xi, true);
    if (!rows.empty()) {
      const MmsRow& prev = rows.back();
      const double dh = std::log(prev.h / row.h);
      row.order_u = std::log(prev.error_u / row.error_u) / dh;
      row.order_p = std::log(prev.error_p / row.error_p) / dh;
    }
    rows.push_back(row);
  }
  return rows;
}

double boundary_flux(const Discretization& disc, const Vector& state, bool left) {
  const QuadtreeMesh& mesh = disc.mesh();
  const BBox& box = mesh.root_bbox();
  const double x = left ? box.lo.x : box.hi.x;
  std::vector<double> ys;
  for (std::size_t n = 0; n < mesh.num_nodes(); ++n) {
    const Vec2 p = mesh.node_point(n);
    if (p.x == x) ys.push_back(p.y);
  }
  std::sort(ys.begin(), ys.end());
  const GaussRule& g = gauss_rule(2);
  double flux = 0;
  for (std::size_t k = 0; k + 1 < ys.size(); ++k) {
    const double y0 = ys[k], y1 = ys[k + 1];
    for (int j = 0; j < g.n; ++j) {
      const double y = y0 + g.points[j] * (y1 - y0);
      flux += g.weights[j] * (y1 - y0) * disc.evaluate(state, {x, y})[0];
    }
  }
  return flux;
}

double mass_balance(const Discretization& disc, const Vector& state) {
  const double in = boundary_flux(disc, state, true);
  const double out = boundary_flux(disc, state, false);
  if (in == 0.0) return out == 0.0 ? 0.0 : std::abs(out);
  return std::abs(in - out) / std::abs(in);
}

void write_vtk(std::ostream& os, const Discretization& disc, const Vector& state) {
  const QuadtreeMesh& mesh = disc.mesh();
  const std::size_t nn = mesh.num_nodes(), nc = mesh.num_leaves();
  const auto prec = os.precision(17);
  os << "# vtk DataFile Version 3.0\nfcmg solution\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << nn << " double\n";
  for (std::size_t n = 0; n < nn; ++n) {
    const Vec2 p = mesh.node_point(n);
    os << p.x << ' ' << p.y << " 0\n";
  }
  os << "CELLS " << nc << ' ' << 5 * nc << '\n';
  for (std::size_t c = 0; c < nc; ++c) {
    const auto& v = mesh.cell_nodes(c);
    os << "4 " << v[0] << ' ' << v[1] << ' ' << v[3] << ' ' << v[2] << '\n';
  }
  os << "CELL_TYPES " << nc << '\n';
  for (std::size_t c = 0; c < nc; ++c) os << "9\n";
  const auto& geo = disc.geometry();
  os << "CELL_DATA " << nc << "\nSCALARS alpha double 1\nLOOKUP_TABLE default\n";
  for (std::size_t c = 0; c < nc; ++c) {
    switch (geo.classes[c]) {
    case CellClass::Inside: os << 1.0 << '\n'; break;
    case CellClass::Outside: os << disc.params().alpha_out << '\n'; break;
    case CellClass::Cut: os << geo.inside_fraction[c] << '\n'; break;
    }
  }
  os << "SCALARS level int 1\nLOOKUP_TABLE default\n";
  for (std::size_t c = 0; c < nc; ++c) os << mesh.leaf(c).level << '\n';
  os << "POINT_DATA " << nn << "\nVECTORS velocity double\n";
  std::vector<std::array<double, 3>> vals(nn);
  for (std::size_t n = 0; n < nn; ++n) vals[n] = disc.dofs().nodal_values(state, n);
  for (const auto& v : vals) os << v[0] << ' ' << v[1] << " 0\n";
  os << "SCALARS pressure double 1\nLOOKUP_TABLE default\n";
  for (const auto& v : vals) os << v[2] << '\n';
  os.precision(prec);
}

void write_vtk(const std::filesystem::path& path, const Discretization& disc, const Vector& state) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  write_vtk(os, disc, state);
  if (!os) throw InputError("failed writing " + path.string());
}

const std::vector<std::string>& timing_columns() {
  static const std::vector<std::string> cols{"ms_per_iter",  "total_ms",    "setup_ms",
                                             "smoothing_ms", "transfer_ms", "base_ms",
                                             "elapsed_ms"};
  return cols;
}

void write_report_csv(std::ostream& os, const std::vector<SolveRow>& rows) {
  os << "problem,smoother,depth,n_cells,n_dofs,mode,iterations,outer_iterations,converged,"
        "diverged,avg_reduction,final_rel_residual,mass_balance,n_subdomains,mean_subdomain_dim,"
        "ms_per_iter,total_ms,setup_ms,smoothing_ms,transfer_ms,base_ms,error\n";
  const auto prec = os.precision(17);
  for (const auto& r : rows)
    os << r.problem << ',' << r.smoother << ',' << r.depth << ',' << r.n_cells << ',' << r.n_dofs
       << ',' << r.mode << ',' << r.iterations << ',' << r.outer_iterations << ','
       << (r.converged ? 1 : 0) << ',' << (r.diverged ? 1 : 0) << ',' << r.avg_reduction << ','
       << r.final_rel_residual << ',' << r.mass_balance << ',' << r.n_subdomains << ','
       << r.mean_subdomain_dim << ',' << r.ms_per_iter << ',' << r.total_ms << ',' << r.setup_ms
       << ',' << r.phases.smoothing_ms << ',' << r.phases.transfer_ms << ',' << r.phases.base_ms
       << ',' << csv_safe(r.error) << '\n';
  os.precision(prec);
}

void write_levels_csv(std::ostream& os, const std::vector<LevelRow>& levels) {
  os << "level,n_c,n_dof,n_cut_cells,n_hanging\n";
  for (const auto& l : levels)
    os << l.level << ',' << l.n_cells << ',' << l.n_dofs << ',' << l.n_cut_cells << ','
       << l.n_hanging << '\n';
}

void write_residuals_csv(std::ostream& os, const std::vector<SolveRow>& rows) {
  os << "problem,smoother,depth,outer_iter,iteration,abs_residual,rel_residual,elapsed_ms\n";
  const auto prec = os.precision(17);
  auto emit = [&](const SolveRow& r, int outer, const SolveReport& s) {
    for (std::size_t k = 0; k < s.abs_residual.size(); ++k)
      os << r.problem << ',' << r.smoother << ',' << r.depth << ',' << outer << ',' << k << ','
         << s.abs_residual[k] << ',' << s.rel_residual[k] << ',' << s.elapsed_ms[k] << '\n';
  };
  for (const auto& r : rows) {
    if (r.problem == "stokes") emit(r, 0, r.linear);
    else
      for (std::size_t k = 0; k < r.nonlinear.inner.size(); ++k)
        emit(r, static_cast<int>(k) + 1, r.nonlinear.inner[k]);
  }
  os.precision(prec);
}

void write_nonlinear_csv(std::ostream& os, const std::vector<SolveRow>& rows) {
  os << "problem,smoother,depth,outer_iter,nonlinear_residual,inner_iters,inner_final_rel_res,"
        "elapsed_ms,fixed_point_iters\n";
  const auto prec = os.precision(17);
  for (const auto& r : rows)
    for (const auto& s : r.nonlinear.steps)
      os << r.problem << ',' << r.smoother << ',' << r.depth << ',' << s.outer_iter << ','
         << s.nonlinear_residual << ',' << s.inner_iters << ',' << s.inner_final_rel_res << ','
         << s.elapsed_ms << ',' << s.fixed_point_iters << '\n';
  os.precision(prec);
}

void write_mms_csv(std::ostream& os, const std::vector<MmsRow>& rows) {
  os << "level,h,n_dofs,error_u,error_p,order_u,order_p,interpolant_residual\n";
  const auto prec = os.precision(17);
  for (const auto& r : rows)
    os << r.level << ',' << r.h << ',' << r.n_dofs << ',' << r.error_u << ',' << r.error_p << ','
       << r.order_u << ',' << r.order_p << ',' << r.interpolant_residual << '\n';
  os.precision(prec);
}

} // namespace fcmg
