// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "fcmg/bench.hpp"

namespace fs = std::filesystem;
using namespace fcmg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDiverged = 2;

class RunLog {
public:
  explicit RunLog(const fs::path& path) : file_(path) {
    if (!file_) throw InputError("cannot write " + path.string());
  }
  template <class... Args>
  void operator()(const Args&... args) {
    std::ostringstream os;
    (os << ... << args);
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    file_ << std::put_time(&tm, "%F %T") << "  " << os.str() << '\n';
    file_.flush();
    std::cerr << os.str() << '\n';
  }

private:
  std::ofstream file_;
};

template <class F>
void write_file(const fs::path& path, F&& writer) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  writer(os);
  if (!os) throw InputError("failed writing " + path.string());
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("bad integer '" + item + "' in list");
    }
  }
  return out;
}

std::vector<SmootherKind> parse_smoother_list(const std::string& s) {
  std::vector<SmootherKind> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item == "cell") out.push_back(SmootherKind::Cell);
    else if (item == "cutcell") out.push_back(SmootherKind::Cutcell);
    else throw ConfigError("unknown smoother '" + item + "'");
  }
  return out;
}

void log_config(RunLog& log, const RunConfig& cfg) {
  log("problem ", to_string(cfg.problem), ", eta ", cfg.physics.eta, ", beta ", cfg.physics.beta,
      ", alpha_out ", cfg.physics.alpha_out, ", nitsche ", cfg.physics.nitsche_factor);
  log("mesh: roots ", cfg.roots_x, "x", cfg.roots_y, ", base level ", cfg.base_level);
  log("smoother ", to_string(cfg.smoother.kind), ", omega ", cfg.smoother.omega, ", steps ",
      cfg.smoother.pre_steps, "+", cfg.smoother.post_steps);
  if (auto re = reynolds_number(cfg)) log("Reynolds number ", *re);
}

void log_levels(RunLog& log, const std::vector<LevelRow>& levels) {
  for (const auto& l : levels)
    log("level ", l.level, ": ", l.n_cells, " cells, ", l.n_dofs, " dofs, ", l.n_cut_cells,
        " cut, ", l.n_hanging, " hanging");
}

void log_rows(RunLog& log, const std::vector<SolveRow>& rows) {
  for (const auto& r : rows) {
    log(r.problem, " ", r.smoother, " depth ", r.depth, ": ", r.converged ? "converged" : "NOT converged",
        " in ", r.iterations, " iterations", r.problem == "stokes" ? "" : " (outer ",
        r.problem == "stokes" ? "" : std::to_string(r.outer_iterations),
        r.problem == "stokes" ? "" : ")", ", avg reduction ", r.avg_reduction, ", ", r.total_ms,
        " ms, mass balance ", r.mass_balance, r.error.empty() ? "" : ", error: ", r.error);
  }
}

void write_outputs(const BenchmarkReport& rep, const RunConfig& cfg, RunLog& log) {
  const fs::path& out = cfg.out_dir;
  write_file(out / "report.csv", [&](std::ostream& os) { write_report_csv(os, rep.rows); });
  write_file(out / "levels.csv", [&](std::ostream& os) { write_levels_csv(os, rep.levels); });
  write_file(out / "residuals.csv", [&](std::ostream& os) { write_residuals_csv(os, rep.rows); });
  if (cfg.problem == ProblemKind::NavierStokes)
    write_file(out / "nonlinear.csv", [&](std::ostream& os) { write_nonlinear_csv(os, rep.rows); });
  if (cfg.write_vtk && rep.multigrid && rep.solution.size() == rep.multigrid->finest().disc->dofs().n_x()) {
    write_vtk(out / "solution.vtk", *rep.multigrid->finest().disc, rep.solution);
    log("wrote ", (out / "solution.vtk").string());
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite cell Stokes / Navier-Stokes solver with geometric multigrid"};
  app.require_subcommand(1);

  std::string config_path, out_dir, problem, smoother, depths = "2,3,4", smoothers = "cell,cutcell";
  int levels = 0;
  bool deterministic = false;

  auto* solve = app.add_subcommand("solve", "Solve one problem on one hierarchy");
  solve->add_option("--config", config_path, "Configuration file")->required();
  solve->add_option("--problem", problem, "stokes or navier-stokes")
      ->check(CLI::IsMember({"stokes", "navier-stokes"}));
  solve->add_option("--smoother", smoother, "cell or cutcell")->check(CLI::IsMember({"cell", "cutcell"}));
  solve->add_option("--levels", levels, "Hierarchy depth")->check(CLI::PositiveNumber);
  solve->add_option("--out", out_dir, "Output directory");
  solve->add_flag("--deterministic", deterministic, "Deterministic run");

  auto* study = app.add_subcommand("study", "Mesh study over hierarchy depths and smoothers");
  study->add_option("--config", config_path, "Configuration file")->required();
  study->add_option("--depths", depths, "Comma-separated depths");
  study->add_option("--smoothers", smoothers, "Comma-separated smoothers");
  study->add_option("--problem", problem, "stokes or navier-stokes")
      ->check(CLI::IsMember({"stokes", "navier-stokes"}));
  study->add_option("--out", out_dir, "Output directory");
  study->add_flag("--deterministic", deterministic, "Deterministic run");

  auto* mms = app.add_subcommand("mms", "Manufactured-solution convergence study");
  mms->add_option("--config", config_path, "Configuration file")->required();
  mms->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg = load_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!problem.empty())
      cfg.problem = problem == "stokes" ? ProblemKind::Stokes : ProblemKind::NavierStokes;
    if (!smoother.empty()) set_smoother_kind(cfg, smoother == "cell" ? SmootherKind::Cell : SmootherKind::Cutcell);
    if (levels > 0) cfg.depth = levels;
    if (deterministic) cfg.deterministic = true;
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    RunLog log(cfg.out_dir / "run.log");
    log("config ", config_path);

    if (*mms) {
      const auto rows = run_mms(cfg);
      write_file(cfg.out_dir / "mms.csv", [&](std::ostream& os) { write_mms_csv(os, rows); });
      for (const auto& r : rows)
        log("mms level ", r.level, ": h ", r.h, ", |e_u| ", r.error_u, ", |e_p| ", r.error_p,
            ", order u ", r.order_u, ", order p ", r.order_p);
      return kExitOk;
    }

    log_config(log, cfg);
    BenchmarkReport rep;
    if (*solve) {
      log("solve at depth ", cfg.depth);
      rep = run_solve(cfg);
    } else {
      rep = run_mesh_study(cfg, parse_int_list(depths), parse_smoother_list(smoothers));
    }
    log_levels(log, rep.levels);
    log_rows(log, rep.rows);
    write_outputs(rep, cfg, log);
    return rep.all_converged() ? kExitOk : kExitDiverged;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}
