#include "ippgd/commands.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ippgd;

namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ippgd_test_commands";
  fs::create_directories(dir);
  return dir / name;
}

std::string write_config(const std::string& name, const std::string& text) {
  const fs::path p = scratch(name);
  std::ofstream(p) << text;
  return p.string();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string strip_wall(const std::string& csv) {
  // Drops the last column (wall_s) of every line.
  std::istringstream in(csv);
  std::string out, line;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

}  // namespace

TEST(Config, ParsesSectionsCommentsAndLists) {
  const Config c = Config::parse(
      "top = 1\n"
      "# comment\n"
      "[a]\n"
      "x = 2.5   ; trailing\n"
      "list = 1, 2 ,3\n"
      "flag = yes\n",
      "t");
  EXPECT_EQ(c.get_int("", "top", 0), 1);
  EXPECT_EQ(c.get_double("a", "x", 0.0), 2.5);
  EXPECT_EQ(c.get_doubles("a", "list", {}), (std::vector<double>{1, 2, 3}));
  EXPECT_TRUE(c.get_bool("a", "flag", false));
  EXPECT_EQ(c.get_string("a", "missing", "dflt"), "dflt");
  EXPECT_NO_THROW(c.reject_unused());
}

TEST(Config, ErrorsNameTheKey) {
  const Config c = Config::parse("[solver]\nmax_iters = ten\nextra = 1\n", "cfg");
  try {
    c.get_int("solver", "max_iters", 0);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg:2: solver.max_iters"), std::string::npos) << e.what();
  }
  try {
    c.reject_unused();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown key solver.extra"), std::string::npos) << e.what();
  }
  EXPECT_THROW(Config::parse("[a]\nx = 1\nx = 2\n"), ConfigError);
  EXPECT_THROW(Config::parse("[a\n"), ConfigError);
  EXPECT_THROW(Config::parse("novalue\n"), ConfigError);
}

TEST(Config, SolverKeysAndMethodOverrides) {
  const Config c = Config::parse(
      "[problem]\ntype = pde\nn = 16\nnu = 1, 6, 5\n"
      "[solver]\ngrad_tol = 1e-5\nmax_iters = 77\n"
      "[method.IPPGDv-tau]\ntau = 0.2\nn_max = 4\n",
      "b");
  const BenchConfig b = parse_bench_config(c);
  ASSERT_EQ(b.methods.size(), 4u);
  const SolverConfig& t = b.solver[3];
  EXPECT_EQ(t.method, Method::ippgdv_tau);
  EXPECT_EQ(t.tau, 0.2);
  EXPECT_EQ(t.max_iters, 77);
  EXPECT_EQ(t.stop.grad_tol, 1e-5);
  EXPECT_EQ(t.mg_schedule->n_max, 4);
  EXPECT_EQ(b.solver[0].tau, 1.0);
  EXPECT_FALSE(b.solver[0].mg_schedule.has_value());
  // The relaxed step size follows the configured tau.
  const double lv = NuCoefficient{1, 6, 5}.variable_metric_ratio();
  EXPECT_DOUBLE_EQ(t.alpha, 2.0 / ((lv + 1.0) * 0.2));
}

TEST(Config, RejectsBadValues) {
  auto bad = [](const std::string& text) {
    try {
      parse_solve_job(Config::parse(text, "c"));
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(bad("[solver]\ntau = 0\n").find("tau must be in (0,1]"), std::string::npos);
  EXPECT_NE(bad("[solver]\nmethod = SGD\n").find("solver.method"), std::string::npos);
  EXPECT_NE(bad("[problem]\ntype = cube\n").find("problem.type"), std::string::npos);
  EXPECT_NE(bad("[problem]\ntype = pde\nnu = 1, 1\n").find("problem.nu"), std::string::npos);
  EXPECT_NE(bad("[solver]\nmethod = PGD\nn_max = 3\n").find("solver.n_max"), std::string::npos);
  EXPECT_NE(bad("[solver]\nschedule = fast\n").find("solver.schedule"), std::string::npos);
  EXPECT_NE(bad("[problem]\ndim = 20\nconstraints = 30\n").find("problem.constraints"), std::string::npos);
}

TEST(Commands, SolveQuadraticPgdConverges) {
  const std::string trace = scratch("quad_trace.csv").string();
  const std::string cfg = write_config("quad.ini",
                                       "[problem]\ntype = quadratic\ndim = 20\nconstraints = 5\nkappa = 10\n"
                                       "[solver]\nmethod = PGD\ngrad_tol = 1e-10\nmax_iters = 2000\n"
                                       "[output]\ntrace = " + trace + "\n");
  std::ostringstream out, err;
  EXPECT_EQ(cmd_solve(cfg, out, err), exit_ok) << err.str();
  EXPECT_NE(out.str().find("converged"), std::string::npos);
  // The oracle error line reports the distance to the KKT solution.
  const auto pos = out.str().find("|u - u*|/|u*| = ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LE(std::stod(out.str().substr(pos + 16)), 1e-8);
  EXPECT_EQ(read_file(trace).substr(0, 10), "k,f,grad_n");
}

TEST(Commands, SolvePdeRelaxedVariableMetric) {
  const std::string cfg = write_config("pde.ini",
                                       "[problem]\ntype = pde\nn = 32\nnu = 1, 1, 5\n"
                                       "[solver]\nmethod = IPPGDv-tau\ntau = 0.5\ngrad_tol = 1e-6\n");
  std::ostringstream out, err;
  EXPECT_EQ(cmd_solve(cfg, out, err), exit_ok) << err.str() << out.str();
  EXPECT_NE(out.str().find("avg_wcycles"), std::string::npos);
}

TEST(Commands, SolveExitCodes) {
  std::ostringstream out, err;
  const std::string tau0 = write_config("tau0.ini", "[solver]\ntau = 0\n");
  EXPECT_EQ(cmd_solve(tau0, out, err), exit_error);
  EXPECT_NE(err.str().find("tau must be in (0,1]"), std::string::npos);
  const std::string capped = write_config("capped.ini", "[problem]\nkappa = 100\n[solver]\nmethod = PGD\nmax_iters = 3\n");
  EXPECT_EQ(cmd_solve(capped, out, err), exit_not_converged);
  EXPECT_EQ(cmd_solve(scratch("does_not_exist.ini").string(), out, err), exit_error);
}

TEST(Commands, BenchSingleCellAndDeterminism) {
  const fs::path dir = scratch("bench_out");
  fs::remove_all(dir);
  const std::string cfg = write_config("bench.ini",
                                       "[problem]\ntype = pde\nnu = 1, 1, 5\n"
                                       "[bench]\nmethods = IPPGDv\ngrids = 16\noutput_dir = " + dir.string() +
                                           "\n[solver]\ngrad_tol = 1e-5\n");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_bench(cfg, out, err), exit_ok) << err.str();
  const std::string first = read_file(dir / "bench.csv");
  EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 2);
  EXPECT_TRUE(fs::exists(dir / "trace_IPPGDv_16.csv"));
  ASSERT_EQ(cmd_bench(cfg, out, err), exit_ok);
  EXPECT_EQ(strip_wall(read_file(dir / "bench.csv")), strip_wall(first));
}

TEST(Commands, BenchMarksFailedRowsAndContinues) {
  BenchConfig cfg;
  cfg.problem.kind = ProblemKind::pde;
  cfg.grids = {8, 16};
  cfg.methods = {Method::pgd, Method::ippgd};
  for (Method m : cfg.methods) {
    SolverConfig s = pde_method_config(m, cfg.problem.nu);
    s.stop.grad_tol = 1e-5;
    cfg.solver.push_back(s);
  }
  // A huge step makes IPPGD diverge; PGD rows are unaffected.
  cfg.solver[1].alpha = 1e3;
  cfg.solver[1].max_iters = 300;
  const BenchReport rep = run_bench(cfg, 2);
  ASSERT_EQ(rep.rows.size(), 4u);
  EXPECT_TRUE(rep.find(Method::pgd, 8)->ok());
  EXPECT_TRUE(rep.find(Method::pgd, 16)->ok());
  EXPECT_EQ(rep.find(Method::ippgd, 16)->status, "FAILED");
  EXPECT_FALSE(rep.find(Method::ippgd, 16)->error.empty());
  EXPECT_FALSE(rep.all_converged());
  std::ostringstream table;
  rep.print_table(table);
  EXPECT_NE(table.str().find("FAILED"), std::string::npos);
}

TEST(Commands, BenchThreadsFromEnvironment) {
  ::setenv("IPPGD_THREADS", "3", 1);
  EXPECT_EQ(bench_threads_from_env(), 3);
  ::setenv("IPPGD_THREADS", "zero", 1);
  EXPECT_THROW(bench_threads_from_env(), Error);
  ::unsetenv("IPPGD_THREADS");
  EXPECT_EQ(bench_threads_from_env(), 1);
}

TEST(Commands, ParallelBenchMatchesSerial) {
  BenchConfig cfg;
  cfg.problem.kind = ProblemKind::pde;
  cfg.grids = {8, 16};
  cfg.methods = {Method::ippgd, Method::ippgdv};
  for (Method m : cfg.methods) {
    SolverConfig s = pde_method_config(m, cfg.problem.nu);
    s.stop.grad_tol = 1e-5;
    cfg.solver.push_back(s);
  }
  std::ostringstream a, b;
  run_bench(cfg, 1).write_csv(a, false);
  run_bench(cfg, 4).write_csv(b, false);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Commands, FlowWritesTrajectoryAndRate) {
  const std::string traj = scratch("flow.csv").string();
  const std::string cfg = write_config("flow.ini",
                                       "[problem]\ndim = 12\nconstraints = 4\nkappa = 2\n"
                                       "[flow]\ndt = 1e-2\nt_end = 20\nrecord_every = 10\n"
                                       "[output]\ntrajectory = " + traj + "\n");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_flow(cfg, out, err), exit_ok) << err.str();
  EXPECT_NE(out.str().find("fitted rate"), std::string::npos);
  EXPECT_NE(out.str().find("hold"), std::string::npos) << out.str();
  const std::string csv = read_file(traj);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,E1,E2,E,constraint_res");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2 + 200);
}

TEST(Commands, FlowConfigValidation) {
  std::ostringstream out, err;
  const std::string cfg = write_config("flow_bad.ini", "[flow]\nintegrator = rk4\ndt = 0.5\n");
  EXPECT_EQ(cmd_flow(cfg, out, err), exit_error);
  EXPECT_NE(err.str().find("[flow]"), std::string::npos);
}

TEST(Commands, CheckRejectsUnknownScope) {
  std::ostringstream out, err;
  EXPECT_EQ(cmd_check("everything", out, err), exit_error);
}

TEST(Commands, CheckProjectionScopePasses) {
  std::ostringstream out, err;
  EXPECT_EQ(cmd_check("projection", out, err), exit_ok) << out.str() << err.str();
  EXPECT_NE(out.str().find("[PASS] projection"), std::string::npos);
}
