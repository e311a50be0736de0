#include "ippgd/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

namespace ippgd {

namespace {

std::string short_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

PdeSetup pde_setup(Index n, const NuCoefficient& nu) {
  PdeSetup s{manufactured_problem(n, n, nu), {}};
  s.spec = pde_problem_spec(s.problem, particular_flux(s.problem));
  return s;
}

std::unique_ptr<MultigridSchurProvider> pde_schur_provider(const MixedGrid& grid, MgOptions opts) {
  return std::make_unique<MultigridSchurProvider>(
      [grid](const LinearOperator& m) { return schur_field_from_mass(grid, m.apply(Vector::Ones(m.cols()))); },
      opts);
}

SolverConfig pde_method_config(Method m, const NuCoefficient& nu, double tau) {
  SolverConfig cfg = SolverConfig::for_method(m);
  if (m == Method::ippgdv_tau) cfg.tau = tau;
  if (m == Method::ippgdv || m == Method::ippgdv_tau) {
    const double lv = nu.variable_metric_ratio();
    cfg.alpha = m == Method::ippgdv ? 1.0 / lv : 2.0 / ((lv + 1.0) * cfg.tau);
  }
  return cfg;
}

std::string ProblemSelector::label() const {
  if (kind == ProblemKind::pde) {
    return "pde " + std::to_string(n) + "x" + std::to_string(n) + " nu=(" + short_num(nu.a0) + "," +
           short_num(nu.a1) + "," + short_num(nu.a2) + ")";
  }
  if (!instance.empty()) return "quadratic " + instance;
  return "quadratic dim=" + std::to_string(dim) + " rows=" + std::to_string(constraints) +
         " kappa=" + short_num(kappa) + " seed=" + std::to_string(seed);
}

SolverConfig method_defaults(const ProblemSelector& sel, Method m, double tau) {
  if (sel.kind == ProblemKind::pde) return pde_method_config(m, sel.nu, tau);
  SolverConfig cfg = SolverConfig::for_method(m);
  cfg.mg_schedule.reset();
  cfg.metric_policy = MetricPolicy::fixed;
  if (m == Method::ippgdv_tau) cfg.tau = tau;
  return cfg;
}

BuiltProblem build_problem(const ProblemSelector& sel, Method m) {
  BuiltProblem b;
  b.label = sel.label();
  if (sel.kind == ProblemKind::pde) {
    PdeSetup s = pde_setup(sel.n, sel.nu);
    b.spec = std::move(s.spec);
    b.provider = pde_schur_provider(s.problem.grid);
    b.pde = std::move(s.problem);
  } else {
    QuadraticInstance q = sel.instance.empty() ? gen_quadratic(sel.dim, sel.constraints, sel.kappa, sel.seed)
                                               : load_instance(sel.instance);
    const DenseMatrix id = DenseMatrix::Identity(q.dim(), q.dim());
    b.spec = quadratic_problem(q, id);
    if (m != Method::pgd && sel.delta > 0.0) {
      MetricSet ms = prescribed_inexactness_metric(id, q.bc, sel.delta, sel.seed);
      b.provider = std::make_unique<FixedSchurProvider>(ms.schur_tilde_inverse);
      b.quadratic_metric = std::move(ms);
    } else {
      b.provider = std::make_unique<ExactSchurProvider>(b.spec.constraint_b);
    }
    b.quadratic = std::move(q);
  }
  b.u0 = Vector::Zero(b.spec.dim);
  return b;
}

void BenchConfig::validate() const {
  if (methods.empty()) throw Error("bench needs at least one method");
  if (grids.empty()) throw Error(problem.kind == ProblemKind::pde ? "bench needs a nonempty grid list"
                                                                  : "bench needs at least one dimension");
  if (solver.size() != methods.size()) throw Error("bench needs one solver configuration per method");
  for (Index g : grids) {
    if (g < 2) throw Error("grid sizes must be >= 2");
  }
  for (const auto& s : solver) s.validate();
}

const BenchRow* BenchReport::find(Method m, Index grid) const {
  for (const auto& r : rows) {
    if (r.method == m && r.grid == grid) return &r;
  }
  return nullptr;
}

bool BenchReport::all_converged() const {
  for (const auto& r : rows) {
    if (!r.ok()) return false;
  }
  return true;
}

void BenchReport::write_csv(std::ostream& out, bool include_wall) const {
  out << "method,grid,dofs,iterations,avg_wcycles,total_wcycles,grad_norm_M,constraint_res,status";
  if (include_wall) out << ",wall_s";
  out << "\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << to_string(r.method) << "," << r.grid << "," << r.dofs << "," << r.iterations << "," << r.avg_cycles
        << "," << r.total_cycles << "," << r.grad_norm << "," << r.constraint_res << "," << r.status;
    if (include_wall) out << "," << r.wall_s;
    out << "\n";
  }
}

void BenchReport::write_csv(const std::string& path, bool include_wall) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_csv(out, include_wall);
}

void BenchReport::print_table(std::ostream& out) const {
  std::vector<Index> grids;
  std::vector<Method> methods;
  for (const auto& r : rows) {
    if (std::find(grids.begin(), grids.end(), r.grid) == grids.end()) grids.push_back(r.grid);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  out << std::left << std::setw(12) << "method";
  for (Index g : grids) {
    const BenchRow* any = nullptr;
    for (const auto& r : rows) {
      if (r.grid == g) any = &r;
    }
    out << std::setw(22) << (std::to_string(g) + " (" + std::to_string(any ? any->dofs : 0) + " dofs)");
  }
  out << "\n" << std::setw(12) << "";
  for (std::size_t i = 0; i < grids.size(); ++i) out << std::setw(22) << "its / ave.cycles / s";
  out << "\n";
  for (Method m : methods) {
    out << std::setw(12) << to_string(m);
    for (Index g : grids) {
      const BenchRow* r = find(m, g);
      std::ostringstream cell;
      if (!r) {
        cell << "-";
      } else if (r->status == "FAILED") {
        cell << "FAILED";
      } else {
        cell << r->iterations << (r->ok() ? "" : "*") << " / " << std::fixed << std::setprecision(1)
             << r->avg_cycles << " / " << std::setprecision(1) << r->wall_s;
      }
      out << std::setw(22) << cell.str();
    }
    out << "\n";
  }
  out << std::right;
  bool starred = false;
  for (const auto& r : rows) starred = starred || r.status == "max_iters";
  if (starred) out << "* iteration limit reached\n";
}

int bench_threads_from_env() {
  const char* v = std::getenv("IPPGD_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw Error("IPPGD_THREADS must be a positive integer, got '" + std::string(v) + "'");
  return static_cast<int>(std::min<long>(n, 256));
}

BenchReport run_bench(const BenchConfig& cfg, int threads) {
  cfg.validate();
  if (!cfg.output_dir.empty()) std::filesystem::create_directories(cfg.output_dir);
  BenchReport rep;
  for (Index g : cfg.grids) {
    for (Method m : cfg.methods) {
      BenchRow r;
      r.method = m;
      r.grid = g;
      rep.rows.push_back(r);
    }
  }
  auto cell = [&](std::size_t i) {
    BenchRow& row = rep.rows[i];
    const std::size_t mi = i % cfg.methods.size();
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ProblemSelector sel = cfg.problem;
      if (sel.kind == ProblemKind::pde) {
        sel.n = row.grid;
      } else {
        sel.dim = row.grid;
        sel.seed = cfg.seed;
      }
      BuiltProblem b = build_problem(sel, row.method);
      row.label = b.label;
      row.dofs = b.spec.dim;
      const SolveResult res = run(b.spec, b.u0, cfg.solver[mi], *b.provider);
      const IterationRecord& last = res.trace.records.back();
      row.iterations = res.trace.iterations();
      row.avg_cycles = res.trace.average_cycles();
      row.total_cycles = std::max(0LL, b.provider->cycles());
      row.grad_norm = last.grad_norm_m;
      row.constraint_res = last.constraint_res;
      row.status = res.status == RunStatus::converged ? "converged" : "max_iters";
      if (b.pde && b.pde->exact_flux) row.flux_error = flux_l2_error(*b.pde, b.spec.physical(res.u));
      if (!cfg.output_dir.empty()) {
        res.trace.write_csv((std::filesystem::path(cfg.output_dir) /
                             ("trace_" + to_string(row.method) + "_" + std::to_string(row.grid) + ".csv"))
                                .string());
      }
    } catch (const std::exception& e) {
      row.status = "FAILED";
      row.error = e.what();
    }
    row.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  const std::size_t cells = rep.rows.size();
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(cells)));
  if (workers == 1) {
    for (std::size_t i = 0; i < cells; ++i) cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells; i = next++) cell(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  if (!cfg.output_dir.empty()) rep.write_csv((std::filesystem::path(cfg.output_dir) / "bench.csv").string());
  return rep;
}

}  // namespace ippgd
