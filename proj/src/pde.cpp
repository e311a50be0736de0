#include "ippgd/pde.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace ippgd {

namespace {

// 3-point Gauss rule on [0, 1].
constexpr std::array<double, 3> kGaussX = {0.5 - 0.3872983346207417, 0.5, 0.5 + 0.3872983346207417};
constexpr std::array<double, 3> kGaussW = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

// int_0^r x exp(-a2 x) dx * a2^2 = 1 - exp(-y)(1 + y) with y = a2 r.
double exp_moment(double y) {
  if (y < 1e-2) {
    double term = y * y / 2.0;
    double sum = 0.0;
    for (int k = 2; k < 12; ++k) {
      sum += term;
      term *= -y * static_cast<double>(k) / (static_cast<double>(k - 1) * static_cast<double>(k + 1));
    }
    return sum;
  }
  return 1.0 - std::exp(-y) * (1.0 + y);
}

// int_0^r nu~(x) dx.
double nu_tilde_integral(const NuCoefficient& nu, double r) {
  double v = 0.5 * nu.a0 * r * r;
  if (nu.a1 == 0.0) return v;
  if (nu.a2 == 0.0) return v + 0.5 * nu.a1 * r * r;
  return v + nu.a1 * exp_moment(nu.a2 * r) / (nu.a2 * nu.a2);
}

// The four corners of cell (i, j) as (x-face, y-face) pairs.
std::array<std::pair<Index, Index>, 4> cell_corners(const MixedGrid& g, Index i, Index j) {
  const Index l = g.xface(i, j), r = g.xface(i + 1, j);
  const Index b = g.yface(i, j), t = g.yface(i, j + 1);
  return {{{l, b}, {r, b}, {l, t}, {r, t}}};
}

void check_size(const PdeProblem& p, const Vector& sigma) {
  if (sigma.size() != p.grid.num_faces()) {
    throw DimensionError("flux vector has " + std::to_string(sigma.size()) + " entries, grid has " +
                         std::to_string(p.grid.num_faces()) + " faces");
  }
}

// Integral of fn over [x0, x0+hx] x [y0, y0+hy] with 3x3 Gauss.
template <class F>
double cell_integral(double x0, double y0, double hx, double hy, F&& fn) {
  double s = 0.0;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) s += kGaussW[a] * kGaussW[b] * fn(x0 + kGaussX[a] * hx, y0 + kGaussX[b] * hy);
  }
  return s * hx * hy;
}

template <class F>
double segment_average(F&& fn) {
  double s = 0.0;
  for (int a = 0; a < 3; ++a) s += kGaussW[a] * fn(kGaussX[a]);
  return s;
}

}  // namespace

void NuCoefficient::validate() const {
  if (!(a0 > 0.0) || !(a1 >= 0.0) || !(a2 >= 0.0) || !std::isfinite(a0 + a1 + a2)) {
    throw Error("nu coefficients need a0 > 0 and a1, a2 >= 0");
  }
  if (!(nu1() > 0.0)) throw Error("nu~ is not strongly monotone: a0 - a1 e^{-2} <= 0");
}

double NuCoefficient::nu(double s) const { return a0 + a1 * std::exp(-a2 * s); }

double NuCoefficient::nu_prime(double s) const { return -a1 * a2 * std::exp(-a2 * s); }

double NuCoefficient::nu_tilde_prime(double s) const { return a0 + a1 * std::exp(-a2 * s) * (1.0 - a2 * s); }

double NuCoefficient::nu1() const {
  if (a1 == 0.0 || a2 == 0.0) return a0 + (a2 == 0.0 ? a1 : 0.0);
  return a0 - a1 * std::exp(-2.0);
}

double NuCoefficient::variable_metric_ratio() const {
  if (a1 == 0.0 || a2 == 0.0) return 1.0;
  // nu / nu~' depends on y = a2 s only; the maximum sits in y in (1, 3)
  // where the derivative term peaks. Coarse scan, then golden section.
  auto ratio = [&](double y) {
    const double e = a1 * std::exp(-y);
    return (a0 + e) / (a0 + e * (1.0 - y));
  };
  double best_y = 0.0, best = 1.0;
  for (int k = 0; k <= 4000; ++k) {
    const double y = 20.0 * k / 4000.0;
    const double v = ratio(y);
    if (v > best) best = v, best_y = y;
  }
  double lo = std::max(0.0, best_y - 0.005), hi = best_y + 0.005;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 100; ++it) {
    const double m1 = hi - phi * (hi - lo), m2 = lo + phi * (hi - lo);
    if (ratio(m1) > ratio(m2)) hi = m2; else lo = m1;
  }
  return std::max(best, ratio(0.5 * (lo + hi)));
}

double nu_tilde_inverse(const NuCoefficient& nu, double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw Error("nu~^{-1} needs a finite t >= 0");
  if (t == 0.0) return 0.0;
  double lo = t / (nu.a0 + nu.a1), hi = t / nu.a0;
  auto residual = [&](double s) { return nu.nu_tilde(s) - t; };
  for (int k = 0; k < 6; ++k) {
    const double mid = 0.5 * (lo + hi);
    (residual(mid) > 0.0 ? hi : lo) = mid;
  }
  double s = 0.5 * (lo + hi);
  for (int it = 0; it < 100; ++it) {
    const double r = residual(s);
    if (r == 0.0) return s;
    (r > 0.0 ? hi : lo) = s;
    double next = s - r / nu.nu_tilde_prime(s);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(s, 1e-300)) {
      return next;
    }
    s = next;
  }
  if (std::abs(residual(s)) > 1e-12 * (1.0 + t)) throw NonConvergence("nu~^{-1} did not converge", s, residual(s));
  return s;
}

double psi(const NuCoefficient& nu, double t) {
  if (t <= 0.0) return 0.0;
  const double r = nu_tilde_inverse(nu, t);
  return t * r - nu_tilde_integral(nu, r);
}

SparseMatrix MixedGrid::divergence() const {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(4 * num_cells()));
  for (Index j = 0; j < ny; ++j) {
    for (Index i = 0; i < nx; ++i) {
      const Index k = i + nx * j;
      trip.emplace_back(k, xface(i + 1, j), hy());
      trip.emplace_back(k, xface(i, j), -hy());
      trip.emplace_back(k, yface(i, j + 1), hx());
      trip.emplace_back(k, yface(i, j), -hx());
    }
  }
  SparseMatrix b(num_cells(), num_faces());
  b.setFromTriplets(trip.begin(), trip.end());
  return b;
}

double energy(const PdeProblem& p, const Vector& sigma) {
  check_size(p, sigma);
  const MixedGrid& g = p.grid;
  const double w = 0.25 * g.hx() * g.hy();
  double e = 0.0;
  for (Index j = 0; j < g.ny; ++j) {
    for (Index i = 0; i < g.nx; ++i) {
      for (auto [fx, fy] : cell_corners(g, i, j)) e += w * psi(p.nu, std::hypot(sigma[fx], sigma[fy]));
    }
  }
  return e - p.b_dirichlet.dot(sigma);
}

Vector weighted_mass_diagonal(const PdeProblem& p, const Vector& sigma) {
  check_size(p, sigma);
  const MixedGrid& g = p.grid;
  const double w = 0.25 * g.hx() * g.hy();
  Vector m = Vector::Zero(g.num_faces());
  for (Index j = 0; j < g.ny; ++j) {
    for (Index i = 0; i < g.nx; ++i) {
      for (auto [fx, fy] : cell_corners(g, i, j)) {
        const double c = w / p.nu.nu(nu_tilde_inverse(p.nu, std::hypot(sigma[fx], sigma[fy])));
        m[fx] += c;
        m[fy] += c;
      }
    }
  }
  return m;
}

Vector gradient(const PdeProblem& p, const Vector& sigma) {
  return weighted_mass_diagonal(p, sigma).cwiseProduct(sigma) - p.b_dirichlet;
}

LinearOperator weighted_mass_metric(const PdeProblem& p, const Vector& sigma) {
  return LinearOperator::diagonal(weighted_mass_diagonal(p, sigma));
}

Vector mass_diagonal(const MixedGrid& g) {
  const double w = 0.25 * g.hx() * g.hy();
  Vector m = Vector::Zero(g.num_faces());
  for (Index j = 0; j < g.ny; ++j) {
    for (Index i = 0; i < g.nx; ++i) {
      for (auto [fx, fy] : cell_corners(g, i, j)) {
        m[fx] += w;
        m[fy] += w;
      }
    }
  }
  return m;
}

LinearOperator mass_metric(const MixedGrid& grid) { return LinearOperator::diagonal(mass_diagonal(grid)); }

FaceField schur_field_from_mass(const MixedGrid& g, const Vector& m) {
  if (m.size() != g.num_faces()) throw DimensionError("mass diagonal does not match the grid");
  FaceField f;
  f.nx = g.nx;
  f.ny = g.ny;
  f.tx = g.hy() * g.hy() * m.head(g.num_x_faces()).cwiseInverse();
  f.ty = g.hx() * g.hx() * m.tail(g.num_y_faces()).cwiseInverse();
  f.validate();
  return f;
}

FaceField assemble_schur_field(const PdeProblem& p, const Vector& sigma) {
  return schur_field_from_mass(p.grid, weighted_mass_diagonal(p, sigma));
}

PdeProblem manufactured_problem(Index nx, Index ny, const NuCoefficient& nu) {
  if (nx < 1 || ny < 1) throw Error("grid needs at least one cell per direction");
  nu.validate();
  PdeProblem p;
  p.grid = MixedGrid{nx, ny};
  p.nu = nu;
  p.exact_solution = [](double x, double y) { return std::sin(x) * std::sin(y); };
  p.dirichlet = p.exact_solution;
  p.exact_flux = [nu](double x, double y, double& sx, double& sy) {
    const double ux = std::cos(x) * std::sin(y), uy = std::sin(x) * std::cos(y);
    const double k = nu.nu(std::hypot(ux, uy));
    sx = k * ux;
    sy = k * uy;
  };
  p.source = [nu](double x, double y) {
    const double ux = std::cos(x) * std::sin(y), uy = std::sin(x) * std::cos(y);
    const double uxx = -std::sin(x) * std::sin(y), uxy = std::cos(x) * std::cos(y);
    const double s = std::hypot(ux, uy);
    double g = nu.nu(s) * 2.0 * uxx;
    if (s > 1e-300) g += nu.nu_prime(s) * (ux * ux * uxx + 2.0 * ux * uy * uxy + uy * uy * uxx) / s;
    return g;
  };

  // The source is derived by hand; compare it with a fourth-order central
  // difference of the exact flux at interior sample points.
  const double d = 1e-3;
  for (int a = 1; a <= 5; ++a) {
    for (int b = 1; b <= 5; ++b) {
      const double x = a / 6.0, y = b / 6.0;
      auto fx = [&](double xx) { double sx, sy; p.exact_flux(xx, y, sx, sy); return sx; };
      auto fy = [&](double yy) { double sx, sy; p.exact_flux(x, yy, sx, sy); return sy; };
      const double div = (8.0 * (fx(x + d) - fx(x - d)) - (fx(x + 2 * d) - fx(x - 2 * d))) / (12.0 * d) +
                         (8.0 * (fy(y + d) - fy(y - d)) - (fy(y + 2 * d) - fy(y - 2 * d))) / (12.0 * d);
      const double g = p.source(x, y);
      if (std::abs(div - g) > 1e-8 * (1.0 + std::abs(g))) {
        std::ostringstream os;
        os << "manufactured source mismatch at (" << x << ", " << y << "): " << g << " vs " << div;
        throw Error(os.str());
      }
    }
  }

  const MixedGrid& gr = p.grid;
  const double hx = gr.hx(), hy = gr.hy();
  p.b = gr.divergence();
  p.g_bar.resize(gr.num_cells());
  for (Index j = 0; j < ny; ++j) {
    for (Index i = 0; i < nx; ++i) p.g_bar[i + nx * j] = cell_integral(i * hx, j * hy, hx, hy, p.source);
  }
  // Boundary term int g_D sigma.n: outward normal -e_x / +e_x / -e_y / +e_y.
  p.b_dirichlet = Vector::Zero(gr.num_faces());
  for (Index j = 0; j < ny; ++j) {
    auto avg = [&](double x) { return segment_average([&](double t) { return p.dirichlet(x, (j + t) * hy); }); };
    p.b_dirichlet[gr.xface(0, j)] = -hy * avg(0.0);
    p.b_dirichlet[gr.xface(nx, j)] = hy * avg(1.0);
  }
  for (Index i = 0; i < nx; ++i) {
    auto avg = [&](double y) { return segment_average([&](double t) { return p.dirichlet((i + t) * hx, y); }); };
    p.b_dirichlet[gr.yface(i, 0)] = -hx * avg(0.0);
    p.b_dirichlet[gr.yface(i, ny)] = hx * avg(1.0);
  }
  return p;
}

Vector interpolate_exact_flux(const PdeProblem& p) {
  if (!p.exact_flux) throw Error("problem has no exact flux");
  const MixedGrid& g = p.grid;
  const double hx = g.hx(), hy = g.hy();
  Vector s(g.num_faces());
  for (Index j = 0; j < g.ny; ++j) {
    for (Index i = 0; i <= g.nx; ++i) {
      s[g.xface(i, j)] = segment_average([&](double t) {
        double sx, sy;
        p.exact_flux(i * hx, (j + t) * hy, sx, sy);
        return sx;
      });
    }
  }
  for (Index j = 0; j <= g.ny; ++j) {
    for (Index i = 0; i < g.nx; ++i) {
      s[g.yface(i, j)] = segment_average([&](double t) {
        double sx, sy;
        p.exact_flux((i + t) * hx, j * hy, sx, sy);
        return sy;
      });
    }
  }
  return s;
}

double flux_l2_error(const PdeProblem& p, const Vector& sigma) {
  check_size(p, sigma);
  if (!p.exact_flux) throw Error("problem has no exact flux");
  const MixedGrid& g = p.grid;
  const double hx = g.hx(), hy = g.hy();
  double err2 = 0.0;
  for (Index j = 0; j < g.ny; ++j) {
    for (Index i = 0; i < g.nx; ++i) {
      const double l = sigma[g.xface(i, j)], r = sigma[g.xface(i + 1, j)];
      const double b = sigma[g.yface(i, j)], t = sigma[g.yface(i, j + 1)];
      err2 += cell_integral(i * hx, j * hy, hx, hy, [&](double x, double y) {
        const double ox = (x - i * hx) / hx, oy = (y - j * hy) / hy;
        double sx, sy;
        p.exact_flux(x, y, sx, sy);
        const double ex = l + (r - l) * ox - sx, ey = b + (t - b) * oy - sy;
        return ex * ex + ey * ey;
      });
    }
  }
  return std::sqrt(err2);
}

Vector particular_flux(const PdeProblem& p, double rel_tol) {
  const Vector m0 = mass_diagonal(p.grid);
  const Eigen::SparseMatrix<double> schur = schur_field_from_mass(p.grid, m0).matrix();
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(schur);
  if (llt.info() != Eigen::Success) throw Error("Schur factorization failed");
  Vector y = llt.solve(p.g_bar);
  // One step of refinement keeps the constraint residual at roundoff.
  y += llt.solve(p.g_bar - schur * y);
  const Vector sigma = m0.cwiseInverse().cwiseProduct(p.b.transpose() * y);
  const double res = (p.b * sigma - p.g_bar).norm();
  if (res > rel_tol * std::max(1.0, p.g_bar.norm()) * std::sqrt(static_cast<double>(p.grid.num_cells()))) {
    throw NonConvergence("particular flux misses the constraint", res, res);
  }
  return sigma;
}

ProblemSpec pde_problem_spec(const PdeProblem& p, const Vector& sigma_p) {
  check_size(p, sigma_p);
  auto shared = std::make_shared<const PdeProblem>(p);
  auto shift = std::make_shared<const Vector>(sigma_p);
  ProblemSpec spec;
  std::ostringstream name;
  name << "quasilinear_" << p.grid.nx << "x" << p.grid.ny << "_nu(" << p.nu.a0 << "," << p.nu.a1 << "," << p.nu.a2
       << ")";
  spec.name = name.str();
  spec.dim = p.grid.num_faces();
  spec.eval_f = [shared, shift](const Vector& u) { return energy(*shared, *shift + u); };
  spec.eval_grad = [shared, shift](const Vector& u) { return gradient(*shared, *shift + u); };
  spec.constraint_b = LinearOperator::sparse(p.b);
  spec.shift = sigma_p;
  spec.metric_builder = [shared, shift](const Vector& u) { return weighted_mass_metric(*shared, *shift + u); };
  spec.reference_metric = mass_metric(p.grid);
  spec.mu_l = std::make_pair(1.0 / p.nu.nu0(), 2.0 / p.nu.nu1());
  spec.validate();
  return spec;
}

void write_snapshot(const std::string& path, const MixedGrid& grid, const std::string& field, const Vector& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "ippgd-snapshot 1\n"
      << "field " << field << "\n"
      << "nx " << grid.nx << "\n"
      << "ny " << grid.ny << "\n";
  char h[64];
  std::snprintf(h, sizeof h, "%.17g", grid.hx());
  out << "h " << h << "\n"
      << "length " << v.size() << "\n"
      << "encoding float64-le\n"
      << "data\n";
  static_assert(sizeof(double) == 8);
  for (Index k = 0; k < v.size(); ++k) {
    const double x = v[k];
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  if (!out) throw Error("write failed for " + path);
}

Snapshot read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  Snapshot s;
  std::string line;
  if (!std::getline(in, line) || line.rfind("ippgd-snapshot", 0) != 0) throw Error(path + ": not a snapshot");
  Index length = -1;
  while (std::getline(in, line) && line != "data") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "field") ls >> s.field;
    else if (key == "nx") ls >> s.grid.nx;
    else if (key == "ny") ls >> s.grid.ny;
    else if (key == "h") ls >> s.h;
    else if (key == "length") ls >> length;
    else if (key == "encoding") {
      std::string enc;
      ls >> enc;
      if (enc != "float64-le") throw Error(path + ": unsupported encoding " + enc);
    }
  }
  if (line != "data" || length < 0) throw Error(path + ": truncated header");
  s.values.resize(length);
  for (Index k = 0; k < length; ++k) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw Error(path + ": truncated data");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    double x;
    std::memcpy(&x, &bits, 8);
    s.values[k] = x;
  }
  return s;
}

}  // namespace ippgd
