#include "ippgd/multigrid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ippgd {

FaceField FaceField::constant(Index nx, Index ny, double value) {
  FaceField f;
  f.nx = nx;
  f.ny = ny;
  f.tx = Vector::Constant((nx + 1) * ny, value);
  f.ty = Vector::Constant(nx * (ny + 1), value);
  for (Index j = 0; j < ny; ++j) {
    f.tx[(nx + 1) * j] *= 2.0;
    f.tx[nx + (nx + 1) * j] *= 2.0;
  }
  for (Index i = 0; i < nx; ++i) {
    f.ty[i] *= 2.0;
    f.ty[i + nx * ny] *= 2.0;
  }
  return f;
}

FaceField FaceField::from_cell_coefficient(Index nx, Index ny, const Vector& k) {
  if (k.size() != nx * ny) throw DimensionError("from_cell_coefficient: coefficient size mismatch");
  if ((k.array() <= 0.0).any()) throw Error("from_cell_coefficient: coefficient must be positive");
  FaceField f;
  f.nx = nx;
  f.ny = ny;
  f.tx.resize((nx + 1) * ny);
  f.ty.resize(nx * (ny + 1));
  auto harm = [](double a, double b) { return 2.0 * a * b / (a + b); };
  for (Index j = 0; j < ny; ++j) {
    for (Index i = 0; i <= nx; ++i) {
      const Index face = i + (nx + 1) * j;
      if (i == 0) {
        f.tx[face] = 2.0 * k[nx * j];
      } else if (i == nx) {
        f.tx[face] = 2.0 * k[nx - 1 + nx * j];
      } else {
        f.tx[face] = harm(k[i - 1 + nx * j], k[i + nx * j]);
      }
    }
  }
  for (Index j = 0; j <= ny; ++j) {
    for (Index i = 0; i < nx; ++i) {
      const Index face = i + nx * j;
      if (j == 0) {
        f.ty[face] = 2.0 * k[i];
      } else if (j == ny) {
        f.ty[face] = 2.0 * k[i + nx * (ny - 1)];
      } else {
        f.ty[face] = harm(k[i + nx * (j - 1)], k[i + nx * j]);
      }
    }
  }
  return f;
}

void FaceField::validate() const {
  if (nx <= 0 || ny <= 0) throw DimensionError("FaceField: empty grid");
  if (tx.size() != (nx + 1) * ny || ty.size() != nx * (ny + 1)) throw DimensionError("FaceField: face array sizes");
  if (!tx.allFinite() || !ty.allFinite() || (tx.array() <= 0.0).any() || (ty.array() <= 0.0).any()) {
    throw Error("FaceField: coefficients must be positive and finite");
  }
}

Vector FaceField::diagonal() const {
  Vector d(cells());
  for (Index j = 0; j < ny; ++j) {
    for (Index i = 0; i < nx; ++i) {
      d[i + nx * j] = tx[i + (nx + 1) * j] + tx[i + 1 + (nx + 1) * j] + ty[i + nx * j] + ty[i + nx * (j + 1)];
    }
  }
  return d;
}

Vector FaceField::apply(const Vector& p) const {
  if (p.size() != cells()) throw DimensionError("FaceField::apply: size mismatch");
  Vector out = diagonal().cwiseProduct(p);
  for (Index j = 0; j < ny; ++j) {
    for (Index i = 1; i < nx; ++i) {
      const double t = tx[i + (nx + 1) * j];
      const Index l = i - 1 + nx * j, r = i + nx * j;
      out[l] -= t * p[r];
      out[r] -= t * p[l];
    }
  }
  for (Index j = 1; j < ny; ++j) {
    for (Index i = 0; i < nx; ++i) {
      const double t = ty[i + nx * j];
      const Index b = i + nx * (j - 1), a = i + nx * j;
      out[b] -= t * p[a];
      out[a] -= t * p[b];
    }
  }
  return out;
}

SparseMatrix FaceField::matrix() const {
  std::vector<Eigen::Triplet<double>> trips;
  const Vector d = diagonal();
  for (Index k = 0; k < cells(); ++k) trips.emplace_back(k, k, d[k]);
  for (Index j = 0; j < ny; ++j) {
    for (Index i = 1; i < nx; ++i) {
      const double t = tx[i + (nx + 1) * j];
      trips.emplace_back(i - 1 + nx * j, i + nx * j, -t);
      trips.emplace_back(i + nx * j, i - 1 + nx * j, -t);
    }
  }
  for (Index j = 1; j < ny; ++j) {
    for (Index i = 0; i < nx; ++i) {
      const double t = ty[i + nx * j];
      trips.emplace_back(i + nx * (j - 1), i + nx * j, -t);
      trips.emplace_back(i + nx * j, i + nx * (j - 1), -t);
    }
  }
  SparseMatrix a(cells(), cells());
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

FaceField FaceField::coarsen() const {
  if (nx % 2 != 0 || ny % 2 != 0) throw Error("FaceField::coarsen: odd grid dimension");
  FaceField c;
  c.nx = nx / 2;
  c.ny = ny / 2;
  c.tx.resize((c.nx + 1) * c.ny);
  c.ty.resize(c.nx * (c.ny + 1));
  for (Index J = 0; J < c.ny; ++J) {
    for (Index I = 0; I <= c.nx; ++I) {
      c.tx[I + (c.nx + 1) * J] = tx[2 * I + (nx + 1) * (2 * J)] + tx[2 * I + (nx + 1) * (2 * J + 1)];
    }
  }
  for (Index J = 0; J <= c.ny; ++J) {
    for (Index I = 0; I < c.nx; ++I) {
      c.ty[I + c.nx * J] = ty[2 * I + nx * (2 * J)] + ty[2 * I + 1 + nx * (2 * J)];
    }
  }
  return c;
}

MgHierarchy::MgHierarchy(std::vector<MgLevel> levels, std::shared_ptr<const Eigen::LLT<DenseMatrix>> coarse,
                         MgOptions opts)
    : levels_(std::move(levels)), coarse_(std::move(coarse)), opts_(opts) {}

void MgHierarchy::smooth(const FaceField& f, const Vector& diag, const Vector& rhs, Vector& x, int sweeps) const {
  const Index nx = f.nx, ny = f.ny;
  auto relax = [&](Index i, Index j) {
    const Index k = i + nx * j;
    double s = rhs[k];
    if (i > 0) s += f.tx[i + (nx + 1) * j] * x[k - 1];
    if (i + 1 < nx) s += f.tx[i + 1 + (nx + 1) * j] * x[k + 1];
    if (j > 0) s += f.ty[i + nx * j] * x[k - nx];
    if (j + 1 < ny) s += f.ty[i + nx * (j + 1)] * x[k + nx];
    x[k] = s / diag[k];
  };
  for (int s = 0; s < sweeps; ++s) {
    for (Index j = 0; j < ny; ++j)
      for (Index i = 0; i < nx; ++i) relax(i, j);
    for (Index j = ny; j-- > 0;)
      for (Index i = nx; i-- > 0;) relax(i, j);
  }
}

void MgHierarchy::cycle_level(std::size_t l, const Vector& rhs, Vector& x) const {
  if (l + 1 == levels_.size()) {
    x = coarse_->solve(rhs);
    return;
  }
  const MgLevel& lv = levels_[l];
  const FaceField& f = lv.field;
  x = Vector::Zero(f.cells());
  smooth(f, lv.diag, rhs, x, opts_.pre_sweeps);
  const Vector r = rhs - f.apply(x);
  const FaceField& cf = levels_[l + 1].field;
  Vector rc = Vector::Zero(cf.cells());
  for (Index j = 0; j < f.ny; ++j)
    for (Index i = 0; i < f.nx; ++i) rc[i / 2 + cf.nx * (j / 2)] += r[i + f.nx * j];
  Vector ec;
  cycle_level(l + 1, rc, ec);
  if (l + 2 < levels_.size()) {
    // Second coarse visit (W-cycle).
    Vector corr;
    cycle_level(l + 1, rc - cf.apply(ec), corr);
    ec += corr;
  }
  for (Index j = 0; j < f.ny; ++j)
    for (Index i = 0; i < f.nx; ++i) x[i + f.nx * j] += ec[i / 2 + cf.nx * (j / 2)];
  smooth(f, lv.diag, rhs, x, opts_.post_sweeps);
}

Vector MgHierarchy::cycle(const Vector& rhs) const {
  if (rhs.size() != size()) throw DimensionError("MgHierarchy::cycle: size mismatch");
  Vector x;
  cycle_level(0, rhs, x);
  return x;
}

Vector MgHierarchy::apply(const Vector& rhs, int n_mg) const {
  if (n_mg < 1) throw Error("multigrid: n_mg must be at least 1");
  Vector x = cycle(rhs);
  for (int i = 1; i < n_mg; ++i) x += cycle(rhs - fine().apply(x));
  return x;
}

MgHierarchy build_hierarchy(const FaceField& field, const MgOptions& opts) {
  field.validate();
  if (opts.pre_sweeps < 0 || opts.post_sweeps < 0 || opts.pre_sweeps != opts.post_sweeps) {
    throw Error("build_hierarchy: pre and post sweep counts must be equal and non-negative");
  }
  std::vector<MgLevel> levels;
  FaceField cur = field;
  levels.push_back({cur, cur.diagonal()});
  const Index half = std::max<Index>(1, opts.coarsest_max_dim / 2);
  while (cur.nx % 2 == 0 && cur.ny % 2 == 0 && std::max(cur.nx, cur.ny) > half) {
    cur = cur.coarsen();
    if (opts.coarse == CoarseOperator::rediscretized) {
      cur.tx *= 0.5;
      cur.ty *= 0.5;
    }
    levels.push_back({cur, cur.diagonal()});
  }
  if (levels.size() < 2) {
    throw Error("build_hierarchy: grid " + std::to_string(field.nx) + "x" + std::to_string(field.ny) +
                " cannot be coarsened");
  }
  if (cur.nx > opts.coarsest_max_dim || cur.ny > opts.coarsest_max_dim) {
    throw Error("build_hierarchy: coarsest grid " + std::to_string(cur.nx) + "x" + std::to_string(cur.ny) +
                " too large for a direct solve");
  }
  auto llt = std::make_shared<Eigen::LLT<DenseMatrix>>(DenseMatrix(cur.matrix()));
  if (llt->info() != Eigen::Success) throw Error("build_hierarchy: coarsest operator not SPD");
  return MgHierarchy(std::move(levels), llt, opts);
}

Vector wcycle_apply(const MgHierarchy& h, const Vector& rhs, int n_mg) { return h.apply(rhs, n_mg); }

LinearOperator as_schur_tilde_inverse(std::shared_ptr<const MgHierarchy> h, int n_mg) {
  if (n_mg < 1) throw Error("as_schur_tilde_inverse: n_mg must be at least 1");
  const Index n = h->size();
  auto act = [h, n_mg](const Vector& in, Vector& out) { out = h->apply(in, n_mg); };
  return LinearOperator(n, n, act, {true, true});
}

LinearOperator as_operator(std::shared_ptr<const MgHierarchy> h) {
  const Index n = h->size();
  auto act = [h](const Vector& in, Vector& out) { out = h->fine().apply(in); };
  return LinearOperator(n, n, act, {true, true});
}

MgSolveResult mg_solve(const MgHierarchy& h, const Vector& rhs, double rel_tol, int max_cycles) {
  MgSolveResult out;
  out.x = Vector::Zero(rhs.size());
  const double bn = rhs.norm();
  if (bn == 0.0) {
    out.converged = true;
    return out;
  }
  Vector r = rhs;
  while (out.cycles < max_cycles) {
    out.x += h.cycle(r);
    ++out.cycles;
    r = rhs - h.fine().apply(out.x);
    out.relative_residual = r.norm() / bn;
    if (out.relative_residual <= rel_tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

void MgSchedule::validate() const {
  if (n_start < 1) throw Error("mg schedule: n_start must be at least 1");
  if (n_max < n_start) throw Error("mg schedule: n_max must be at least n_start");
  if (!(ramp_fraction > 0.0)) throw Error("mg schedule: ramp_fraction must be positive");
  if (increment < 0) throw Error("mg schedule: increment must be non-negative");
  if (!(forcing > 0.0)) throw Error("mg schedule: forcing must be positive");
}

int MgSchedule::at(int k, int max_iters) const {
  const int period = std::max(1, static_cast<int>(std::ceil(ramp_fraction * std::max(1, max_iters))));
  const long n = static_cast<long>(n_start) + static_cast<long>(increment) * (k / period);
  return static_cast<int>(std::min<long>(n, n_max));
}

int MgSchedule::adaptive_at(double relative_gradient, double rho, int previous) const {
  int n = std::max(n_start, previous);
  if (!(rho > 0.0) || rho >= 1.0) return n;
  const double target = forcing * relative_gradient;
  while (n < n_max && std::pow(rho, n) > target) ++n;
  return n;
}

}  // namespace ippgd
