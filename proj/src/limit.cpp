#include "qttfem/limit.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace qttfem {

namespace {

using detail::require;

double assembly_tol(double tol) { return std::max(1e-2 * tol, 1e-13); }

std::vector<Index> binary_dims(Index L) { return std::vector<Index>(static_cast<size_t>(L), 2); }

// One basis tag per effective block (a single-block function may leave the
// vector empty, meaning the Dirichlet default).
std::vector<Basis> block_basis(const FeFunction& u) {
  const auto blocks = u.grid.effective_blocks();
  if (u.basis.empty()) return std::vector<Basis>(blocks.size(), Basis::hat_dirichlet);
  require(u.basis.size() == blocks.size(), "limit: one basis tag per grid block expected");
  return u.basis;
}

// --- coefficient access --------------------------------------------------------

// Cell coefficient of the fastest microscale with every slower coordinate
// frozen at `lead` (padded with cell centers when short).
std::function<double(const std::vector<double>&)> frozen_fast(const MultiscaleCoefficient& c,
                                                              std::vector<double> lead) {
  const size_t nlead = static_cast<size_t>(c.dim) * static_cast<size_t>(c.n);
  require(lead.size() <= nlead, "solve_cell: slow point has more coordinates than the coefficient takes");
  lead.resize(nlead, 0.5);
  auto value = c.value;
  require(static_cast<bool>(value), "solve_cell: coefficient has no pointwise evaluation");
  return [value, lead](const std::vector<double>& y) {
    std::vector<double> args(lead.begin(), lead.end());
    args.insert(args.end(), y.begin(), y.end());
    return value(args);
  };
}

// Spot check that the cell coefficient ignores the slower coordinates.
void require_slow_free(const MultiscaleCoefficient& c) {
  const size_t nlead = static_cast<size_t>(c.dim) * static_cast<size_t>(c.n);
  if (nlead == 0) return;
  std::mt19937_64 rng(0x9e3779b9ULL);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double scale = 1.0, dev = 0.0;
  for (int rep = 0; rep < 4; ++rep) {
    std::vector<double> y(static_cast<size_t>(c.dim));
    for (auto& v : y) v = uni(rng);
    double base = 0.0;
    for (int s = 0; s < 6; ++s) {
      std::vector<double> args(nlead);
      for (auto& v : args) v = uni(rng);
      args.insert(args.end(), y.begin(), y.end());
      const double val = c.value(args);
      scale = std::max(scale, std::abs(val));
      if (s == 0)
        base = val;
      else
        dev = std::max(dev, std::abs(val - base));
    }
  }
  require(dev <= 1e-10 * scale,
          "solve_cell: coefficient varies with the slower variables; pass a slow point or a slow grid");
}

void check_window(double lo, double hi, const MultiscaleCoefficient& c, const char* who) {
  const double slack = 1e-9 * std::max(1.0, c.Gamma);
  require(lo >= c.gamma - slack && hi <= c.Gamma + slack,
          std::string(who) + ": sampled cell coefficient violates the declared ellipticity window");
}

// Spot check of the full coefficient against its declared window.
void spot_check_window(const MultiscaleCoefficient& c, const char* who) {
  std::mt19937_64 rng(0xc0ffeeULL);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const size_t nargs = static_cast<size_t>(c.dim) * static_cast<size_t>(1 + c.n);
  double lo = c.Gamma, hi = c.gamma;
  for (int s = 0; s < 64; ++s) {
    std::vector<double> args(nargs);
    for (auto& v : args) v = uni(rng);
    const double val = c.value(args);
    lo = std::min(lo, val);
    hi = std::max(hi, val);
  }
  check_window(lo, hi, c, who);
}

Index interleave2(Index px, Index py, Index L) {
  Index q = 0;
  for (Index l = L - 1; l >= 0; --l) {
    const Index bx = (px >> l) & 1;
    const Index by = (py >> l) & 1;
    q = (q << 2) | (bx << 1) | by;
  }
  return q;
}

// Cell-midpoint samples of a frozen cell coefficient on the unit-cell grid.
TtTensorD dense_cell_samples(const std::function<double(const std::vector<double>&)>& f, Index dim, Index L,
                             double tol, double& lo, double& hi) {
  require(dim * L <= 24, "solve_cell: dense cell sampling cap exceeded");
  const Index n = Index(1) << L;
  const double h = 1.0 / double(n);
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  if (dim == 1) {
    Vec<double> v(n);
    for (Index cc = 0; cc < n; ++cc) {
      v(cc) = f({(double(cc) + 0.5) * h});
      lo = std::min(lo, v(cc));
      hi = std::max(hi, v(cc));
    }
    return tt_from_full(v, binary_dims(L), tol);
  }
  require(dim == 2, "solve_cell: dim must be 1 or 2");
  Vec<double> v(n * n);
  for (Index cx = 0; cx < n; ++cx)
    for (Index cy = 0; cy < n; ++cy) {
      const double val = f({(double(cx) + 0.5) * h, (double(cy) + 0.5) * h});
      v(interleave2(cx, cy, L)) = val;
      lo = std::min(lo, val);
      hi = std::max(hi, val);
    }
  return tt_from_full(v, std::vector<Index>(static_cast<size_t>(L), 4), tol);
}

Vec<double> midpoint_samples_1d(const Callable1& f, Index L) {
  const Index n = Index(1) << L;
  Vec<double> v(n);
  const double h = 1.0 / double(n);
  for (Index cc = 0; cc < n; ++cc) v(cc) = f ? f((double(cc) + 0.5) * h) : 1.0;
  return v;
}

// --- train surgery -------------------------------------------------------------

// Sum the last `modes` cores over their indices, leaving the leading train.
TtTensorD contract_tail_sum(TtTensorD t, Index modes) {
  require(t.order() > modes, "limit: contraction would consume the whole train");
  for (Index m = 0; m < modes; ++m) {
    const Index l = t.order() - 1;
    const Index n = t.dims.back();
    Mat<double> s = Mat<double>::Zero(t.rank(l), t.rank(l + 1));
    for (Index i = 0; i < n; ++i) s += t.slice(l, i);
    t.dims.pop_back();
    t.cores.pop_back();
    t.cores.back() = t.cores.back() * s;
  }
  return t;
}

// Contract the leading `modes` cores at the bits of idx (MSB first).
TtTensorD slice_leading(const TtTensorD& t, Index modes, Index idx) {
  require(t.order() > modes, "limit: slicing would consume the whole train");
  Mat<double> row = Mat<double>::Ones(1, 1);
  for (Index l = 0; l < modes; ++l) {
    const Index bit = (idx >> (modes - 1 - l)) & 1;
    row = row * t.slice(l, bit);
  }
  TtTensorD out;
  out.dims.assign(t.dims.begin() + modes, t.dims.end());
  const Index n = out.dims.front();
  const Index rr = t.rank(modes + 1);
  Mat<double> head(n, rr);
  for (Index i = 0; i < n; ++i) head.row(i) = row * t.slice(modes, i);
  out.cores.push_back(std::move(head));
  out.cores.insert(out.cores.end(), t.cores.begin() + modes + 1, t.cores.end());
  return out;
}

// Insert `extra` child-copy modes after position `after`, replicating
// piecewise-constant data onto a finer dyadic grid.
TtTensorD replicate_after(TtTensorD t, Index after, Index extra) {
  for (Index e = 0; e < extra; ++e) {
    const Index pos = after + e;
    const Index r = t.rank(pos);
    Mat<double> c(2 * r, r);
    c << Mat<double>::Identity(r, r), Mat<double>::Identity(r, r);
    t.dims.insert(t.dims.begin() + pos, 2);
    t.cores.insert(t.cores.begin() + pos, std::move(c));
  }
  return t;
}

// --- cell solves ----------------------------------------------------------------

// Boundary-pinned corrector solve on the unit interval.  The periodic cell
// solution gauged to vanish at the cell boundary satisfies the same interior
// flux balance as the boundary-pinned problem (in one dimension the flux
// a (w' + 1) is constant either way), so the pinned system - which admits the
// level scaling transform and stays well conditioned at depth - is solved
// instead, then re-gauged to zero mean.
TtTensorD corrector_1d(const Vec<double>& a_mid, Index L, double tol) {
  const double h = std::pow(2.0, -double(L));
  const double atol = assembly_tol(tol);
  const TtTensorD a = tt_from_full(a_mid, binary_dims(L), std::min(atol, 1e-13));
  const TtOperatorD g = op_grad_cells(L, Boundary::dirichlet);
  DiscreteProblem p;
  p.grid = GridSpec{L, 1, Boundary::dirichlet, {}};
  p.tol = atol;
  p.stiffness = op_scale(op_round(op_compose(op_transpose(g), op_compose(op_diag(a), g)), 1e-14), h);
  p.load = tt_round(tt_scale(tt_apply(op_transpose(g), a), -h), 1e-14);
  // A (near-)constant coefficient cancels the load structurally; the exact
  // corrector is zero and the relative-residual loop has nothing to measure.
  if (tt_norm(p.load) <= 1e-12 * h * tt_norm(a)) return tt_zero<double>(p.load.dims);
  p.loads = {p.load};
  SolveOptions opts;
  opts.tol_residual = tol;
  opts.precondition = PreconditionKind::level_scaling;
  const SolveResult r = als_solve(p, opts);
  if (!r.trace.converged) throw std::runtime_error("solve_cell: inner solver did not converge (" + r.trace.stop_reason + ")");
  const double mean = h * tt_dot(r.x, tt_ones<double>(r.x.dims));
  return tt_round(tt_add(r.x, tt_scale(tt_ones<double>(r.x.dims), -mean)), atol);
}

FeFunction nodal_cell_function(TtTensorD coeffs, Index L, Index dim) {
  FeFunction u;
  u.grid = GridSpec{L, dim, Boundary::periodic, {}};
  u.basis = {Basis::hat_periodic};
  u.coeffs = std::move(coeffs);
  return u;
}

FeFunction pwc_cell_function(TtTensorD coeffs, Index L, Index dim) {
  FeFunction u;
  u.grid = GridSpec{L, dim, Boundary::periodic, {}};
  u.basis = {Basis::pwc};
  u.coeffs = std::move(coeffs);
  return u;
}

// Corrector energy may not exceed Gamma/gamma (the discrete solve satisfies
// the same bound as the continuous problem); allow solver-tolerance slack.
void check_corrector_energy(double energy, const MultiscaleCoefficient& c, const char* who) {
  require(energy <= (c.Gamma / c.gamma) * (1.0 + 1e-6) + 1e-8,
          std::string(who) + ": corrector energy exceeds the ellipticity bound");
}

CellSolution cell_solution_1d(const MultiscaleCoefficient& c, const Vec<double>& a_mid, Index L, double tol) {
  CellSolution out;
  out.dim = 1;
  out.level = L;
  TtTensorD w = corrector_1d(a_mid, L, tol);
  TtTensorD j = tt_round(tt_apply(op_grad_cells(L, Boundary::periodic), w), 1e-14);
  out.w = {nodal_cell_function(std::move(w), L, 1)};
  out.jac = {pwc_cell_function(std::move(j), L, 1)};
  check_corrector_energy(h1_seminorm(out.w[0]), c, "solve_cell");
  return out;
}

// d-dimensional periodic solve of the gauged cell system, one load per
// direction.
CellSolution cell_solution_nd(const MultiscaleCoefficient& c, const TtTensorD& a_cells, Index L, double tol) {
  const Index d = c.dim;
  GridSpec grid{L, d, Boundary::periodic, {}};
  const DiscreteProblem base = assemble_cell_problem(a_cells, grid, assembly_tol(tol));
  CellSolution out;
  out.dim = d;
  out.level = L;
  const double hd = std::pow(2.0, -double(d * L));
  const TtOperatorD gx = d == 1 ? op_grad_cells(L, Boundary::periodic)
                                : op_zip(op_grad_cells(L, Boundary::periodic), op_avg_cells(L, Boundary::periodic));
  const TtOperatorD gy = d == 1 ? gx : op_zip(op_avg_cells(L, Boundary::periodic), op_grad_cells(L, Boundary::periodic));
  for (Index k = 0; k < d; ++k) {
    DiscreteProblem p = base;
    p.load = base.loads[static_cast<size_t>(k)];
    TtTensorD xk;
    if (tt_norm(p.load) <= 1e-12 * hd * tt_norm(a_cells)) {
      xk = tt_zero<double>(p.load.dims);
    } else {
      SolveOptions opts;
      opts.tol_residual = tol;
      const SolveResult r = als_solve(p, opts);
      if (!r.trace.converged)
        throw std::runtime_error("solve_cell: inner solver did not converge (" + r.trace.stop_reason + ")");
      xk = r.x;
    }
    const double mean = hd * tt_dot(xk, tt_ones<double>(xk.dims));
    TtTensorD w = tt_round(tt_add(xk, tt_scale(tt_ones<double>(xk.dims), -mean)), assembly_tol(tol));
    out.w.push_back(nodal_cell_function(w, L, d));
    check_corrector_energy(h1_seminorm(out.w.back()), c, "solve_cell");
    out.jac.push_back(pwc_cell_function(tt_round(tt_apply(gx, w), 1e-14), L, d));
    if (d == 2) out.jac.push_back(pwc_cell_function(tt_round(tt_apply(gy, w), 1e-14), L, d));
  }
  return out;
}

// Separable fast path: the corrector of a product coefficient depends on the
// fastest factor of its own axis only, so one 1D solve per axis suffices and
// the result is lifted onto the cell grid.
CellSolution cell_solution_separable(const MultiscaleCoefficient& c, Index L, double tol) {
  spot_check_window(c, "solve_cell");
  const auto& axes = c.fast_axes.back();
  require(static_cast<Index>(axes.size()) == c.dim, "solve_cell: separable coefficient needs one fast factor per axis");
  if (c.dim == 1) return cell_solution_1d(c, midpoint_samples_1d(axes[0], L), L, tol);
  CellSolution out;
  out.dim = 2;
  out.level = L;
  const TtTensorD ones = tt_ones<double>(binary_dims(L));
  const TtOperatorD g = op_grad_cells(L, Boundary::periodic);
  for (Index k = 0; k < 2; ++k) {
    TtTensorD v = corrector_1d(midpoint_samples_1d(axes[static_cast<size_t>(k)], L), L, tol);
    TtTensorD dv = tt_round(tt_apply(g, v), 1e-14);
    TtTensorD w2 = k == 0 ? tt_zip(v, ones) : tt_zip(ones, v);
    TtTensorD j2 = k == 0 ? tt_zip(dv, ones) : tt_zip(ones, dv);
    out.w.push_back(nodal_cell_function(std::move(w2), L, 2));
    check_corrector_energy(h1_seminorm(out.w.back()), c, "solve_cell");
    const TtTensorD zero = tt_zero<double>(out.w.back().coeffs.dims);
    if (k == 0) {
      out.jac.push_back(pwc_cell_function(std::move(j2), L, 2));
      out.jac.push_back(pwc_cell_function(zero, L, 2));
    } else {
      out.jac.push_back(pwc_cell_function(zero, L, 2));
      out.jac.push_back(pwc_cell_function(std::move(j2), L, 2));
    }
  }
  return out;
}

void validate_cell_request(const MultiscaleCoefficient& c, Index L_cell, double tol) {
  require(c.n >= 1, "solve_cell: coefficient has no microscale to resolve");
  require(c.dim == 1 || c.dim == 2, "solve_cell: dim must be 1 or 2");
  require(L_cell >= 3, "solve_cell: cell grid must have level at least 3");
  require(tol > 0.0, "solve_cell: tolerance must be positive");
}

// --- averaging -------------------------------------------------------------------

// Cell average of (I + Jw) a from midpoint sums; a_cells are the samples the
// cell solve used.
Mat<double> averaged_matrix(const TtTensorD& a_cells, const CellSolution& cell) {
  const Index d = cell.dim;
  const double hd = std::pow(2.0, -double(d * cell.level));
  const double mean_a = hd * tt_dot(a_cells, tt_ones<double>(a_cells.dims));
  Mat<double> m(d, d);
  for (Index k = 0; k < d; ++k)
    for (Index l = 0; l < d; ++l)
      m(k, l) = (k == l ? mean_a : 0.0) + hd * tt_dot(a_cells, cell.jac[static_cast<size_t>(k * d + l)].coeffs);
  return m;
}

void check_symmetric(const Mat<double>& m, const char* who) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
          std::string(who) + ": averaged coefficient matrix is not symmetric");
}

double spectrum_slack(Index L, double Gamma) { return 4.0 * Gamma * std::pow(2.0, -double(L)) + 1e-9; }

void check_spectrum(double lo, double hi, const MultiscaleCoefficient& c, Index L, const char* who) {
  const double slack = spectrum_slack(L, c.Gamma);
  require(lo >= c.gamma - slack && hi <= c.Gamma + slack,
          std::string(who) + ": averaged spectrum leaves the declared ellipticity window");
}

// Reduce a (verified symmetric) averaged matrix to its isotropic scalar.
double isotropic_value(const Mat<double>& m, const char* who) {
  check_symmetric(m, who);
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (m.rows() == 1) return m(0, 0);
  require(std::abs(m(0, 1)) <= 1e-8 * scale && std::abs(m(1, 0)) <= 1e-8 * scale &&
              std::abs(m(0, 0) - m(1, 1)) <= 1e-8 * scale,
          std::string(who) + ": anisotropic averaged coefficient is not representable as a scalar");
  return 0.5 * (m(0, 0) + m(1, 1));
}

std::function<double(const std::vector<double>&)> value_from_axes(Index dim, std::vector<Callable1> slow,
                                                                  std::vector<std::vector<Callable1>> fast) {
  return [dim, slow, fast](const std::vector<double>& x) {
    double v = 1.0;
    for (Index ax = 0; ax < dim; ++ax)
      if (slow[static_cast<size_t>(ax)]) v *= slow[static_cast<size_t>(ax)](x[static_cast<size_t>(ax)]);
    for (size_t i = 0; i < fast.size(); ++i)
      for (Index ax = 0; ax < dim; ++ax)
        if (fast[i][static_cast<size_t>(ax)])
          v *= fast[i][static_cast<size_t>(ax)](x[(i + 1) * static_cast<size_t>(dim) + static_cast<size_t>(ax)]);
    return v;
  };
}

// Sampled value window of a coefficient (for the per-rung spectra record).
Eigen::Vector2d sampled_window(const MultiscaleCoefficient& c) {
  std::mt19937_64 rng(0xfeedULL);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const size_t nargs = static_cast<size_t>(c.dim) * static_cast<size_t>(1 + c.n);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int s = 0; s < 128; ++s) {
    std::vector<double> args(nargs);
    for (auto& v : args) v = uni(rng);
    const double val = c.value(args);
    lo = std::min(lo, val);
    hi = std::max(hi, val);
  }
  return Eigen::Vector2d(lo, hi);
}

struct Upscaled {
  MultiscaleCoefficient next;
  Eigen::Vector2d window;
};

MultiscaleCoefficient drop_fastest(const MultiscaleCoefficient& c) {
  MultiscaleCoefficient next = c;
  next.n = c.n - 1;
  if (!next.lambdas.empty()) next.lambdas.pop_back();
  if (!next.fast_axes.empty()) next.fast_axes.pop_back();
  return next;
}

Upscaled upscale_impl(const MultiscaleCoefficient& c, const CellSolution& cell) {
  require(c.n >= 1, "upscale: coefficient has no microscale to average");
  require(c.dim == cell.dim, "upscale: cell solution dimension mismatch");
  Upscaled out;
  if (cell.slow_dependent) {
    // Piecewise-constant slow sampling: average per slow cell, then expose the
    // result through a cell-lookup table.
    require(c.dim == 1 && c.n == 1, "upscale: slow-sampled averaging supports one microscale in one dimension");
    const Index Ls = cell.slow_level, L = cell.level;
    const Index ns = Index(1) << Ls;
    const double h = std::pow(2.0, -double(L));
    double lo, hi;
    const auto f = [&](const std::vector<double>& xy) { return c.value(xy); };
    TtTensorD a;
    {
      const Index nf = Index(1) << L;
      Vec<double> v(ns * nf);
      lo = std::numeric_limits<double>::infinity();
      hi = -lo;
      const double hs = 1.0 / double(ns);
      for (Index cs = 0; cs < ns; ++cs)
        for (Index cf = 0; cf < nf; ++cf) {
          const double val = f({(double(cs) + 0.5) * hs, (double(cf) + 0.5) * h});
          v(cs * nf + cf) = val;
          lo = std::min(lo, val);
          hi = std::max(hi, val);
        }
      check_window(lo, hi, c, "upscale");
      a = tt_from_full(v, binary_dims(Ls + L), 1e-13);
    }
    const TtTensorD prof = tt_add(tt_ones<double>(a.dims), cell.jac[0].coeffs);
    TtTensorD avg = tt_scale(contract_tail_sum(tt_hadamard(a, prof), L), h);
    const Vec<double> table = full(avg);
    check_spectrum(table.minCoeff(), table.maxCoeff(), c, L, "upscale");
    out.next = drop_fastest(c);
    out.next.separable = false;
    out.next.slow_axes.clear();
    out.next.value = [table, ns](const std::vector<double>& x) {
      const Index idx = std::min<Index>(ns - 1, std::max<Index>(0, static_cast<Index>(x[0] * double(ns))));
      return table(idx);
    };
    out.window = Eigen::Vector2d(table.minCoeff(), table.maxCoeff());
    return out;
  }
  if (c.separable) {
    // Average the fastest factor on its own; the slower factors multiply back.
    const auto& axes = c.fast_axes.back();
    TtTensorD a_cells;
    if (c.dim == 1) {
      a_cells = tt_from_full(midpoint_samples_1d(axes[0], cell.level), binary_dims(cell.level), 1e-13);
    } else {
      const TtTensorD ax = tt_from_full(midpoint_samples_1d(axes[0], cell.level), binary_dims(cell.level), 1e-13);
      const TtTensorD ay = tt_from_full(midpoint_samples_1d(axes[1], cell.level), binary_dims(cell.level), 1e-13);
      a_cells = tt_round(tt_zip(ax, ay), 1e-13);
    }
    const double m = isotropic_value(averaged_matrix(a_cells, cell), "upscale");
    out.next = drop_fastest(c);
    Callable1 slow0 = out.next.slow_axes.empty() ? Callable1{} : out.next.slow_axes[0];
    if (out.next.slow_axes.empty()) out.next.slow_axes.assign(static_cast<size_t>(c.dim), Callable1{});
    out.next.slow_axes[0] = [slow0, m](double x) { return m * (slow0 ? slow0(x) : 1.0); };
    out.next.value = value_from_axes(out.next.dim, out.next.slow_axes, out.next.fast_axes);
    out.window = sampled_window(out.next);
    check_spectrum(out.window(0), out.window(1), c, cell.level, "upscale");
    return out;
  }
  // Slow-constant general coefficient: the averaged matrix is the full new
  // coefficient.
  require_slow_free(c);
  double lo, hi;
  const TtTensorD a_cells = dense_cell_samples(frozen_fast(c, {}), c.dim, cell.level, 1e-13, lo, hi);
  check_window(lo, hi, c, "upscale");
  const double m = isotropic_value(averaged_matrix(a_cells, cell), "upscale");
  check_spectrum(m, m, c, cell.level, "upscale");
  out.next = drop_fastest(c);
  out.next.separable = true;
  out.next.slow_axes.assign(static_cast<size_t>(c.dim), Callable1{});
  out.next.slow_axes[0] = [m](double) { return m; };
  out.next.fast_axes.assign(static_cast<size_t>(out.next.n),
                            std::vector<Callable1>(static_cast<size_t>(c.dim), Callable1{}));
  out.next.value = value_from_axes(out.next.dim, out.next.slow_axes, out.next.fast_axes);
  out.window = Eigen::Vector2d(m, m);
  return out;
}

FeFunction with_role(FeFunction u, const std::string& role) {
  auto blocks = u.grid.effective_blocks();
  require(blocks.size() == 1, "limit: role renaming applies to single-block functions");
  blocks[0].role = role;
  u.grid.blocks = blocks;
  u.basis = block_basis(u);
  return u;
}

void cap_ranks(const FeFunction& u, Index rank_cap, const char* who) {
  for (Index b = 1; b < u.coeffs.order(); ++b)
    require(u.coeffs.rank(b) <= rank_cap, std::string(who) + ": rank cap exceeded");
}

}  // namespace

// --- cell problems ----------------------------------------------------------------

CellSolution solve_cell(const MultiscaleCoefficient& c, Index L_cell, double tol) {
  validate_cell_request(c, L_cell, tol);
  if (c.separable) return cell_solution_separable(c, L_cell, tol);
  require_slow_free(c);
  double lo, hi;
  const TtTensorD a_cells = dense_cell_samples(frozen_fast(c, {}), c.dim, L_cell, 1e-13, lo, hi);
  check_window(lo, hi, c, "solve_cell");
  if (c.dim == 1) {
    Vec<double> a_mid = full(a_cells);
    return cell_solution_1d(c, a_mid, L_cell, tol);
  }
  return cell_solution_nd(c, a_cells, L_cell, tol);
}

CellSolution solve_cell(const MultiscaleCoefficient& c, const std::vector<double>& slow_point, Index L_cell,
                        double tol) {
  validate_cell_request(c, L_cell, tol);
  double lo, hi;
  const TtTensorD a_cells = dense_cell_samples(frozen_fast(c, slow_point), c.dim, L_cell, 1e-13, lo, hi);
  check_window(lo, hi, c, "solve_cell");
  if (c.dim == 1) {
    Vec<double> a_mid = full(a_cells);
    return cell_solution_1d(c, a_mid, L_cell, tol);
  }
  return cell_solution_nd(c, a_cells, L_cell, tol);
}

CellSolution solve_cell(const MultiscaleCoefficient& c, const GridSpec& slow_grid, Index L_cell, double tol) {
  validate_cell_request(c, L_cell, tol);
  require(c.dim == 1 && c.n == 1, "solve_cell: slow-sampled cell problems support one microscale in one dimension");
  require(slow_grid.dim == 1 && slow_grid.effective_blocks().size() == 1, "solve_cell: slow grid must be a plain 1D grid");
  const Index Ls = slow_grid.level;
  const Index L = L_cell;
  require(Ls >= 1, "solve_cell: slow grid is empty");
  require(Ls + L <= 24, "solve_cell: dense cell sampling cap exceeded");
  const Index ns = Index(1) << Ls, nf = Index(1) << L;
  const double hs = 1.0 / double(ns), hf = 1.0 / double(nf);
  Vec<double> v(ns * nf);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Index cs = 0; cs < ns; ++cs)
    for (Index cf = 0; cf < nf; ++cf) {
      const double val = c.value({(double(cs) + 0.5) * hs, (double(cf) + 0.5) * hf});
      v(cs * nf + cf) = val;
      lo = std::min(lo, val);
      hi = std::max(hi, val);
    }
  check_window(lo, hi, c, "solve_cell");
  const double atol = assembly_tol(tol);
  const TtTensorD a = tt_from_full(v, binary_dims(Ls + L), std::min(atol, 1e-13));
  const std::vector<Index> slow_dims = binary_dims(Ls), fast_dims = binary_dims(L);
  const TtOperatorD gy = op_concat(op_identity<double>(slow_dims), op_grad_cells(L, Boundary::periodic));
  // Block-diagonal system over the slow cells: the usual gauged periodic cell
  // operator acts on the fast modes, the slow modes are passive.
  const TtOperatorD gauge = op_concat(op_identity<double>(slow_dims), op_ones(L, hi * hf));
  DiscreteProblem p;
  p.grid = GridSpec{L, 1, Boundary::periodic, {ScaleBlock{"slow", Ls}, ScaleBlock{"cell", L}}};
  p.tol = atol;
  p.stiffness =
      op_round(op_add(op_scale(op_round(op_compose(op_transpose(gy), op_compose(op_diag(a), gy)), 1e-14), hf), gauge),
               1e-14);
  p.load = tt_round(tt_scale(tt_apply(op_transpose(gy), a), -hf), 1e-14);
  p.loads = {p.load};
  TtTensorD x;
  if (tt_norm(p.load) <= 1e-12 * hf * tt_norm(a)) {
    x = tt_zero<double>(p.load.dims);
  } else {
    SolveOptions opts;
    opts.tol_residual = tol;
    const SolveResult r = als_solve(p, opts);
    if (!r.trace.converged)
      throw std::runtime_error("solve_cell: inner solver did not converge (" + r.trace.stop_reason + ")");
    x = r.x;
  }
  // zero mean per slow cell
  const TtTensorD mean = tt_scale(contract_tail_sum(x, L), hf);
  TtTensorD w = tt_round(tt_add(x, tt_scale(tt_concat(mean, tt_ones<double>(fast_dims)), -1.0)), atol);
  TtTensorD j = tt_round(tt_apply(gy, w), 1e-14);

  CellSolution out;
  out.dim = 1;
  out.level = L;
  out.slow_dependent = true;
  out.slow_level = Ls;
  FeFunction wf;
  wf.grid = p.grid;
  wf.basis = {Basis::pwc, Basis::hat_periodic};
  wf.coeffs = std::move(w);
  FeFunction jf;
  jf.grid = p.grid;
  jf.basis = {Basis::pwc, Basis::pwc};
  jf.coeffs = std::move(j);
  out.w = {std::move(wf)};
  out.jac = {std::move(jf)};
  // sup over the slow cells of the fast corrector energy
  for (Index cs = 0; cs < ns; ++cs) {
    FeFunction slice = nodal_cell_function(slice_leading(out.w[0].coeffs, Ls, cs), L, 1);
    check_corrector_energy(h1_seminorm(slice), c, "solve_cell");
  }
  return out;
}

// --- averaging ----------------------------------------------------------------------

Mat<double> upscaled_matrix(const MultiscaleCoefficient& c, const CellSolution& cell) {
  require(!cell.slow_dependent, "upscaled_matrix: slow-dependent cell solutions have per-cell averages");
  require(c.n >= 1 && c.dim == cell.dim, "upscaled_matrix: coefficient/cell mismatch");
  require_slow_free(c);
  double lo, hi;
  const TtTensorD a_cells = dense_cell_samples(frozen_fast(c, {}), c.dim, cell.level, 1e-13, lo, hi);
  check_window(lo, hi, c, "upscaled_matrix");
  Mat<double> m = averaged_matrix(a_cells, cell);
  check_symmetric(m, "upscaled_matrix");
  return m;
}

MultiscaleCoefficient upscale(const MultiscaleCoefficient& c, const CellSolution& cell) {
  return upscale_impl(c, cell).next;
}

ScaleLadder build_ladder(const MultiscaleCoefficient& c, Index L_cell, double tol) {
  require(c.n >= 1, "build_ladder: coefficient has no microscales");
  ScaleLadder ladder;
  ladder.cell_level = L_cell;
  ladder.tol = tol;
  ladder.coefficients.push_back(c);
  for (Index j = 0; j < c.n; ++j) {
    const MultiscaleCoefficient& cur = ladder.coefficients.back();
    ladder.cells.push_back(solve_cell(cur, L_cell, tol));
    Upscaled up = upscale_impl(cur, ladder.cells.back());
    ladder.spectra.push_back(up.window);
    ladder.coefficients.push_back(std::move(up.next));
  }
  return ladder;
}

// --- slow problem ---------------------------------------------------------------------

namespace {

HomogenizedSolution homogenized_common(DiscreteProblem p, const GridSpec& grid, double tol) {
  SolveOptions opts;
  opts.tol_residual = tol;
  opts.precondition = PreconditionKind::level_scaling;
  SolveResult r = als_solve(p, opts);
  if (!r.trace.converged)
    throw std::runtime_error("solve_homogenized: solver did not converge (" + r.trace.stop_reason + ")");
  HomogenizedSolution out;
  out.trace = std::move(r.trace);
  out.u0.grid = grid;
  out.u0.basis = {Basis::hat_dirichlet};
  out.u0.coeffs = std::move(r.x);
  const Index L = grid.level;
  const TtOperatorD g = op_grad_cells(L, Boundary::dirichlet);
  if (grid.dim == 1) {
    FeFunction v;
    v.grid = grid;
    v.basis = {Basis::pwc};
    v.coeffs = tt_round(tt_apply(g, out.u0.coeffs), 1e-14);
    out.v0 = {std::move(v)};
  } else {
    const TtOperatorD a = op_avg_cells(L, Boundary::dirichlet);
    for (Index k = 0; k < 2; ++k) {
      FeFunction v;
      v.grid = grid;
      v.basis = {Basis::pwc};
      v.coeffs = tt_round(tt_apply(k == 0 ? op_zip(g, a) : op_zip(a, g), out.u0.coeffs), 1e-14);
      out.v0.push_back(std::move(v));
    }
  }
  return out;
}

void validate_homogenized(const MultiscaleCoefficient& a0, const GridSpec& grid) {
  require(a0.n == 0, "solve_homogenized: coefficient still has microscales; average them out first");
  require(a0.dim == grid.dim, "solve_homogenized: coefficient/grid dimension mismatch");
  require(grid.boundary == Boundary::dirichlet, "solve_homogenized: Dirichlet grids only");
  require(grid.effective_blocks().size() == 1, "solve_homogenized: single-block grids only");
}

}  // namespace

HomogenizedSolution solve_homogenized(const MultiscaleCoefficient& a0, const Callable1& f, const GridSpec& grid,
                                      double tol) {
  validate_homogenized(a0, grid);
  require(grid.dim == 1, "solve_homogenized: callable arity does not match grid.dim");
  return homogenized_common(assemble_multiscale(a0, f, grid, assembly_tol(tol)), grid, tol);
}

HomogenizedSolution solve_homogenized(const MultiscaleCoefficient& a0, const Callable2& f, const GridSpec& grid,
                                      double tol) {
  validate_homogenized(a0, grid);
  require(grid.dim == 2, "solve_homogenized: callable arity does not match grid.dim");
  return homogenized_common(assemble_multiscale(a0, f, grid, assembly_tol(tol)), grid, tol);
}

// --- scale interactions ------------------------------------------------------------------

LimitSolution reconstruct_interactions(const ScaleLadder& ladder, const HomogenizedSolution& hom, double tol,
                                       Index rank_cap) {
  require(tol >= 0.0, "reconstruct_interactions: negative tolerance");
  require(rank_cap >= 1, "reconstruct_interactions: rank cap must be positive");
  LimitSolution out;
  out.u0 = hom.u0;
  out.v.push_back(hom.v0);
  const Index n = ladder.scales();
  if (n == 0) return out;
  require(!ladder.coefficients.empty() && ladder.coefficients.front().dim == 1,
          "reconstruct_interactions: scale interactions are built for one physical dimension");
  const Index L = hom.u0.grid.level;
  for (Index i = 1; i <= n; ++i) {
    const CellSolution& cell = ladder.cell(i);
    const FeFunction& vp = out.v.back()[0];
    const std::string role = "scale" + std::to_string(i);
    FeFunction ui, vi;
    if (!cell.slow_dependent) {
      const FeFunction w = with_role(cell.w[0], role);
      FeFunction prof = with_role(cell.jac[0], role);
      prof.coeffs = tt_add(tt_ones<double>(prof.coeffs.dims), prof.coeffs);
      ui = fe_product(vp, w);
      vi = fe_product(vp, prof);
    } else {
      // Piecewise-constant slow dependence: replicate the slow block to the
      // physical level and multiply pointwise.
      require(i == 1, "reconstruct_interactions: slow-sampled cells support a single microscale");
      require(cell.slow_level <= L, "reconstruct_interactions: slow sampling is finer than the physical grid");
      const TtTensorD w_lift = replicate_after(cell.w[0].coeffs, cell.slow_level, L - cell.slow_level);
      TtTensorD prof = tt_add(tt_ones<double>(cell.jac[0].coeffs.dims), cell.jac[0].coeffs);
      const TtTensorD p_lift = replicate_after(std::move(prof), cell.slow_level, L - cell.slow_level);
      const TtTensorD base = tt_concat(vp.coeffs, tt_ones<double>(binary_dims(cell.level)));
      ui.grid = vp.grid;
      ui.grid.blocks = vp.grid.effective_blocks();
      ui.grid.blocks.push_back(ScaleBlock{role, cell.level});
      ui.basis = block_basis(vp);
      ui.basis.push_back(Basis::hat_periodic);
      ui.coeffs = tt_hadamard(base, w_lift);
      vi.grid = ui.grid;
      vi.basis = ui.basis;
      vi.basis.back() = Basis::pwc;
      vi.coeffs = tt_hadamard(base, p_lift);
    }
    ui.coeffs = tt_round(ui.coeffs, tol);
    vi.coeffs = tt_round(vi.coeffs, tol);
    cap_ranks(ui, rank_cap, "reconstruct_interactions");
    cap_ranks(vi, rank_cap, "reconstruct_interactions");
    out.u.push_back(std::move(ui));
    out.v.push_back({std::move(vi)});
  }
  return out;
}

// --- norms and product-grid helpers -----------------------------------------------------

FeFunction fe_product(const FeFunction& slow_part, const FeFunction& fast_part) {
  require(slow_part.grid.dim == fast_part.grid.dim, "fe_product: dimension mismatch");
  const auto ba = slow_part.grid.effective_blocks();
  const auto bb = fast_part.grid.effective_blocks();
  for (const auto& x : ba)
    for (const auto& y : bb) require(x.role != y.role, "fe_product: duplicate block role");
  FeFunction out;
  out.grid = slow_part.grid;
  out.grid.blocks = ba;
  out.grid.blocks.insert(out.grid.blocks.end(), bb.begin(), bb.end());
  out.basis = block_basis(slow_part);
  const auto tb = block_basis(fast_part);
  out.basis.insert(out.basis.end(), tb.begin(), tb.end());
  out.coeffs = tt_concat(slow_part.coeffs, fast_part.coeffs);
  return out;
}

FeFunction fast_mean(const FeFunction& u) {
  const auto blocks = u.grid.effective_blocks();
  require(blocks.size() >= 2, "fast_mean: nothing would remain");
  const Index levels = blocks.back().levels;
  FeFunction out;
  out.grid = u.grid;
  out.grid.blocks = blocks;
  out.grid.blocks.pop_back();
  out.basis = block_basis(u);
  out.basis.pop_back();
  out.coeffs = tt_scale(contract_tail_sum(u.coeffs, levels), std::pow(2.0, -double(u.grid.dim * levels)));
  return out;
}

double fast_gradient_seminorm(const FeFunction& u) {
  const auto blocks = u.grid.effective_blocks();
  require(u.grid.dim == 1, "fast_gradient_seminorm: one physical dimension only");
  const auto basis = block_basis(u);
  require(basis.back() == Basis::hat_periodic || basis.back() == Basis::hat_dirichlet,
          "fast_gradient_seminorm: last block must carry nodal data");
  for (size_t b = 0; b + 1 < basis.size(); ++b)
    require(basis[b] == Basis::pwc, "fast_gradient_seminorm: leading blocks must be piecewise constant");
  const Index Lf = blocks.back().levels;
  const Boundary bnd = basis.back() == Basis::hat_periodic ? Boundary::periodic : Boundary::dirichlet;
  const TtOperatorD g = op_grad_cells(Lf, bnd);
  TtOperatorD op = g;
  if (blocks.size() > 1) {
    std::vector<Index> lead;
    for (size_t b = 0; b + 1 < blocks.size(); ++b)
      for (Index l = 0; l < blocks[b].levels; ++l) lead.push_back(u.grid.mode_size());
    op = op_concat(op_identity<double>(lead), g);
  }
  FeFunction gf;
  gf.grid = u.grid;
  gf.basis.assign(blocks.size(), Basis::pwc);
  gf.coeffs = tt_apply(op, u.coeffs);
  return l2_norm(gf);
}

double triple_norm(const LimitSolution& s) {
  double norm = h1_seminorm(s.u0);
  for (const auto& ui : s.u) norm += fast_gradient_seminorm(ui);
  return norm;
}

double triple_norm_diff(const LimitSolution& a, const LimitSolution& b) {
  require(a.u.size() == b.u.size(), "triple_norm_diff: interaction depth mismatch");
  double norm = h1_seminorm(a.u0, b.u0);
  for (size_t i = 0; i < a.u.size(); ++i) {
    require(block_basis(a.u[i]) == block_basis(b.u[i]), "triple_norm_diff: basis mismatch");
    FeFunction diff = a.u[i];
    diff.coeffs = tt_add(a.u[i].coeffs, tt_scale(b.u[i].coeffs, -1.0));
    norm += fast_gradient_seminorm(diff);
  }
  return norm;
}

}  // namespace qttfem
