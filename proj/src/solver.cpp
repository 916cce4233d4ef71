#include "qttfem/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "qttfem/grid.hpp"

namespace qttfem {
namespace {

// Diagonal entry of an operator at the all-zeros multi-index: a 1x1 chain
// product, used to size the boundary penalty.
double diag_entry_zero(const TtOperatorD& a) {
  Mat<double> w = Mat<double>::Ones(1, 1);
  for (Index l = 0; l < a.order(); ++l) w = w * a.slice(l, 0, 0);
  return w(0, 0);
}

struct Effective {
  TtOperatorD A;
  TtTensorD b;
  TtOperatorD mask;  // boundary projector, only meaningful when masked
  bool masked = false;
};

Effective effective_system(const DiscreteProblem& p) {
  detail::require(p.stiffness.row_dims == p.stiffness.col_dims, "solver: stiffness must be square");
  detail::require(p.load.dims == p.stiffness.col_dims, "solver: load/operator shape mismatch");
  Effective e;
  if (p.grid.boundary == Boundary::dirichlet) {
    const double sigma = std::abs(diag_entry_zero(p.stiffness));
    detail::require(sigma > 0.0, "solver: stiffness diagonal sample is zero");
    const double rtol = p.tol > 0.0 ? 0.01 * p.tol : 1e-13;
    e.A = masked_operator(p.stiffness, p.grid, sigma, rtol);
    e.b = masked_load(p.load, p.grid, rtol);
    e.mask = op_mask_boundary_nd(p.grid.level, p.grid.dim);
    e.masked = true;
  } else {
    e.A = p.stiffness;
    e.b = p.load;
  }
  return e;
}

// Frame projections.  Operator environments are stored as (r_bra * r_op) x
// r_ket matrices with the bra rank fastest in the row index.

Mat<double> push_left_op(const Mat<double>& env, const TtTensorD& bra, const TtOperatorD& A, const TtTensorD& ket,
                         Index l) {
  const Index pl = bra.rank(l), pn = bra.rank(l + 1);
  const Index ql = ket.rank(l), qn = ket.rank(l + 1);
  const Index al = A.rank(l), ar = A.rank(l + 1);
  const Index n = A.row_dims[static_cast<size_t>(l)];
  const Index m = A.col_dims[static_cast<size_t>(l)];
  Mat<double> out = Mat<double>::Zero(pn * ar, qn);
  for (Index j = 0; j < m; ++j) {
    const Mat<double> tj = env * ket.slice(l, j);  // (pl*al) x qn
    for (Index i = 0; i < n; ++i) {
      const auto bi = bra.slice(l, i);  // pl x pn
      const auto aij = A.slice(l, i, j);
      for (Index a = 0; a < al; ++a) {
        Mat<double> u;
        bool have = false;
        for (Index ap = 0; ap < ar; ++ap) {
          const double c = aij(a, ap);
          if (c == 0.0) continue;
          if (!have) {
            u = bi.transpose() * tj.middleRows(a * pl, pl);  // pn x qn
            have = true;
          }
          out.middleRows(ap * pn, pn) += c * u;
        }
      }
    }
  }
  (void)ql;
  return out;
}

Mat<double> push_right_op(const Mat<double>& env, const TtTensorD& bra, const TtOperatorD& A, const TtTensorD& ket,
                          Index l) {
  const Index pl = bra.rank(l), pn = bra.rank(l + 1);
  const Index ql = ket.rank(l), qn = ket.rank(l + 1);
  const Index al = A.rank(l), ar = A.rank(l + 1);
  const Index n = A.row_dims[static_cast<size_t>(l)];
  const Index m = A.col_dims[static_cast<size_t>(l)];
  Mat<double> out = Mat<double>::Zero(pl * al, ql);
  for (Index ap = 0; ap < ar; ++ap) {
    const Mat<double> s = env.middleRows(ap * pn, pn);  // pn x qn
    for (Index i = 0; i < n; ++i) {
      const Mat<double> bis = bra.slice(l, i) * s;  // pl x qn
      for (Index j = 0; j < m; ++j) {
        const auto aij = A.slice(l, i, j);
        Mat<double> nij;
        bool have = false;
        for (Index a = 0; a < al; ++a) {
          const double c = aij(a, ap);
          if (c == 0.0) continue;
          if (!have) {
            nij = bis * ket.slice(l, j).transpose();  // pl x ql
            have = true;
          }
          out.middleRows(a * pl, pl) += c * nij;
        }
      }
    }
  }
  (void)qn;
  return out;
}

// Vector environments: left as r_bra x r_vec, right as r_vec x r_bra.
Mat<double> push_left_vec(const Mat<double>& env, const TtTensorD& bra, const TtTensorD& vec, Index l) {
  const Index n = bra.dims[static_cast<size_t>(l)];
  Mat<double> out = Mat<double>::Zero(bra.rank(l + 1), vec.rank(l + 1));
  for (Index i = 0; i < n; ++i) out += bra.slice(l, i).transpose() * env * vec.slice(l, i);
  return out;
}

Mat<double> push_right_vec(const Mat<double>& env, const TtTensorD& vec, const TtTensorD& bra, Index l) {
  const Index n = bra.dims[static_cast<size_t>(l)];
  Mat<double> out = Mat<double>::Zero(vec.rank(l), bra.rank(l));
  for (Index i = 0; i < n; ++i) out += vec.slice(l, i) * env * bra.slice(l, i).transpose();
  return out;
}

// Local operator in the orthogonal frame; rows/cols indexed (p + pl*i) +
// pl*n*p'' to match the column-major memory of a (pl*n) x pr core.
Mat<double> local_matrix(const Mat<double>& envL, const Mat<double>& envR, const TtOperatorD& A, Index l, Index pl,
                         Index pr) {
  const Index al = A.rank(l), ar = A.rank(l + 1);
  const Index n = A.row_dims[static_cast<size_t>(l)];
  const Index m = A.col_dims[static_cast<size_t>(l)];
  std::vector<Mat<double>> hhat(static_cast<size_t>(ar), Mat<double>::Zero(pl * n, pl * m));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) {
      const auto aij = A.slice(l, i, j);
      for (Index a = 0; a < al; ++a) {
        const auto la = envL.middleRows(a * pl, pl);
        for (Index ap = 0; ap < ar; ++ap) {
          const double c = aij(a, ap);
          if (c != 0.0) hhat[static_cast<size_t>(ap)].block(i * pl, j * pl, pl, pl) += c * la;
        }
      }
    }
  const Index blk = pl * n;
  Mat<double> H = Mat<double>::Zero(blk * pr, blk * pr);
  for (Index ap = 0; ap < ar; ++ap)
    for (Index pp = 0; pp < pr; ++pp)
      for (Index qq = 0; qq < pr; ++qq) {
        const double c = envR(pp + pr * ap, qq);
        if (c != 0.0) H.block(pp * blk, qq * blk, blk, blk) += c * hhat[static_cast<size_t>(ap)];
      }
  return H;
}

Mat<double> local_rhs(const Mat<double>& bL, const Mat<double>& bR, const TtTensorD& b, Index l, Index pl, Index pr) {
  const Index n = b.dims[static_cast<size_t>(l)];
  Mat<double> g(pl * n, pr);
  for (Index i = 0; i < n; ++i) g.middleRows(i * pl, pl) = bL * b.slice(l, i) * bR;
  return g;
}

// Dense SPD solve with one refinement step; rel_out is the backward error
// ||H v - g|| / (||H||_F ||v|| + ||g||).
Vec<double> local_solve(const Mat<double>& H, const Vec<double>& g, double& rel_out) {
  Eigen::LLT<Mat<double>> llt(H);
  Vec<double> v;
  if (llt.info() == Eigen::Success) {
    v = llt.solve(g);
    v += llt.solve(Vec<double>(g - H * v));
  } else {
    Eigen::LDLT<Mat<double>> ldlt(H);
    v = ldlt.solve(g);
    v += ldlt.solve(Vec<double>(g - H * v));
  }
  const double denom = H.norm() * v.norm() + g.norm();
  rel_out = denom > 0.0 ? (g - H * v).norm() / denom : 0.0;
  return v;
}

// Memory-bounded operator application: a single left-to-right pass that
// truncates each bond of A*x against the running partial product (relative
// tolerance rel_tol, hard cap max_rank).  Bond truncation happens on the
// small triangular factor of an LQ split, never on the full product core.
TtTensorD apply_rounded(const TtOperatorD& A, const TtTensorD& x, double rel_tol, Index max_rank) {
  const Index L = x.order();
  TtTensorD y;
  y.dims = A.row_dims;
  y.cores.resize(static_cast<size_t>(L));
  // carry: t x (al * pl), column index a + al * p.
  Mat<double> carry = Mat<double>::Ones(1, 1);
  for (Index l = 0; l < L; ++l) {
    const Index n = A.row_dims[static_cast<size_t>(l)];
    const Index m = A.col_dims[static_cast<size_t>(l)];
    const Index al = A.rank(l), ar = A.rank(l + 1);
    const Index pl = x.rank(l), pr = x.rank(l + 1);
    const Index t = carry.rows();
    Mat<double> prod = Mat<double>::Zero(t * n, ar * pr);  // column index a' + ar * p'
    for (Index j = 0; j < m; ++j) {
      const auto xj = x.slice(l, j);  // pl x pr
      // w[t, a, p'] = sum_p carry[t, a + al*p] * xj(p, p')
      Mat<double> w = Mat<double>::Zero(t * al, pr);
      for (Index p = 0; p < pl; ++p) {
        const auto blkc = carry.middleCols(p * al, al);  // t x al
        for (Index pp = 0; pp < pr; ++pp) {
          const double c = xj(p, pp);
          if (c == 0.0) continue;
          for (Index a = 0; a < al; ++a) w.block(a * t, pp, t, 1) += c * blkc.col(a);
        }
      }
      for (Index i = 0; i < n; ++i) {
        const auto aij = A.slice(l, i, j);  // al x ar
        for (Index a = 0; a < al; ++a) {
          const auto wa = w.middleRows(a * t, t);  // t x pr
          for (Index ap = 0; ap < ar; ++ap) {
            const double c = aij(a, ap);
            if (c == 0.0) continue;
            for (Index pp = 0; pp < pr; ++pp) prod.col(ap + ar * pp).segment(i * t, t) += c * wa.col(pp);
          }
        }
      }
    }
    if (l == L - 1) {
      y.cores[static_cast<size_t>(l)] = prod;  // ar * pr == 1
      break;
    }
    // LQ split: prod = (lower triangular) * (orthonormal rows), truncate the
    // triangular factor by SVD.
    Mat<double> qothr, rfac;
    detail::thin_qr(Mat<double>(prod.transpose()), qothr, rfac);  // prod^T = Q R
    const Mat<double> lower = rfac.transpose();                   // (t*n) x k, prod = lower * Q^T
    Eigen::JacobiSVD<Mat<double>> svd(lower, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double delta = rel_tol > 0.0 ? rel_tol * svd.singularValues().norm() : 1e-14 * svd.singularValues().norm();
    Index k = std::min(detail::truncation_rank(svd.singularValues(), delta), max_rank);
    y.cores[static_cast<size_t>(l)] = svd.matrixU().leftCols(k);
    carry = svd.singularValues().head(k).asDiagonal() * svd.matrixV().leftCols(k).transpose() * qothr.transpose();
  }
  return y;
}

double bilinear(const TtTensorD& bra, const TtOperatorD& A, const TtTensorD& ket) {
  Mat<double> env = Mat<double>::Ones(1, 1);
  for (Index l = 0; l < A.order(); ++l) env = push_left_op(env, bra, A, ket, l);
  return env(0, 0);
}

constexpr Index kLocalDimCap = 12000;
constexpr Index kApplyCap = 1024;

struct DiffInfo {
  double resid = 0.0;
  TtTensorD kick;
  bool have_kick = false;
};

// Residual train of the effective system, rounded; returns the relative
// residual and (optionally) the enrichment block.
DiffInfo measure_diff(const TtOperatorD& A, const TtTensorD& b, const TtTensorD& x, double norm_b, double tol,
                      Index enrichment) {
  DiffInfo out;
  TtTensorD y = apply_rounded(A, x, 3e-3 * tol, kApplyCap);
  TtTensorD diff = tt_add(b, tt_scale(y, -1.0));
  double nrm = 0.0;
  if (enrichment > 0) {
    out.kick = tt_round(diff, 0.0, enrichment, &nrm);
    out.have_kick = true;
  } else {
    nrm = tt_norm(diff);
  }
  out.resid = nrm / norm_b;
  return out;
}

SolveResult solve_core(const Effective& eff, TtTensorD x, const SolveOptions& opts) {
  const TtOperatorD& A = eff.A;
  const TtTensorD& b = eff.b;
  const Index L = x.order();
  const std::vector<Index>& dims = x.dims;
  SolveResult result;
  ConvergenceTrace& trace = result.trace;

  const double norm_b = tt_norm(b);
  if (norm_b == 0.0) {
    result.x = tt_zero<double>(dims);
    trace.converged = true;
    trace.stop_reason = "residual";
    return result;
  }
  const double norm_A = tt_norm(A.tensor);
  const double trunc_rel = 0.05 * opts.tol_residual;

  right_orthogonalize(x);

  std::vector<Mat<double>> AL(static_cast<size_t>(L) + 1), AR(static_cast<size_t>(L) + 1);
  std::vector<Mat<double>> bL(static_cast<size_t>(L) + 1), bR(static_cast<size_t>(L) + 1);
  AL[0] = Mat<double>::Ones(1, 1);
  bL[0] = Mat<double>::Ones(1, 1);
  AR[static_cast<size_t>(L)] = Mat<double>::Ones(1, 1);
  bR[static_cast<size_t>(L)] = Mat<double>::Ones(1, 1);
  auto rebuild_right = [&]() {
    for (Index l = L - 1; l >= 1; --l) {
      AR[static_cast<size_t>(l)] = push_right_op(AR[static_cast<size_t>(l + 1)], x, A, x, l);
      bR[static_cast<size_t>(l)] = push_right_vec(bR[static_cast<size_t>(l + 1)], b, x, l);
    }
  };
  rebuild_right();

  DiffInfo diff = measure_diff(A, b, x, norm_b, opts.tol_residual, opts.enrichment_rank);
  if (diff.resid <= opts.tol_residual) {
    result.x = std::move(x);
    trace.converged = true;
    trace.stop_reason = "residual";
    trace.final_residual = diff.resid;
    return result;
  }

  double prev_energy = std::numeric_limits<double>::infinity();
  double prev_resid = diff.resid;
  double best_resid = diff.resid;
  int no_improve = 0;

  for (Index sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    const auto t0 = std::chrono::steady_clock::now();

    // Left-to-right: solve each core, then grow the outgoing bond with the
    // rounded-residual block (zero-padded, so the iterate is unchanged).
    Mat<double> kenv = Mat<double>::Ones(1, 1);
    for (Index l = 0; l < L; ++l) {
      const Index pl = x.rank(l), pr = x.rank(l + 1);
      const Index n = dims[static_cast<size_t>(l)];
      detail::require(pl * n * pr <= kLocalDimCap, "als_solve: local system too large");
      const Mat<double> H = local_matrix(AL[static_cast<size_t>(l)], AR[static_cast<size_t>(l + 1)], A, l, pl, pr);
      const Mat<double> g = local_rhs(bL[static_cast<size_t>(l)], bR[static_cast<size_t>(l + 1)], b, l, pl, pr);
      double rel = 0.0;
      const Vec<double> v = local_solve(H, Eigen::Map<const Vec<double>>(g.data(), g.size()), rel);
      trace.max_local_residual = std::max(trace.max_local_residual, rel);
      Mat<double> vcore = Eigen::Map<const Mat<double>>(v.data(), pl * n, pr);
      if (l == L - 1) {
        x.cores[static_cast<size_t>(l)] = std::move(vcore);
        break;
      }
      Mat<double> aug;
      if (diff.have_kick) {
        const Index zn = diff.kick.rank(l + 1);
        Mat<double> z(pl * n, zn);
        for (Index i = 0; i < n; ++i) z.middleRows(i * pl, pl) = kenv * diff.kick.slice(l, i);
        aug.resize(pl * n, pr + zn);
        aug << vcore, z;
      } else {
        aug = std::move(vcore);
      }
      Mat<double> q, r;
      detail::thin_qr(aug, q, r);
      const Index k = q.cols();
      if (k > opts.rank_cap) throw std::runtime_error("als_solve: rank cap exceeded");
      const Mat<double> rpart = r.leftCols(pr);
      const Index n2 = dims[static_cast<size_t>(l + 1)];
      const Index r2 = x.rank(l + 2);
      Mat<double> next(k * n2, r2);
      for (Index i2 = 0; i2 < n2; ++i2)
        next.middleRows(i2 * k, k) = rpart * x.cores[static_cast<size_t>(l + 1)].middleRows(i2 * pr, pr);
      x.cores[static_cast<size_t>(l)] = std::move(q);
      x.cores[static_cast<size_t>(l + 1)] = std::move(next);
      AL[static_cast<size_t>(l + 1)] = push_left_op(AL[static_cast<size_t>(l)], x, A, x, l);
      bL[static_cast<size_t>(l + 1)] = push_left_vec(bL[static_cast<size_t>(l)], x, b, l);
      if (diff.have_kick) kenv = push_left_vec(kenv, x, diff.kick, l);
    }

    // Right-to-left: solve and truncate each bond within the sweep budget.
    double norm_x = 0.0;
    for (Index l = L - 1; l >= 0; --l) {
      const Index pl = x.rank(l), pr = x.rank(l + 1);
      const Index n = dims[static_cast<size_t>(l)];
      detail::require(pl * n * pr <= kLocalDimCap, "als_solve: local system too large");
      const Mat<double> H = local_matrix(AL[static_cast<size_t>(l)], AR[static_cast<size_t>(l + 1)], A, l, pl, pr);
      const Mat<double> g = local_rhs(bL[static_cast<size_t>(l)], bR[static_cast<size_t>(l + 1)], b, l, pl, pr);
      double rel = 0.0;
      const Vec<double> v = local_solve(H, Eigen::Map<const Vec<double>>(g.data(), g.size()), rel);
      trace.max_local_residual = std::max(trace.max_local_residual, rel);
      Mat<double> vcore = Eigen::Map<const Mat<double>>(v.data(), pl * n, pr);
      if (l == 0) {
        norm_x = vcore.norm();
        x.cores[0] = std::move(vcore);
        break;
      }
      const Mat<double> h = detail::vertical_to_horizontal(vcore, pl, n, pr);
      Eigen::JacobiSVD<Mat<double>> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const double delta = trunc_rel * vcore.norm() / std::sqrt(double(std::max<Index>(L - 1, 1)));
      const Index k = detail::truncation_rank(svd.singularValues(), delta);
      if (k > opts.rank_cap) throw std::runtime_error("als_solve: rank cap exceeded");
      const Mat<double> vt = svd.matrixV().leftCols(k).transpose();  // k x (n*pr), orthonormal rows
      x.cores[static_cast<size_t>(l)] = detail::horizontal_to_vertical(vt, k, n, pr);
      const Mat<double> carry = svd.matrixU().leftCols(k) * svd.singularValues().head(k).asDiagonal();
      x.cores[static_cast<size_t>(l - 1)] = x.cores[static_cast<size_t>(l - 1)] * carry;
      AR[static_cast<size_t>(l)] = push_right_op(AR[static_cast<size_t>(l + 1)], x, A, x, l);
      bR[static_cast<size_t>(l)] = push_right_vec(bR[static_cast<size_t>(l + 1)], b, x, l);
    }

    // Consolidate: re-project Dirichlet zeros, measure, decide.
    if (eff.masked) {
      x = tt_round(tt_apply(eff.mask, x), 0.0);
      right_orthogonalize(x);
      rebuild_right();
      norm_x = x.cores[0].norm();
    }
    const double energy = 0.5 * bilinear(x, A, x) - tt_dot(b, x);
    diff = measure_diff(A, b, x, norm_b, opts.tol_residual, opts.enrichment_rank);

    Index max_rank = 1;
    for (Index r : x.ranks()) max_rank = std::max(max_rank, r);
    if (max_rank > opts.rank_cap) throw std::runtime_error("als_solve: rank cap exceeded");

    SweepRecord rec;
    rec.sweep = sweep;
    rec.residual = diff.resid;
    rec.energy = energy;
    rec.max_rank = max_rank;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace.sweeps.push_back(rec);

    if (std::isfinite(prev_energy)) {
      const double delta_x = (trunc_rel + 1e-13) * norm_x;
      const double slack = 1e-10 * std::max(1.0, std::abs(prev_energy)) + delta_x * prev_resid * norm_b +
                           0.5 * norm_A * delta_x * delta_x;
      if (energy > prev_energy + slack) throw std::runtime_error("als_solve: energy increased (divergence)");
    }

    if (diff.resid <= opts.tol_residual) {
      trace.converged = true;
      trace.stop_reason = "residual";
      break;
    }
    if (diff.resid <= 0.999 * best_resid) {
      best_resid = diff.resid;
      no_improve = 0;
    } else if (++no_improve >= 5) {
      trace.stop_reason = "stagnation";
      break;
    }
    prev_energy = energy;
    prev_resid = diff.resid;
  }

  if (trace.stop_reason.empty()) trace.stop_reason = "max_sweeps";
  trace.final_residual = diff.resid;
  result.x = std::move(x);
  return result;
}

void validate_options(const SolveOptions& opts) {
  detail::require(opts.tol_residual > 0.0, "als_solve: tol_residual must be positive");
  detail::require(opts.max_sweeps >= 1, "als_solve: max_sweeps must be positive");
  detail::require(opts.rank_cap >= 1, "als_solve: rank_cap must be positive");
  detail::require(opts.enrichment_rank >= 0, "als_solve: enrichment_rank must be non-negative");
}

TtTensorD masked_start(const Effective& eff, TtTensorD x0) {
  if (eff.masked) x0 = tt_round(tt_apply(eff.mask, x0), 0.0);
  return x0;
}

}  // namespace

SolveResult als_solve(const DiscreteProblem& p, const SolveOptions& opts) {
  validate_options(opts);
  if (opts.precondition != PreconditionKind::none) {
    detail::require(p.preconditioned == PreconditionKind::none, "als_solve: problem is already preconditioned");
    const DiscreteProblem q = precondition(p, opts.precondition);
    SolveOptions inner = opts;
    inner.precondition = PreconditionKind::none;
    SolveResult r = als_solve(q, inner);
    r.x = tt_round(tt_apply(q.basis_change, r.x), 0.01 * opts.tol_residual);
    return r;
  }
  const Effective eff = effective_system(p);
  const Index start_rank = std::max<Index>(1, std::min(opts.enrichment_rank, opts.rank_cap));
  TtTensorD x0 = masked_start(eff, tt_rand<double>(p.load.dims, start_rank, opts.seed));
  return solve_core(eff, std::move(x0), opts);
}

SolveResult als_solve(const DiscreteProblem& p, const TtTensorD& x0, const SolveOptions& opts) {
  validate_options(opts);
  detail::require(opts.precondition == PreconditionKind::none,
                  "als_solve: internal preconditioning requires the default initial guess");
  detail::require(x0.dims == p.load.dims, "als_solve: initial guess shape mismatch");
  const Effective eff = effective_system(p);
  return solve_core(eff, masked_start(eff, x0), opts);
}

double residual(const DiscreteProblem& p, const TtTensorD& x, double rounding) {
  detail::require(rounding >= 0.0, "residual: negative rounding tolerance");
  detail::require(x.dims == p.load.dims, "residual: shape mismatch");
  const Effective eff = effective_system(p);
  const double nb = tt_norm(eff.b);
  detail::require(nb > 0.0, "residual: zero load");
  TtTensorD y = rounding > 0.0 ? apply_rounded(eff.A, x, 0.3 * rounding, kApplyCap) : tt_apply(eff.A, x);
  TtTensorD diff = tt_add(eff.b, tt_scale(y, -1.0));
  if (rounding > 0.0) diff = tt_round(diff, 0.3 * rounding);
  return tt_norm(diff) / nb;
}

std::string trace_csv(const ConvergenceTrace& t) {
  std::string out = "sweep,residual,energy,max_rank,seconds\n";
  char buf[160];
  for (const SweepRecord& r : t.sweeps) {
    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%lld,%.6f\n", static_cast<long long>(r.sweep), r.residual,
                  r.energy, static_cast<long long>(r.max_rank), r.seconds);
    out += buf;
  }
  return out;
}

}  // namespace qttfem
