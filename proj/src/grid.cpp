#include "qttfem/grid.hpp"

#include <cmath>

namespace qttfem {

namespace {

using detail::require;

Basis basis_for_boundary(Boundary b) {
  switch (b) {
    case Boundary::dirichlet: return Basis::hat_dirichlet;
    case Boundary::periodic: return Basis::hat_periodic;
    case Boundary::none: return Basis::hat_free;
  }
  return Basis::hat_free;
}

Boundary boundary_for_basis(Basis b) {
  switch (b) {
    case Basis::hat_dirichlet: return Boundary::dirichlet;
    case Basis::hat_periodic: return Boundary::periodic;
    default: return Boundary::none;
  }
}

void require_single_block(const GridSpec& grid, const char* who) {
  require(grid.effective_blocks().size() == 1, std::string(who) + ": single-block grids only");
}

// Interleave the MSB-first bit streams of (px, py) into the level-major
// quadrant index: level l contributes digit 2*x_bit + y_bit.
Index interleave2(Index px, Index py, Index L) {
  Index q = 0;
  for (Index l = L - 1; l >= 0; --l) {
    const Index bx = (px >> l) & 1;
    const Index by = (py >> l) & 1;
    q = (q << 2) | (bx << 1) | by;
  }
  return q;
}

// Builds a rank-R binary-grid operator from a linear state machine run over
// the modes MSB-first.  trans(l, from, to) is the 2x2 (row-bit, col-bit)
// emission matrix of the transition; left/right are the boundary weights.
using Mat2 = Eigen::Matrix2d;
using TransFn = std::function<Mat2(Index, Index, Index)>;

TtOperatorD bit_automaton(Index L, Index R, const Eigen::RowVectorXd& left, const Eigen::VectorXd& right,
                          const TransFn& trans) {
  require(L >= 1, "bit_automaton: empty train");
  TtOperatorD a;
  a.row_dims.assign(static_cast<size_t>(L), 2);
  a.col_dims.assign(static_cast<size_t>(L), 2);
  a.tensor.dims.assign(static_cast<size_t>(L), 4);
  for (Index l = 0; l < L; ++l) {
    const bool first = (l == 0), last = (l == L - 1);
    const Index rl = first ? 1 : R;
    const Index rr = last ? 1 : R;
    Mat<double> core = Mat<double>::Zero(rl * 4, rr);
    for (Index from = 0; from < R; ++from)
      for (Index to = 0; to < R; ++to) {
        const Mat2 m = trans(l, from, to);
        for (Index i = 0; i < 2; ++i)
          for (Index j = 0; j < 2; ++j) {
            const double v = m(i, j);
            if (v == 0.0) continue;
            const Index mode = i + 2 * j;
            if (first && last)
              core(mode, 0) += left(from) * v * right(to);
            else if (first)
              core(mode, to) += left(from) * v;
            else if (last)
              core(from + R * mode, 0) += v * right(to);
            else
              core(from + R * mode, to) += v;
          }
      }
    a.tensor.cores.push_back(std::move(core));
  }
  return a;
}

// Shift state machine: state 0 scans bits above the borrow position (row and
// column bits agree), state 1 scans below it (row bit 0, column bit 1).
Mat2 shift_transition(Index from, Index to) {
  Mat2 m = Mat2::Zero();
  if (from == 0 && to == 0) m.setIdentity();
  if (from == 0 && to == 1) m(1, 0) = 1.0;
  if (from == 1 && to == 1) m(0, 1) = 1.0;
  return m;
}

TtOperatorD avg_or_grad(Index L, Boundary b, double shift_sign, double scale, const char* who) {
  require(b == Boundary::dirichlet || b == Boundary::periodic, std::string(who) + ": boundary must be dirichlet or periodic");
  const double wrap = (b == Boundary::periodic) ? shift_sign : 0.0;
  Eigen::RowVectorXd left(2);
  left << 1.0, wrap;
  Eigen::VectorXd right(2);
  right << 1.0, 1.0;
  auto trans = [shift_sign](Index, Index from, Index to) {
    Mat2 m = Mat2::Zero();
    if (from == 0 && to == 0) m.setIdentity();
    if (from == 0 && to == 1) m(1, 0) = shift_sign;
    if (from == 1 && to == 1) m(0, 1) = 1.0;
    return m;
  };
  TtOperatorD a = bit_automaton(L, 2, left, right, trans);
  a.tensor.cores[0] *= scale;
  return a;
}

TtOperatorD grad_for_basis(Index L, Basis basis) {
  return op_grad_cells(L, boundary_for_basis(basis));
}

TtOperatorD avg_for_basis(Index L, Basis basis) {
  return op_avg_cells(L, boundary_for_basis(basis));
}

bool is_hat(Basis b) { return b != Basis::pwc; }

// Exact swap of modes l and l+1; the new bond is re-revealed by SVD.
void swap_adjacent(TtTensorD& t, Index l) {
  const Index r0 = t.rank(l);
  const Index n1 = t.dims[static_cast<size_t>(l)];
  const Index n2 = t.dims[static_cast<size_t>(l + 1)];
  const Index r2 = t.rank(l + 2);
  Mat<double> m = Mat<double>::Zero(r0 * n2, n1 * r2);
  for (Index i1 = 0; i1 < n1; ++i1)
    for (Index i2 = 0; i2 < n2; ++i2)
      m.block(i2 * r0, i1 * r2, r0, r2) = t.slice(l, i1) * t.slice(l + 1, i2);
  Eigen::JacobiSVD<Mat<double>> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  Index k = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > kMachineRankTol * smax) ++k;
  k = std::max<Index>(k, 1);
  t.cores[static_cast<size_t>(l)] = svd.matrixU().leftCols(k);
  Mat<double> vt = s.head(k).asDiagonal() * svd.matrixV().leftCols(k).transpose();
  Mat<double> c2(k * n1, r2);
  for (Index i1 = 0; i1 < n1; ++i1) c2.middleRows(i1 * k, k) = vt.middleCols(i1 * r2, r2);
  t.cores[static_cast<size_t>(l + 1)] = std::move(c2);
  std::swap(t.dims[static_cast<size_t>(l)], t.dims[static_cast<size_t>(l + 1)]);
}

// Contract modes l and l+1 into one mode of size n1*n2 (first mode high).
Mat<double> merged_core(const TtTensorD& t, Index l) {
  const Index r0 = t.rank(l);
  const Index n1 = t.dims[static_cast<size_t>(l)];
  const Index n2 = t.dims[static_cast<size_t>(l + 1)];
  const Index r2 = t.rank(l + 2);
  Mat<double> core(r0 * n1 * n2, r2);
  for (Index i1 = 0; i1 < n1; ++i1)
    for (Index i2 = 0; i2 < n2; ++i2)
      core.middleRows((i1 * n2 + i2) * r0, r0) = t.slice(l, i1) * t.slice(l + 1, i2);
  return core;
}

// Split one mode of size n1*n2 (index i1*n2 + i2) into two modes.
void split_mode(std::vector<Mat<double>>& cores, std::vector<Index>& dims, const Mat<double>& core, Index r0, Index n1,
                Index n2, Index r2) {
  Mat<double> m(r0 * n1, n2 * r2);
  for (Index i1 = 0; i1 < n1; ++i1)
    for (Index i2 = 0; i2 < n2; ++i2)
      m.block(r0 * i1, i2 * r2, r0, r2) = core.middleRows((i1 * n2 + i2) * r0, r0);
  Eigen::JacobiSVD<Mat<double>> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  Index k = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > kMachineRankTol * smax) ++k;
  k = std::max<Index>(k, 1);
  cores.push_back(svd.matrixU().leftCols(k));
  dims.push_back(n1);
  Mat<double> vt = s.head(k).asDiagonal() * svd.matrixV().leftCols(k).transpose();
  Mat<double> c2(k * n2, r2);
  for (Index i2 = 0; i2 < n2; ++i2) c2.middleRows(i2 * k, k) = vt.middleCols(i2 * r2, r2);
  cores.push_back(std::move(c2));
  dims.push_back(n2);
}

FeFunction sample_axis_product(const Callable1& fx, const Callable1& fy, const GridSpec& grid, double tol, bool nodal) {
  require(grid.dim == 2, "separable sampling: dim must be 2");
  require_single_block(grid, "separable sampling");
  GridSpec axis{grid.level, 1, grid.boundary, {}};
  const double half = tol > 0.0 ? 0.5 * tol : 0.0;
  const FeFunction ux = nodal ? sample_nodal(fx, axis, half) : sample_cell_avg(fx, axis, half);
  const FeFunction uy = nodal ? sample_nodal(fy, axis, half) : sample_cell_avg(fy, axis, half);
  FeFunction u;
  u.grid = grid;
  u.basis = {nodal ? basis_for_boundary(grid.boundary) : Basis::pwc};
  u.coeffs = tt_round(tt_zip(ux.coeffs, uy.coeffs), tol);
  return u;
}

// Fine-grid smoother for nodal prolongation: identity at odd indices, mean of
// the two parents at even indices (acting on a child-replicated vector).
TtOperatorD refine_smoother(Index L_fine, Boundary b) {
  std::vector<Index> dims(static_cast<size_t>(L_fine), 2);
  TtTensorD pick_odd = tt_ones<double>(dims);
  pick_odd.cores.back() << 0.0, 1.0;
  TtTensorD pick_even = tt_ones<double>(dims);
  pick_even.cores.back() << 1.0, 0.0;
  TtOperatorD a = op_add(op_diag(pick_odd), op_compose(op_diag(pick_even), op_avg_cells(L_fine, b)));
  return op_round(a, 0.0);
}

}  // namespace

// --- operators ---------------------------------------------------------------

TtOperatorD op_bit_automaton(Index L, Index states, const Eigen::RowVectorXd& enter, const Eigen::VectorXd& exit,
                             const BitEmission& emit) {
  return bit_automaton(L, states, enter, exit, emit);
}

TtOperatorD op_shift_next(Index L, bool periodic) {
  Eigen::RowVectorXd left(2);
  left << 1.0, periodic ? 1.0 : 0.0;
  Eigen::VectorXd right(2);
  right << 0.0, 1.0;
  return bit_automaton(L, 2, left, right, [](Index, Index from, Index to) { return shift_transition(from, to); });
}

TtOperatorD op_grad_cells(Index L, Boundary b) {
  return avg_or_grad(L, b, -1.0, std::pow(2.0, double(L)), "op_grad_cells");
}

TtOperatorD op_avg_cells(Index L, Boundary b) {
  return avg_or_grad(L, b, 1.0, 0.5, "op_avg_cells");
}

TtOperatorD op_mask_boundary(Index L) {
  Eigen::RowVectorXd left(2);
  left << 1.0, -1.0;
  Eigen::VectorXd right(2);
  right << 1.0, 1.0;
  auto trans = [](Index, Index from, Index to) {
    Mat2 m = Mat2::Zero();
    if (from == 0 && to == 0) m.setIdentity();
    if (from == 1 && to == 1) m(1, 1) = 1.0;
    return m;
  };
  return bit_automaton(L, 2, left, right, trans);
}

TtOperatorD op_ones(Index L, double scale) {
  TtOperatorD a;
  a.row_dims.assign(static_cast<size_t>(L), 2);
  a.col_dims.assign(static_cast<size_t>(L), 2);
  a.tensor.dims.assign(static_cast<size_t>(L), 4);
  for (Index l = 0; l < L; ++l) a.tensor.cores.push_back(Mat<double>::Ones(4, 1));
  a.tensor.cores[0] *= scale;
  return a;
}

TtOperatorD op_mask_boundary_nd(Index L, Index dim) {
  require(dim == 1 || dim == 2, "op_mask_boundary_nd: dim must be 1 or 2");
  if (dim == 1) return op_mask_boundary(L);
  return op_round(op_zip(op_mask_boundary(L), op_mask_boundary(L)), 0.0);
}

TtOperatorD analysis_operator(AnalysisOp tag, Basis basis, const GridSpec& grid) {
  require_single_block(grid, "analysis_operator");
  const Index L = grid.level;
  if (basis == Basis::pwc) {
    require(tag == AnalysisOp::cell_avg, "analysis_operator: pwc data has no nodal samples");
    return op_identity<double>(grid.train_dims());
  }
  if (tag == AnalysisOp::nodal) return op_identity<double>(grid.train_dims());
  require(basis != Basis::hat_free, "analysis_operator: cell averages need a boundary rule");
  TtOperatorD avg = avg_for_basis(L, basis);
  if (grid.dim == 1) return avg;
  require(grid.dim == 2, "analysis_operator: dim must be 1 or 2");
  return op_zip(avg, avg);
}

// --- sampling ----------------------------------------------------------------

FeFunction sample_nodal(const Callable1& f, const GridSpec& grid, double tol) {
  require(grid.dim == 1, "sample_nodal: callable arity does not match grid.dim");
  require_single_block(grid, "sample_nodal");
  const Index L = grid.level;
  require((Index(1) << L) <= kDenseCap, "sample_nodal: dense cap exceeded");
  const Index n = Index(1) << L;
  const double h = grid.meshwidth();
  Vec<double> v(n);
  for (Index p = 0; p < n; ++p) v(p) = f(double(p + 1) * h);
  FeFunction u;
  u.grid = grid;
  u.basis = {basis_for_boundary(grid.boundary)};
  u.coeffs = tt_from_full(v, grid.train_dims(), tol);
  return u;
}

FeFunction sample_nodal(const Callable2& f, const GridSpec& grid, double tol) {
  require(grid.dim == 2, "sample_nodal: callable arity does not match grid.dim");
  require_single_block(grid, "sample_nodal");
  const Index L = grid.level;
  require((Index(1) << (2 * L)) <= kDenseCap, "sample_nodal: dense cap exceeded");
  const Index n = Index(1) << L;
  const double h = grid.meshwidth();
  Vec<double> v(n * n);
  for (Index px = 0; px < n; ++px)
    for (Index py = 0; py < n; ++py) v(interleave2(px, py, L)) = f(double(px + 1) * h, double(py + 1) * h);
  FeFunction u;
  u.grid = grid;
  u.basis = {basis_for_boundary(grid.boundary)};
  u.coeffs = tt_from_full(v, grid.train_dims(), tol);
  return u;
}

FeFunction sample_cell_avg(const Callable1& f, const GridSpec& grid, double tol) {
  require(grid.dim == 1, "sample_cell_avg: callable arity does not match grid.dim");
  require_single_block(grid, "sample_cell_avg");
  const Index L = grid.level;
  require((Index(1) << L) <= kDenseCap, "sample_cell_avg: dense cap exceeded");
  const Index n = Index(1) << L;
  const double h = grid.meshwidth();
  Vec<double> v(n);
  for (Index p = 0; p < n; ++p) v(p) = f((double(p) + 0.5) * h);
  FeFunction u;
  u.grid = grid;
  u.basis = {Basis::pwc};
  u.coeffs = tt_from_full(v, grid.train_dims(), tol);
  return u;
}

FeFunction sample_cell_avg(const Callable2& f, const GridSpec& grid, double tol) {
  require(grid.dim == 2, "sample_cell_avg: callable arity does not match grid.dim");
  require_single_block(grid, "sample_cell_avg");
  const Index L = grid.level;
  require((Index(1) << (2 * L)) <= kDenseCap, "sample_cell_avg: dense cap exceeded");
  const Index n = Index(1) << L;
  const double h = grid.meshwidth();
  Vec<double> v(n * n);
  for (Index px = 0; px < n; ++px)
    for (Index py = 0; py < n; ++py)
      v(interleave2(px, py, L)) = f((double(px) + 0.5) * h, (double(py) + 0.5) * h);
  FeFunction u;
  u.grid = grid;
  u.basis = {Basis::pwc};
  u.coeffs = tt_from_full(v, grid.train_dims(), tol);
  return u;
}

FeFunction sample_nodal_separable(const Callable1& fx, const Callable1& fy, const GridSpec& grid, double tol) {
  return sample_axis_product(fx, fy, grid, tol, true);
}

FeFunction sample_cell_avg_separable(const Callable1& fx, const Callable1& fy, const GridSpec& grid, double tol) {
  return sample_axis_product(fx, fy, grid, tol, false);
}

FeFunction project_pl(const Callable1& f, const GridSpec& grid) { return sample_nodal(f, grid, 0.0); }
FeFunction project_pl(const Callable2& f, const GridSpec& grid) { return sample_nodal(f, grid, 0.0); }
FeFunction project_pwc(const Callable1& f, const GridSpec& grid) { return sample_cell_avg(f, grid, 0.0); }
FeFunction project_pwc(const Callable2& f, const GridSpec& grid) { return sample_cell_avg(f, grid, 0.0); }

FeFunction project_pl(const FeFunction& u, const GridSpec& grid) {
  require(is_hat(u.basis0()), "project_pl: source must be a nodal function");
  require(grid.dim == u.grid.dim, "project_pl: dimension mismatch");
  require(grid.level >= u.grid.level, "project_pl: target grid must be at least as fine");
  if (grid.level == u.grid.level) {
    FeFunction out = u;
    out.grid = grid;
    return out;
  }
  FeFunction out = prolong(u, grid.level - u.grid.level);
  out.grid = grid;
  return out;
}

// --- transposition / mode surgery ---------------------------------------------

TtTensorD transpose_levels(const TtTensorD& t, Index d, Index L, TransposeDirection dir) {
  detail::check_train(t);
  require(t.order() == d * L, "transpose_levels: order != d*L");
  for (Index n : t.dims) require(n == 2, "transpose_levels: binary modes required");
  if (d == 1) return t;
  std::vector<Index> target(static_cast<size_t>(d * L));
  for (Index a = 0; a < d; ++a)
    for (Index l = 0; l < L; ++l) {
      if (dir == TransposeDirection::forward)
        target[static_cast<size_t>(a * L + l)] = l * d + a;
      else
        target[static_cast<size_t>(l * d + a)] = a * L + l;
    }
  TtTensorD out = t;
  bool moved = true;
  while (moved) {
    moved = false;
    for (Index p = 0; p + 1 < out.order(); ++p)
      if (target[static_cast<size_t>(p)] > target[static_cast<size_t>(p + 1)]) {
        swap_adjacent(out, p);
        std::swap(target[static_cast<size_t>(p)], target[static_cast<size_t>(p + 1)]);
        moved = true;
      }
  }
  return out;
}

TtTensorD merge_levels(const TtTensorD& t, Index d) {
  detail::check_train(t);
  require(d >= 1 && t.order() % d == 0, "merge_levels: order not divisible by d");
  if (d == 1) return t;
  TtTensorD work = t;
  for (Index g = 0; g < t.order() / d; ++g) {
    // groups 0..g-1 already collapsed to one mode each, so group g starts at
    // mode g throughout its d-1 contractions
    for (Index k = 0; k < d - 1; ++k) {
      Mat<double> merged = merged_core(work, g);
      work.dims[static_cast<size_t>(g)] *= work.dims[static_cast<size_t>(g + 1)];
      work.dims.erase(work.dims.begin() + g + 1);
      work.cores[static_cast<size_t>(g)] = std::move(merged);
      work.cores.erase(work.cores.begin() + g + 1);
    }
  }
  detail::check_train(work);
  return work;
}

TtTensorD split_levels(const TtTensorD& t, Index d) {
  detail::check_train(t);
  if (d == 1) return t;
  const Index m = Index(1) << d;
  for (Index n : t.dims) require(n == m, "split_levels: mode sizes must equal 2^d");
  TtTensorD out;
  TtTensorD work = t;
  // split every mode into (2, rest) repeatedly, high bit first
  for (Index pass = 0; pass < d - 1; ++pass) {
    TtTensorD next;
    for (Index l = 0; l < work.order(); ++l) {
      const Index n = work.dims[static_cast<size_t>(l)];
      if (n > 2) {
        split_mode(next.cores, next.dims, work.cores[static_cast<size_t>(l)], work.rank(l), 2, n / 2, work.rank(l + 1));
      } else {
        next.cores.push_back(work.cores[static_cast<size_t>(l)]);
        next.dims.push_back(n);
      }
    }
    work = std::move(next);
  }
  out = std::move(work);
  detail::check_train(out);
  return out;
}

// --- norms ---------------------------------------------------------------------

namespace {

double norm_squared_terms_1d(const TtTensorD& c, Index L, Basis basis, bool h1) {
  const double h = std::pow(2.0, -double(L));
  TtTensorD g = tt_apply(grad_for_basis(L, basis), c);
  if (h1) {
    const double gn = tt_norm(g);
    return h * gn * gn;
  }
  TtTensorD a = tt_apply(avg_for_basis(L, basis), c);
  const double an = tt_norm(a), gn = tt_norm(g);
  return h * (an * an + h * h / 12.0 * gn * gn);
}

double norm_squared_terms_2d(const TtTensorD& c, Index L, Basis basis, bool h1) {
  const double h = std::pow(2.0, -double(L));
  const TtOperatorD G = grad_for_basis(L, basis);
  const TtOperatorD C = avg_for_basis(L, basis);
  const double gx = tt_norm(tt_apply(op_zip(G, C), c));
  const double gy = tt_norm(tt_apply(op_zip(C, G), c));
  const double gxy = tt_norm(tt_apply(op_zip(G, G), c));
  if (h1) return h * h * (gx * gx + gy * gy) + h * h * h * h / 6.0 * gxy * gxy;
  const double cc = tt_norm(tt_apply(op_zip(C, C), c));
  const double k = h * h / 12.0;
  return h * h * (cc * cc + k * (gx * gx + gy * gy) + k * k * gxy * gxy);
}

double fe_norm(const FeFunction& u, const TtTensorD& c, bool h1) {
  const auto blocks = u.grid.effective_blocks();
  const Basis b0 = u.basis0();
  if (b0 == Basis::pwc) {
    require(!h1, "h1_seminorm: not defined for pwc data");
    double bits = 0.0;
    for (const auto& blk : blocks) bits += double(blk.levels);
    return tt_norm(c) * std::pow(2.0, -0.5 * double(u.grid.dim) * bits);
  }
  require(blocks.size() == 1, "norm: multi-block nodal grids are handled by the limit layer");
  require(u.grid.dim == 1 || u.grid.dim == 2, "norm: dim must be 1 or 2");
  const double sq = u.grid.dim == 1 ? norm_squared_terms_1d(c, u.grid.level, b0, h1)
                                    : norm_squared_terms_2d(c, u.grid.level, b0, h1);
  return std::sqrt(sq);
}

TtTensorD diff_coeffs(const FeFunction& u, const FeFunction& v) {
  require(u.grid.level == v.grid.level && u.grid.dim == v.grid.dim, "norm: grid mismatch");
  require(u.basis0() == v.basis0(), "norm: basis mismatch");
  return tt_add(u.coeffs, tt_scale(v.coeffs, -1.0));
}

}  // namespace

double h1_seminorm(const FeFunction& u) { return fe_norm(u, u.coeffs, true); }
double h1_seminorm(const FeFunction& u, const FeFunction& v) { return fe_norm(u, diff_coeffs(u, v), true); }
double l2_norm(const FeFunction& u) { return fe_norm(u, u.coeffs, false); }
double l2_norm(const FeFunction& u, const FeFunction& v) { return fe_norm(u, diff_coeffs(u, v), false); }

// --- prolongation ---------------------------------------------------------------

FeFunction prolong(const FeFunction& u, Index extra) {
  require(extra >= 0, "prolong: negative refinement");
  require_single_block(u.grid, "prolong");
  FeFunction out = u;
  const Basis b = u.basis0();
  require(b != Basis::hat_free, "prolong: free-boundary nodal data has no unique refinement");
  for (Index step = 0; step < extra; ++step) {
    const Index Lf = out.grid.level + 1;
    // replicate each parent onto its 2^dim children via a trailing ones core
    TtTensorD c = out.coeffs;
    c.dims.push_back(out.grid.mode_size());
    c.cores.push_back(Mat<double>::Ones(out.grid.mode_size(), 1));
    if (b != Basis::pwc) {
      const Boundary bnd = boundary_for_basis(b);
      const TtOperatorD a = refine_smoother(Lf, bnd);
      if (out.grid.dim == 1) {
        c = tt_round(tt_apply(a, c), 0.0);
      } else {
        c = tt_round(tt_apply(op_zip(a, a), c), 0.0);
      }
    }
    out.coeffs = std::move(c);
    out.grid.level = Lf;
    if (!out.grid.blocks.empty()) out.grid.blocks[0].levels = Lf;
  }
  return out;
}

}  // namespace qttfem
