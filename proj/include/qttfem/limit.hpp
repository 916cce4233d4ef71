#pragma once

#include "qttfem/solver.hpp"

namespace qttfem {

// One microscale rung resolved: the d periodic corrector components w_k on the
// unit-cell grid (P1, zero mean) and their piecewise-constant derivative
// profiles.  jac[k*dim + l] holds d w_k / d y_l as cell values.  A
// slow-sampled solve (dim 1 only) prepends `slow_level` piecewise-constant
// modes carrying the slow cell index; the zero-mean gauge then holds per slow
// cell.
struct CellSolution {
  std::vector<FeFunction> w;
  std::vector<FeFunction> jac;
  Index dim = 1;
  Index level = 0;
  bool slow_dependent = false;
  Index slow_level = 0;
};

// Coefficient cascade produced by eliminating microscales one at a time,
// fastest first.  coefficients[0] is the input with n microscales and
// coefficients[j+1] is the result of averaging out the fastest scale of
// coefficients[j] against cells[j]; coefficients[n] depends on the slow
// variables only.  spectra[j] records the verified eigenvalue window of the
// j-th averaged matrix.
struct ScaleLadder {
  std::vector<MultiscaleCoefficient> coefficients;
  std::vector<CellSolution> cells;
  std::vector<Eigen::Vector2d> spectra;
  Index cell_level = 0;
  double tol = 0.0;

  Index scales() const { return static_cast<Index>(cells.size()); }
  // Coefficient with i microscales remaining and the cell solution of its
  // fastest scale (i = 1..n).
  const MultiscaleCoefficient& coefficient(Index i) const {
    return coefficients[static_cast<size_t>(scales() - i)];
  }
  const CellSolution& cell(Index i) const { return cells[static_cast<size_t>(scales() - i)]; }
};

// Solution of the slow-variable problem for the fully averaged coefficient:
// nodal values of u0 and the d piecewise-constant cell projections of its
// gradient.
struct HomogenizedSolution {
  FeFunction u0;
  std::vector<FeFunction> v0;
  ConvergenceTrace trace;
};

// The slow solution together with the scale-interaction functions.
// u[i-1] is the i-th interaction term, a function on the product of the slow
// grid and the first i unit cells (one grid block per factor, all at the same
// level); it is piecewise constant in every variable except the fastest, in
// which it is P1-periodic with zero mean.  v[i] holds the d components of the
// accumulated gradient sum on the same product grid, piecewise constant in
// every variable; v[0] is the slow gradient itself.
struct LimitSolution {
  FeFunction u0;
  std::vector<FeFunction> u;
  std::vector<std::vector<FeFunction>> v;
};

// --- cell problems -----------------------------------------------------------

// Corrector of the fastest microscale of c, solved on the periodic unit-cell
// grid at level L_cell.  The overload without slow information requires the
// cell coefficient to be independent of all slower variables (declared
// separable, or verified constant by spot sampling); it performs d
// one-dimensional solves for a separable factorization and one d-dimensional
// solve otherwise.  The slow_point overload freezes the slower coordinates
// (dim slow values followed by dim values per slower microscale, truncation
// allowed).  The slow_grid overload (dim 1, one microscale) samples the slow
// variable piecewise constantly at the cells of slow_grid and solves all cell
// problems jointly as one block-diagonal system.
// Throws on non-convergence of the inner solver, on coefficient samples
// outside the declared ellipticity window, and when the corrector energy
// exceeds its a-priori bound Gamma/gamma beyond discretization slack.
CellSolution solve_cell(const MultiscaleCoefficient& c, Index L_cell, double tol);
CellSolution solve_cell(const MultiscaleCoefficient& c, const std::vector<double>& slow_point, Index L_cell,
                        double tol);
CellSolution solve_cell(const MultiscaleCoefficient& c, const GridSpec& slow_grid, Index L_cell, double tol);

// Averaged coefficient matrix of a slow-independent cell solution: the cell
// average of (I + Jw) a, evaluated by exact midpoint sums.  Symmetric up to
// the inner solver tolerance.
Mat<double> upscaled_matrix(const MultiscaleCoefficient& c, const CellSolution& cell);

// Coefficient with the fastest microscale averaged out.  Scalar (isotropic)
// results only: an averaged matrix with unequal diagonal entries throws.
// Verifies symmetry (1e-10 relative) and that the averaged spectrum stays
// inside the declared ellipticity window up to discretization slack.
MultiscaleCoefficient upscale(const MultiscaleCoefficient& c, const CellSolution& cell);

// Full cascade A_n -> A_0 via repeated solve_cell/upscale on the
// slow-independent fast path.
ScaleLadder build_ladder(const MultiscaleCoefficient& c, Index L_cell, double tol);

// --- slow problem and scale interactions --------------------------------------

// Dirichlet P1 solve for a coefficient without microscales (c.n == 0) with
// load f, plus the piecewise-constant cell projections of the gradient.
HomogenizedSolution solve_homogenized(const MultiscaleCoefficient& a0, const Callable1& f, const GridSpec& grid,
                                      double tol);
HomogenizedSolution solve_homogenized(const MultiscaleCoefficient& a0, const Callable2& f, const GridSpec& grid,
                                      double tol);

// Scale-interaction recursion: per rung i = 1..n,
//   u_i = sum_k w_{ik} v_{i-1,k}   and   v_{i,l} = v_{i-1,l} + sum_k (d w_{ik} / d y_l) v_{i-1,k},
// with TT rounding at tol after every product.  dim 1 only for n >= 1.
// Throws when any intermediate rank exceeds rank_cap.
LimitSolution reconstruct_interactions(const ScaleLadder& ladder, const HomogenizedSolution& hom, double tol,
                                       Index rank_cap = 200);

// --- norms and product-grid helpers --------------------------------------------

// Graded error measure: the unit-coefficient energy seminorm of the slow part
// plus, per interaction term, the L2 norm of its derivative in the fastest
// variable.  Zero exactly when the discrete solutions coincide.
double triple_norm(const LimitSolution& s);
double triple_norm_diff(const LimitSolution& a, const LimitSolution& b);

// Separated product u(x) * w(y) on the concatenated grid; block roles must be
// distinct between the factors.
FeFunction fe_product(const FeFunction& slow_part, const FeFunction& fast_part);

// Integral over the variable of the last grid block (exact for P1 and pwc
// data); the result lives on the remaining blocks.
FeFunction fast_mean(const FeFunction& u);

// L2 norm of the derivative with respect to the last block's variable, which
// must carry P1 data; all other blocks must be piecewise constant.
double fast_gradient_seminorm(const FeFunction& u);

}  // namespace qttfem
