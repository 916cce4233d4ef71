#pragma once

#include "qttfem/polytools.hpp"

namespace qttfem {

// A scalar diffusion coefficient with n dyadic microscales,
//   a(x) = value(x, x/eps_1, ..., x/eps_n),   eps_i = 2^{-lambda_i},
// acting isotropically (the matrix coefficient is a * I).  A declared product
// structure a = prod_axis slow[axis](x_axis) * prod_i prod_axis fast[i][axis](y_i,axis)
// unlocks the exact rank-bounded sampling path; every fast factor must be
// one-periodic.  gamma/Gamma are the ellipticity witnesses and are spot-checked
// by pseudo-random sampling during assembly.
struct MultiscaleCoefficient {
  Index dim = 1;
  Index n = 0;
  std::vector<Index> lambdas;  // strictly increasing scale exponents, size n
  double gamma = 1.0;
  double Gamma = 1.0;
  // Pointwise evaluation; arguments are dim slow coordinates followed by dim
  // coordinates per microscale (already folded into the unit cell).
  std::function<double(const std::vector<double>&)> value;
  bool separable = false;
  std::vector<Callable1> slow_axes;               // size dim when separable (empty factor = 1)
  std::vector<std::vector<Callable1>> fast_axes;  // size n, each of size dim
};

enum class PreconditionKind { none, jacobi, level_scaling };

// A discretized symmetric second-order problem in TT form.  `stiffness` is the
// raw Galerkin operator (no boundary projection applied); Dirichlet problems
// constrain the node set via op_mask_boundary_nd at solve time.  Cell problems
// carry one load per coordinate direction in `loads` (load == loads[0]).
// When `preconditioned` is not `none` the system is expressed in transformed
// coordinates z and the physical solution is u = basis_change * z.
struct DiscreteProblem {
  TtOperatorD stiffness;
  TtTensorD load;
  std::vector<TtTensorD> loads;
  GridSpec grid;
  double tol = 0.0;
  PreconditionKind preconditioned = PreconditionKind::none;
  TtOperatorD basis_change;  // empty unless preconditioned
};

// Coefficient samples at cell midpoints of the level-L dyadic grid (size-4
// modes for dim = 2).  Separable coefficients are built exactly: slow factors
// through an adaptive Chebyshev fit, fast factors through an adaptive
// trigonometric fit placed on the fine 2^{L-lambda_i} block below lambda_i
// rank-1 repetition cores.  Non-separable coefficients are sampled densely
// (dim * L <= 24).  Requires L >= lambda_n so every scale is resolved.
TtTensorD sample_coefficient(const MultiscaleCoefficient& c, Index L, double tol);

// Dirichlet stiffness and load on the level grid.level dyadic grid,
//   K = h^d B^T diag(a) B (exact per-term Kronecker quadrature for d = 2),
//   b = h^d C^T f_mid,
// with the coefficient frozen at cell midpoints.  The callable overload
// samples f at cell midpoints; the tensor overload takes those samples
// directly (binary modes for d = 1, size-4 modes for d = 2).
DiscreteProblem assemble_multiscale(const MultiscaleCoefficient& c, const Callable1& f, const GridSpec& grid,
                                    double tol);
DiscreteProblem assemble_multiscale(const MultiscaleCoefficient& c, const Callable2& f, const GridSpec& grid,
                                    double tol);
DiscreteProblem assemble_multiscale(const MultiscaleCoefficient& c, const TtTensorD& f_cells, const GridSpec& grid,
                                    double tol);

// Periodic cell problem on the unit cell: stiffness of the form above plus the
// mean-zero gauge penalty sigma * (ones ones^T / 2^{dL}) with sigma = max
// sampled coefficient, and the d direction loads b_k = -h^d B_k^T a.  The
// callable overloads sample the one-periodic coefficient densely at cell
// midpoints; the tensor overload takes midpoint samples directly.
DiscreteProblem assemble_cell_problem(const Callable1& a_fast, const GridSpec& grid, double tol);
DiscreteProblem assemble_cell_problem(const Callable2& a_fast, const GridSpec& grid, double tol);
DiscreteProblem assemble_cell_problem(const TtTensorD& a_cells, const GridSpec& grid, double tol);

// Symmetric change of coordinates improving the stiffness condition number.
//   none          identity;
//   jacobi        diagonal inverse-square-root scaling (dense-assisted,
//                 dim * level <= 24);
//   level_scaling hierarchical-basis synthesis with per-level energy weights
//                 (Dirichlet grids only; condition number O(1) for d = 1).
// The Dirichlet constraint set is invariant under both transforms, so masking
// in z coordinates uses the same boundary projector.
DiscreteProblem precondition(const DiscreteProblem& p, PreconditionKind kind);

// Building blocks of level_scaling, exposed for direct verification.
// Hierarchical-basis synthesis W: column [m-bits][0][1^s] holds the interior
// hat function with 2^s trailing ones (peak value one); the all-ones column
// holds the boundary ramp.
TtOperatorD op_hierarchical_synthesis(Index L);
// Diagonal operator whose entry at index q is weight[s(q)], where s(q) counts
// the trailing one bits of q.
TtOperatorD op_trailing_ones_diag(Index L, const Vec<double>& weights);

// Exact diagonal of a TT operator as a TT vector (rank-preserving).
TtTensorD op_diagonal_part(const TtOperatorD& a);

// Dirichlet-masked operator M K M + sigma_bc (I - M) and masked load M b; the
// penalty keeps the operator definite on the constrained indices.
TtOperatorD masked_operator(const TtOperatorD& stiffness, const GridSpec& grid, double sigma_bc, double tol);
TtTensorD masked_load(const TtTensorD& load, const GridSpec& grid, double tol);

}  // namespace qttfem
