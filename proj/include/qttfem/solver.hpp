#pragma once

#include <string>

#include "qttfem/assembly.hpp"

namespace qttfem {

// Options for the alternating solver.  `precondition` requests an internal
// change of coordinates; the problem must arrive raw and the returned
// solution is mapped back to the coordinates the problem was posed in.
// `seed` drives the random initial guess when no x0 is supplied.
struct SolveOptions {
  double tol_residual = 1e-8;
  Index max_sweeps = 50;
  Index rank_cap = 200;
  Index enrichment_rank = 4;
  PreconditionKind precondition = PreconditionKind::none;
  unsigned long seed = 0;
};

struct SweepRecord {
  Index sweep = 0;       // 1-based
  double residual = 0.0; // relative residual of the effective system
  double energy = 0.0;   // 0.5 x^T A x - b^T x of the effective system
  Index max_rank = 0;    // largest bond rank of the iterate
  double seconds = 0.0;  // wall time of this sweep
};

struct ConvergenceTrace {
  std::vector<SweepRecord> sweeps;
  bool converged = false;
  std::string stop_reason;           // "residual" | "stagnation" | "max_sweeps"
  double final_residual = 0.0;
  double max_local_residual = 0.0;   // worst backward error of a local solve
};

struct SolveResult {
  TtTensorD x;
  ConvergenceTrace trace;
};

// Alternating one-site Galerkin sweeps over the cores of x with residual-based
// basis enrichment: each full sweep solves every local system densely
// (left-to-right growing the basis by a rank-limited rounded residual block,
// right-to-left truncating bonds), so the energy of the effective system is
// non-increasing across sweeps up to truncation slack.  Dirichlet problems are
// solved in masked form (boundary-penalized operator, zeroed load) and the
// iterate is re-projected onto the constrained index set every sweep.  Stops
// when the relative residual reaches tol_residual, when the residual stagnates
// at its accuracy floor (no 0.1% improvement over the running best for five
// consecutive sweeps), or at max_sweeps; the trace records which.  Throws
// std::runtime_error when a bond rank exceeds rank_cap or the energy
// increases beyond slack.
SolveResult als_solve(const DiscreteProblem& p, const SolveOptions& opts);
SolveResult als_solve(const DiscreteProblem& p, const TtTensorD& x0, const SolveOptions& opts);

// Relative residual ||A x - b|| / ||b|| of the effective (masked) system.
// rounding > 0 compresses the residual train to that relative tolerance
// before the norm is taken; rounding = 0 measures it at machine precision.
double residual(const DiscreteProblem& p, const TtTensorD& x, double rounding = 0.0);

// CSV rendering: header "sweep,residual,energy,max_rank,seconds" then one row
// per sweep.  All numeric fields except seconds are deterministic for a fixed
// problem, options, and seed.
std::string trace_csv(const ConvergenceTrace& t);

}  // namespace qttfem
