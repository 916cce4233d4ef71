#pragma once

#include "qttfem/tt_operator.hpp"

#include <functional>
#include <optional>
#include <string>

namespace qttfem {

enum class Boundary { dirichlet, periodic, none };

enum class Basis { hat_dirichlet, hat_periodic, pwc, hat_free };

// Tag selecting the sampling map used to identify FE functions with grid data:
// nodal point values or cell averages.
enum class AnalysisOp { nodal, cell_avg };

struct ScaleBlock {
  std::string role;  // e.g. "physical", "scale1", ...
  Index levels = 0;
};

// Virtual dyadic grid descriptor.  Per axis there are 2^level nodes/cells with
// meshwidth 2^-level; for dim = 2 the train is level-major: mode l carries the
// two bits of level l (first axis in the high bit).  Product-domain functions
// carry several blocks; each block contributes `levels` modes of size 2^dim.
struct GridSpec {
  Index level = 0;
  Index dim = 1;
  Boundary boundary = Boundary::dirichlet;
  std::vector<ScaleBlock> blocks;  // empty means one physical block of `level`

  Index mode_size() const { return Index(1) << dim; }
  std::vector<ScaleBlock> effective_blocks() const {
    if (!blocks.empty()) return blocks;
    return {ScaleBlock{"physical", level}};
  }
  Index total_modes() const {
    Index n = 0;
    for (const auto& b : effective_blocks()) n += b.levels;
    return n;
  }
  std::vector<Index> train_dims() const { return std::vector<Index>(static_cast<size_t>(total_modes()), mode_size()); }
  double meshwidth() const { return std::pow(2.0, -double(level)); }
};

// FE function: grid + per-block basis tags + TT coefficients.  Dirichlet hat
// storage keeps 2^level entries per axis with the boundary-forced entry (the
// all-ones index, node t = 1) stored as an explicit zero.
struct FeFunction {
  GridSpec grid;
  std::vector<Basis> basis;  // one tag per block
  TtTensorD coeffs;

  Basis basis0() const { return basis.empty() ? Basis::hat_dirichlet : basis[0]; }
};

using Callable1 = std::function<double(double)>;
using Callable2 = std::function<double(double, double)>;

// --- sampling / projection -------------------------------------------------

FeFunction sample_nodal(const Callable1& f, const GridSpec& grid, double tol);
FeFunction sample_nodal(const Callable2& f, const GridSpec& grid, double tol);
FeFunction sample_cell_avg(const Callable1& f, const GridSpec& grid, double tol);
FeFunction sample_cell_avg(const Callable2& f, const GridSpec& grid, double tol);

// Separable 2D constructors (no dense cap): per-axis sampling + level zip.
FeFunction sample_nodal_separable(const Callable1& fx, const Callable1& fy, const GridSpec& grid, double tol);
FeFunction sample_cell_avg_separable(const Callable1& fx, const Callable1& fy, const GridSpec& grid, double tol);

// P1 nodal interpolant / piecewise-constant cell-average projection.
FeFunction project_pl(const Callable1& f, const GridSpec& grid);
FeFunction project_pl(const Callable2& f, const GridSpec& grid);
FeFunction project_pwc(const Callable1& f, const GridSpec& grid);
FeFunction project_pwc(const Callable2& f, const GridSpec& grid);
// Re-projection of an existing FE function onto a target grid of equal or
// finer level (nodal values are preserved).
FeFunction project_pl(const FeFunction& u, const GridSpec& grid);

// --- level transposition and mode surgery ----------------------------------

enum class TransposeDirection { forward, inverse };

// Permutes d axis-major binary bit streams into the level-major interleaved
// order (forward) or back (inverse).  Exact up to machine rounding.
TtTensorD transpose_levels(const TtTensorD& t, Index d, Index L, TransposeDirection dir);

// Merge groups of d adjacent binary modes into size-2^d modes (first mode of
// each group becomes the high bit), and the exact inverse split.
TtTensorD merge_levels(const TtTensorD& t, Index d);
TtTensorD split_levels(const TtTensorD& t, Index d);

// --- grid operators (binary automata; exact for every L) --------------------

// Rank-R binary-grid operator from a linear state machine run over the modes
// MSB-first.  emit(l, from, to) is the 2x2 (row-bit, col-bit) emission matrix
// of the transition at mode l; enter/exit are the boundary weights.
using BitEmission = std::function<Eigen::Matrix2d(Index, Index, Index)>;
TtOperatorD op_bit_automaton(Index L, Index states, const Eigen::RowVectorXd& enter, const Eigen::VectorXd& exit,
                             const BitEmission& emit);

// (S u)[p] = u[p-1] with u[-1] = 0, or wrap-around if periodic.
TtOperatorD op_shift_next(Index L, bool periodic);
// Cell gradient 2^L (I - S): maps nodal values to per-cell derivative values.
TtOperatorD op_grad_cells(Index L, Boundary b);
// Cell average (I + S)/2: maps nodal values to per-cell means.
TtOperatorD op_avg_cells(Index L, Boundary b);
// Diagonal projector zeroing the boundary-forced entry (index all ones).
TtOperatorD op_mask_boundary(Index L);
// scale * ones ones^T  (rank one).
TtOperatorD op_ones(Index L, double scale);
// d-dimensional variants (level-major size-4 modes for d=2).
TtOperatorD op_mask_boundary_nd(Index L, Index dim);

// Analysis operator turning FE coefficients into grid samples per the tag.
TtOperatorD analysis_operator(AnalysisOp tag, Basis basis, const GridSpec& grid);

// --- norms -------------------------------------------------------------------

// Galerkin quadratic-form norms with unit coefficient.  The two-argument
// versions measure the difference u - v.
double h1_seminorm(const FeFunction& u);
double h1_seminorm(const FeFunction& u, const FeFunction& v);
double l2_norm(const FeFunction& u);
double l2_norm(const FeFunction& u, const FeFunction& v);

// Nodal prolongation by `extra` dyadic levels (P1 interpolation; nodal values
// at coarse nodes are preserved).  For pwc data the children inherit the cell
// value exactly.
FeFunction prolong(const FeFunction& u, Index extra);

}  // namespace qttfem
