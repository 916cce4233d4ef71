#include "qttfem/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace qttfem {

using detail::require;

namespace {

double fold_unit(double v) { return v - std::floor(v); }

Index interleave_quad(Index bx_index, Index by_index, Index L) {
  Index q = 0;
  for (Index l = 0; l < L; ++l) {
    const Index bx = (bx_index >> (L - 1 - l)) & 1;
    const Index by = (by_index >> (L - 1 - l)) & 1;
    q = (q << 2) | (2 * bx + by);
  }
  return q;
}

// Coefficient arguments at the midpoint of cell `cells` (one index per axis):
// dim slow coordinates followed by dim folded coordinates per microscale.
std::vector<double> coefficient_args(const MultiscaleCoefficient& c, Index L, const std::vector<Index>& cells) {
  const double h = std::pow(2.0, -double(L));
  std::vector<double> args;
  args.reserve(static_cast<size_t>(c.dim * (c.n + 1)));
  for (Index k = 0; k < c.dim; ++k) args.push_back((double(cells[static_cast<size_t>(k)]) + 0.5) * h);
  for (Index i = 0; i < c.n; ++i) {
    const double eps_inv = std::pow(2.0, double(c.lambdas[static_cast<size_t>(i)]));
    for (Index k = 0; k < c.dim; ++k) args.push_back(fold_unit(args[static_cast<size_t>(k)] * eps_inv));
  }
  return args;
}

double separable_value(const MultiscaleCoefficient& c, const std::vector<double>& args) {
  double v = 1.0;
  for (Index k = 0; k < c.dim; ++k) {
    const auto& slow = c.slow_axes.empty() ? Callable1() : c.slow_axes[static_cast<size_t>(k)];
    if (slow) v *= slow(args[static_cast<size_t>(k)]);
  }
  for (Index i = 0; i < c.n; ++i)
    for (Index k = 0; k < c.dim; ++k) {
      const auto& fast = c.fast_axes[static_cast<size_t>(i)][static_cast<size_t>(k)];
      if (fast) v *= fast(args[static_cast<size_t>((i + 1) * c.dim + k)]);
    }
  return v;
}

double coefficient_value(const MultiscaleCoefficient& c, const std::vector<double>& args) {
  if (c.value) return c.value(args);
  require(c.separable, "sample_coefficient: coefficient has neither `value` nor a separable declaration");
  return separable_value(c, args);
}

void validate_coefficient(const MultiscaleCoefficient& c, Index L) {
  require(c.dim == 1 || c.dim == 2, "sample_coefficient: dim must be 1 or 2");
  require(static_cast<Index>(c.lambdas.size()) == c.n, "sample_coefficient: lambdas size must equal n");
  for (Index i = 0; i < c.n; ++i) {
    require(c.lambdas[static_cast<size_t>(i)] >= 1, "sample_coefficient: scale exponents must be positive");
    if (i > 0)
      require(c.lambdas[static_cast<size_t>(i)] > c.lambdas[static_cast<size_t>(i - 1)],
              "sample_coefficient: scale exponents must be strictly increasing");
  }
  if (c.n > 0) require(L >= c.lambdas.back(), "sample_coefficient: grid level must resolve the finest scale");
  require(c.gamma > 0.0 && c.Gamma >= c.gamma, "sample_coefficient: ellipticity witnesses must satisfy 0 < gamma <= Gamma");
  if (c.separable) {
    require(c.slow_axes.empty() || static_cast<Index>(c.slow_axes.size()) == c.dim,
            "sample_coefficient: slow_axes must have one entry per axis");
    require(static_cast<Index>(c.fast_axes.size()) == c.n, "sample_coefficient: fast_axes must have one entry per scale");
    for (const auto& axes : c.fast_axes)
      require(static_cast<Index>(axes.size()) == c.dim, "sample_coefficient: each fast factor needs one callable per axis");
  } else {
    require(static_cast<bool>(c.value), "sample_coefficient: non-separable coefficient requires `value`");
  }
}

// Pseudo-random spot check of the declared ellipticity window.
void check_ellipticity(const MultiscaleCoefficient& c) {
  std::mt19937_64 rng(0x5eedULL);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double slack = 1e-9 * c.Gamma;
  for (int trial = 0; trial < 256; ++trial) {
    std::vector<double> args(static_cast<size_t>(c.dim * (c.n + 1)));
    for (auto& a : args) a = unif(rng);
    const double v = coefficient_value(c, args);
    if (!(v >= c.gamma - slack && v <= c.Gamma + slack))
      throw std::runtime_error("sample_coefficient: sampled value " + std::to_string(v) +
                               " violates the declared ellipticity window");
  }
}

// Smallest spectral fit reproducing f on [0,1] to near machine precision.
SpectralCoeffs fit_factor(const Callable1& f, bool periodic, const char* who) {
  if (periodic) {
    const double scale = std::max({1.0, std::abs(f(0.0)), std::abs(f(0.5))});
    require(std::abs(f(0.0) - f(1.0)) <= 1e-10 * scale, std::string(who) + ": fast factors must be one-periodic");
  }
  constexpr Index ladder[] = {1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64};
  const int n_probe = 157;
  double best_err = 0.0;
  for (Index p : ladder) {
    const SpectralCoeffs fit = periodic ? fourier_project(f, p) : chebyshev_project(f, p);
    double err = 0.0, scale = 1.0;
    for (int j = 0; j < n_probe; ++j) {
      const double t = (j + 0.37) / n_probe;
      const double v = f(t);
      err = std::max(err, std::abs(spectral_eval(fit, t) - v));
      scale = std::max(scale, std::abs(v));
    }
    if (err <= 5e-13 * scale) return fit;
    best_err = err;
  }
  throw std::runtime_error(std::string(who) + ": factor not resolved by a degree-64 spectral fit (residual " +
                           std::to_string(best_err) + ")");
}

// Fast-factor samples at level-L cell midpoints: the value depends only on the
// L - lambda low bits, so lambda rank-1 repetition cores sit on top of the
// factor sampled on the fine block.
TtTensorD fast_factor_samples(const Callable1& g, Index lambda, Index L) {
  const SpectralCoeffs fit = fit_factor(g, true, "sample_coefficient");
  TtTensorD t;
  if (lambda == L) {
    t = tt_ones<double>(std::vector<Index>(static_cast<size_t>(L), 2));
    t.cores[0] *= spectral_eval(fit, 0.5);
    return t;
  }
  t = qtt_poly_grid(fit, L - lambda, AnalysisOp::cell_avg);
  t.dims.insert(t.dims.begin(), static_cast<size_t>(lambda), 2);
  t.cores.insert(t.cores.begin(), static_cast<size_t>(lambda), Mat<double>::Ones(2, 1));
  return t;
}

TtTensorD axis_samples(const MultiscaleCoefficient& c, Index axis, Index L, double tol) {
  const double step_tol = tol / double(c.n + 1);
  TtTensorD cur;
  const auto& slow = c.slow_axes.empty() ? Callable1() : c.slow_axes[static_cast<size_t>(axis)];
  if (slow)
    cur = qtt_poly_grid(fit_factor(slow, false, "sample_coefficient"), L, AnalysisOp::cell_avg);
  else
    cur = tt_ones<double>(std::vector<Index>(static_cast<size_t>(L), 2));
  for (Index i = 0; i < c.n; ++i) {
    const auto& fast = c.fast_axes[static_cast<size_t>(i)][static_cast<size_t>(axis)];
    if (!fast) continue;
    cur = tt_round(tt_hadamard(cur, fast_factor_samples(fast, c.lambdas[static_cast<size_t>(i)], L)), step_tol);
  }
  return cur;
}

TtTensorD sample_coefficient_dense(const MultiscaleCoefficient& c, Index L, double tol) {
  const Index n_cells = Index(1) << L;
  const Index total = c.dim == 1 ? n_cells : n_cells * n_cells;
  require(total <= kDenseCap, "sample_coefficient: non-separable coefficient exceeds the dense sampling cap");
  Vec<double> v(total);
  if (c.dim == 1) {
    for (Index p = 0; p < n_cells; ++p) v(p) = coefficient_value(c, coefficient_args(c, L, {p}));
  } else {
    for (Index px = 0; px < n_cells; ++px)
      for (Index py = 0; py < n_cells; ++py)
        v(interleave_quad(px, py, L)) = coefficient_value(c, coefficient_args(c, L, {px, py}));
  }
  return tt_from_full(v, std::vector<Index>(static_cast<size_t>(L), c.dim == 1 ? Index(2) : Index(4)), tol);
}

// Digits of a multi-axis cell index in the train's mode order.
std::vector<Index> train_index(const std::vector<Index>& cells, Index L) {
  const Index dim = static_cast<Index>(cells.size());
  std::vector<Index> idx(static_cast<size_t>(L));
  for (Index l = 0; l < L; ++l) {
    Index digit = 0;
    for (Index k = 0; k < dim; ++k) digit = 2 * digit + ((cells[static_cast<size_t>(k)] >> (L - 1 - l)) & 1);
    idx[static_cast<size_t>(l)] = digit;
  }
  return idx;
}

void spot_check_separable(const MultiscaleCoefficient& c, Index L, const TtTensorD& t) {
  if (!c.value) return;
  std::mt19937_64 rng(0xc0f3ULL);
  for (int trial = 0; trial < 16; ++trial) {
    std::vector<Index> cells(static_cast<size_t>(c.dim));
    for (auto& cell : cells) cell = static_cast<Index>(rng() & ((Index(1) << L) - 1));
    const double direct = c.value(coefficient_args(c, L, cells));
    const double stored = tt_entry(t, train_index(cells, L));
    if (std::abs(stored - direct) > 1e-8 * std::max(1.0, c.Gamma))
      throw std::runtime_error("sample_coefficient: declared separable structure disagrees with `value`");
  }
}

double probe_max(const TtTensorD& t) {
  if (t.size() <= (Index(1) << 20)) return full(t).maxCoeff();
  std::mt19937_64 rng(0x9a7bULL);
  double best = 0.0;
  for (int trial = 0; trial < 512; ++trial) {
    std::vector<Index> idx(static_cast<size_t>(t.order()));
    for (Index l = 0; l < t.order(); ++l)
      idx[static_cast<size_t>(l)] = static_cast<Index>(rng() % static_cast<std::uint64_t>(t.dims[static_cast<size_t>(l)]));
    best = std::max(best, tt_entry(t, idx));
  }
  return best;
}

// B^T diag(a) B scaled by w, rounded.
TtOperatorD quadrature_term(const TtOperatorD& b, const TtOperatorD& diag, double w, double tol) {
  TtOperatorD k = op_compose(op_transpose(b), op_compose(diag, b));
  return op_round(op_scale(k, w), tol);
}

// Shared stiffness body for Dirichlet (multiscale) and periodic (cell) forms.
TtOperatorD galerkin_stiffness(const TtTensorD& a_cells, const GridSpec& grid, double tol) {
  const Index L = grid.level;
  const double h = grid.meshwidth();
  const TtOperatorD diag = op_diag(a_cells);
  if (grid.dim == 1) return quadrature_term(op_grad_cells(L, grid.boundary), diag, h, tol);
  const TtOperatorD g = op_grad_cells(L, grid.boundary);
  const TtOperatorD c = op_avg_cells(L, grid.boundary);
  TtOperatorD k = op_add(quadrature_term(op_zip(g, c), diag, h * h, tol),
                         quadrature_term(op_zip(c, g), diag, h * h, tol));
  k = op_add(k, quadrature_term(op_zip(g, g), diag, h * h * h * h / 6.0, tol));
  return op_round(k, tol);
}

void validate_problem_grid(const GridSpec& grid, Boundary expected, const char* who) {
  require(grid.dim == 1 || grid.dim == 2, std::string(who) + ": dim must be 1 or 2");
  require(grid.level >= 1, std::string(who) + ": empty grid");
  require(grid.boundary == expected, std::string(who) + (expected == Boundary::dirichlet
                                                             ? ": grid boundary must be dirichlet"
                                                             : ": grid boundary must be periodic"));
  require(grid.effective_blocks().size() == 1, std::string(who) + ": assembly expects a single physical block");
}

TtTensorD cell_samples_of(const Callable1& f, const GridSpec& grid, double tol) {
  return sample_cell_avg(f, grid, tol).coeffs;
}

TtTensorD cell_samples_of(const Callable2& f, const GridSpec& grid, double tol) {
  return sample_cell_avg(f, grid, tol).coeffs;
}

// Per-trailing-ones-count energy weights of the hierarchical columns: hat
// functions scale as 2^{L-s+1}, the boundary ramp has unit energy.
double hat_energy(Index s, Index L) { return s == L ? 1.0 : std::pow(2.0, double(L - s + 1)); }
double hat_mass(Index s, Index L) { return s == L ? 1.0 / 3.0 : (2.0 / 3.0) * std::pow(2.0, double(s - L)); }

TtOperatorD level_scaling_transform(const GridSpec& grid, double tol) {
  const Index L = grid.level;
  const TtOperatorD w = op_hierarchical_synthesis(L);
  if (grid.dim == 1) {
    Vec<double> g(L + 1);
    for (Index s = 0; s <= L; ++s) g(s) = 1.0 / std::sqrt(hat_energy(s, L));
    return op_round(op_compose(w, op_trailing_ones_diag(L, g)), 0.0);
  }
  // Pair-level weights 1/sqrt(Kx My + Mx Ky) enter through a low-rank
  // factorization of the (L+1) x (L+1) table over trailing-ones counts.
  Mat<double> table(L + 1, L + 1);
  for (Index sx = 0; sx <= L; ++sx)
    for (Index sy = 0; sy <= L; ++sy)
      table(sx, sy) = 1.0 / std::sqrt(hat_energy(sx, L) * hat_mass(sy, L) + hat_mass(sx, L) * hat_energy(sy, L));
  Eigen::JacobiSVD<Mat<double>> svd(table, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  TtOperatorD diag;
  bool have = false;
  for (Index k = 0; k < sv.size(); ++k) {
    if (sv(k) <= 1e-12 * sv(0)) break;
    const Vec<double> u = svd.matrixU().col(k) * sv(k);
    const Vec<double> v = svd.matrixV().col(k);
    const TtOperatorD term = op_zip(op_trailing_ones_diag(L, u), op_trailing_ones_diag(L, v));
    diag = have ? op_add(diag, term) : term;
    have = true;
  }
  diag = op_round(diag, 0.0);
  return op_round(op_compose(op_zip(w, w), diag), std::max(tol * 1e-2, 1e-13));
}

DiscreteProblem transformed_problem(const DiscreteProblem& p, const TtOperatorD& c, PreconditionKind kind) {
  DiscreteProblem out;
  out.grid = p.grid;
  out.tol = p.tol;
  out.preconditioned = kind;
  out.basis_change = c;
  const double tol = p.tol > 0.0 ? p.tol : 1e-13;
  out.stiffness = op_round(op_compose(op_transpose(c), op_compose(p.stiffness, c)), tol);
  for (const auto& b : p.loads) out.loads.push_back(tt_round(tt_apply(op_transpose(c), b), tol));
  out.load = out.loads.front();
  return out;
}

}  // namespace

TtTensorD sample_coefficient(const MultiscaleCoefficient& c, Index L, double tol) {
  require(L >= 1, "sample_coefficient: empty grid");
  require(tol >= 0.0, "sample_coefficient: negative tolerance");
  validate_coefficient(c, L);
  check_ellipticity(c);
  if (!c.separable) return sample_coefficient_dense(c, L, tol);
  TtTensorD t = axis_samples(c, 0, L, tol);
  if (c.dim == 2) t = tt_round(tt_zip(t, axis_samples(c, 1, L, tol)), tol);
  spot_check_separable(c, L, t);
  return t;
}

DiscreteProblem assemble_multiscale(const MultiscaleCoefficient& c, const TtTensorD& f_cells, const GridSpec& grid,
                                    double tol) {
  validate_problem_grid(grid, Boundary::dirichlet, "assemble_multiscale");
  require(c.dim == grid.dim, "assemble_multiscale: coefficient/grid dimension mismatch");
  require(f_cells.dims == grid.train_dims(), "assemble_multiscale: load sample shape mismatch");
  DiscreteProblem p;
  p.grid = grid;
  p.tol = tol;
  const TtTensorD a = sample_coefficient(c, grid.level, tol);
  p.stiffness = galerkin_stiffness(a, grid, tol);
  const double hd = std::pow(grid.meshwidth(), double(grid.dim));
  TtOperatorD avg = op_avg_cells(grid.level, Boundary::dirichlet);
  if (grid.dim == 2) avg = op_zip(avg, avg);
  p.loads.push_back(tt_round(tt_scale(tt_apply(op_transpose(avg), f_cells), hd), tol));
  p.load = p.loads.front();
  return p;
}

DiscreteProblem assemble_multiscale(const MultiscaleCoefficient& c, const Callable1& f, const GridSpec& grid,
                                    double tol) {
  validate_problem_grid(grid, Boundary::dirichlet, "assemble_multiscale");
  require(grid.dim == 1, "assemble_multiscale: one-argument load on a 2D grid");
  return assemble_multiscale(c, cell_samples_of(f, grid, tol), grid, tol);
}

DiscreteProblem assemble_multiscale(const MultiscaleCoefficient& c, const Callable2& f, const GridSpec& grid,
                                    double tol) {
  validate_problem_grid(grid, Boundary::dirichlet, "assemble_multiscale");
  require(grid.dim == 2, "assemble_multiscale: two-argument load on a 1D grid");
  return assemble_multiscale(c, cell_samples_of(f, grid, tol), grid, tol);
}

DiscreteProblem assemble_cell_problem(const TtTensorD& a_cells, const GridSpec& grid, double tol) {
  validate_problem_grid(grid, Boundary::periodic, "assemble_cell_problem");
  require(a_cells.dims == grid.train_dims(), "assemble_cell_problem: coefficient sample shape mismatch");
  const Index L = grid.level;
  const double h = grid.meshwidth();
  DiscreteProblem p;
  p.grid = grid;
  p.tol = tol;
  const double sigma = probe_max(a_cells);
  require(sigma > 0.0, "assemble_cell_problem: coefficient must be positive");
  TtOperatorD gauge = grid.dim == 1 ? op_ones(L, sigma * h)
                                    : op_scale(op_zip(op_ones(L, 1.0), op_ones(L, 1.0)), sigma * h * h);
  p.stiffness = op_round(op_add(galerkin_stiffness(a_cells, grid, tol), gauge), tol);
  if (grid.dim == 1) {
    const TtOperatorD g = op_grad_cells(L, Boundary::periodic);
    p.loads.push_back(tt_round(tt_scale(tt_apply(op_transpose(g), a_cells), -h), tol));
  } else {
    const TtOperatorD g = op_grad_cells(L, Boundary::periodic);
    const TtOperatorD c = op_avg_cells(L, Boundary::periodic);
    p.loads.push_back(tt_round(tt_scale(tt_apply(op_transpose(op_zip(g, c)), a_cells), -h * h), tol));
    p.loads.push_back(tt_round(tt_scale(tt_apply(op_transpose(op_zip(c, g)), a_cells), -h * h), tol));
  }
  p.load = p.loads.front();
  return p;
}

DiscreteProblem assemble_cell_problem(const Callable1& a_fast, const GridSpec& grid, double tol) {
  validate_problem_grid(grid, Boundary::periodic, "assemble_cell_problem");
  require(grid.dim == 1, "assemble_cell_problem: one-argument coefficient on a 2D grid");
  return assemble_cell_problem(cell_samples_of(a_fast, grid, tol), grid, tol);
}

DiscreteProblem assemble_cell_problem(const Callable2& a_fast, const GridSpec& grid, double tol) {
  validate_problem_grid(grid, Boundary::periodic, "assemble_cell_problem");
  require(grid.dim == 2, "assemble_cell_problem: two-argument coefficient on a 1D grid");
  return assemble_cell_problem(cell_samples_of(a_fast, grid, tol), grid, tol);
}

DiscreteProblem precondition(const DiscreteProblem& p, PreconditionKind kind) {
  require(p.preconditioned == PreconditionKind::none, "precondition: problem is already transformed");
  require(!p.loads.empty(), "precondition: problem has no loads");
  if (kind == PreconditionKind::none) return p;
  if (kind == PreconditionKind::jacobi) {
    const TtTensorD diag = op_diagonal_part(p.stiffness);
    require(diag.size() <= kDenseCap, "precondition: jacobi scaling exceeds the dense cap");
    Vec<double> d = full(diag);
    require(d.minCoeff() > 0.0, "precondition: jacobi scaling requires a positive diagonal");
    const Vec<double> w = d.array().rsqrt();
    const TtOperatorD c = op_diag(tt_from_full(w, diag.dims, std::max(p.tol * 1e-2, 1e-13)));
    return transformed_problem(p, c, PreconditionKind::jacobi);
  }
  require(p.grid.boundary == Boundary::dirichlet, "precondition: level_scaling requires a Dirichlet grid");
  return transformed_problem(p, level_scaling_transform(p.grid, p.tol), PreconditionKind::level_scaling);
}

TtOperatorD op_hierarchical_synthesis(Index L) {
  // States: [interior, halving tail, ramp tail].  A column enters the tail at
  // its last zero bit; the halving chain interpolates the hat linearly down to
  // the fine grid while the ramp chain replicates the peak.
  Eigen::RowVectorXd enter(3);
  enter << 1.0, 1.0, 0.0;
  Eigen::VectorXd exit(3);
  exit << 0.0, 1.0, 1.0;
  auto emit = [](Index, Index from, Index to) {
    Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
    if (from == 0 && to == 0) m.setIdentity();
    if (from == 0 && to == 1) {
      m(0, 0) = 1.0;
      m(1, 0) = -1.0;
    }
    if (from == 0 && to == 2) m(1, 0) = 1.0;
    if (from == 1 && to == 1) {
      m(0, 1) = 0.5;
      m(1, 1) = 0.5;
    }
    if (from == 1 && to == 2) m(1, 1) = 0.5;
    if (from == 2 && to == 2) {
      m(0, 1) = 1.0;
      m(1, 1) = 1.0;
    }
    return m;
  };
  return op_bit_automaton(L, 3, enter, exit, emit);
}

TtOperatorD op_trailing_ones_diag(Index L, const Vec<double>& weights) {
  require(weights.size() == L + 1, "op_trailing_ones_diag: need one weight per trailing-ones count");
  // States: [free, done].  The free state scans arbitrary bits, commits at the
  // last zero (emitting the weight for the trailing-ones count it implies) and
  // afterwards only ones are allowed; the all-ones index enters `done` at the
  // boundary with the full-count weight.
  Eigen::RowVectorXd enter(2);
  enter << 1.0, weights(L);
  Eigen::VectorXd exit(2);
  exit << 0.0, 1.0;
  auto emit = [L, &weights](Index l, Index from, Index to) {
    Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
    if (from == 0 && to == 0) m.setIdentity();
    if (from == 0 && to == 1) m(0, 0) = weights(L - l - 1);
    if (from == 1 && to == 1) m(1, 1) = 1.0;
    return m;
  };
  return op_bit_automaton(L, 2, enter, exit, emit);
}

TtTensorD op_diagonal_part(const TtOperatorD& a) {
  detail::check_train(a.tensor);
  require(a.row_dims == a.col_dims, "op_diagonal_part: operator must be square");
  TtTensorD d;
  d.dims = a.row_dims;
  for (size_t l = 0; l < a.tensor.cores.size(); ++l) {
    const Index m = a.row_dims[l];
    const Index rl = a.tensor.rank(static_cast<Index>(l));
    const Index rr = a.tensor.rank(static_cast<Index>(l) + 1);
    Mat<double> core(rl * m, rr);
    for (Index i = 0; i < m; ++i)
      core.middleRows(i * rl, rl) = a.tensor.cores[l].middleRows((i + m * i) * rl, rl);
    d.cores.push_back(std::move(core));
  }
  return d;
}

TtOperatorD masked_operator(const TtOperatorD& stiffness, const GridSpec& grid, double sigma_bc, double tol) {
  require(grid.boundary == Boundary::dirichlet, "masked_operator: grid boundary must be dirichlet");
  require(stiffness.row_dims == grid.train_dims() && stiffness.col_dims == grid.train_dims(),
          "masked_operator: operator/grid shape mismatch");
  const TtOperatorD m = op_mask_boundary_nd(grid.level, grid.dim);
  TtOperatorD k = op_compose(m, op_compose(stiffness, m));
  k = op_add(k, op_add(op_scale(op_identity<double>(grid.train_dims()), sigma_bc), op_scale(m, -sigma_bc)));
  return op_round(k, tol);
}

TtTensorD masked_load(const TtTensorD& load, const GridSpec& grid, double tol) {
  require(grid.boundary == Boundary::dirichlet, "masked_load: grid boundary must be dirichlet");
  require(load.dims == grid.train_dims(), "masked_load: load/grid shape mismatch");
  return tt_round(tt_apply(op_mask_boundary_nd(grid.level, grid.dim), load), tol);
}

}  // namespace qttfem
