#pragma once

#include "qttfem/grid.hpp"

namespace qttfem {

enum class SpectralKind { chebyshev, fourier };

// Spectral expansion on [0,1]: either Chebyshev polynomials rescaled to the
// unit interval (c_0..c_p) or a real trigonometric sum
//   a_0 + sum_k a_k cos(2 pi k 2^shift y) + b_k sin(2 pi k 2^shift y),
// where `shift` dyadically rescales every frequency (0 for the plain basis).
struct SpectralCoeffs {
  SpectralKind kind = SpectralKind::chebyshev;
  Index degree = 0;
  Vec<double> cos_coeffs;  // chebyshev: c_0..c_p; fourier: a_0..a_p
  Vec<double> sin_coeffs;  // fourier: b_1..b_p (empty for chebyshev)
  Index shift = 0;
};

double spectral_eval(const SpectralCoeffs& c, double x);
double spectral_eval_deriv(const SpectralCoeffs& c, double x);

// Degree-p projections computed by quadrature with 4x oversampling:
// Gauss-Chebyshev nodes against the weight 1/sqrt(x(1-x)), or the trapezoid
// rule for one-periodic data.  Both reproduce their own spaces exactly.
SpectralCoeffs chebyshev_project(const Callable1& f, Index p);
SpectralCoeffs fourier_project(const Callable1& f, Index p);

// Degree used when the expansion order is coupled to the grid depth.
Index coupled_degree(Index L, double c = 1.0);

// Samples the expansion on the level-L dyadic grid (nodal or cell-midpoint
// points) as an explicitly assembled tensor train: no factorization step, and
// ranks are bounded by p+1 (chebyshev) or 2p+1 (fourier).
TtTensorD qtt_poly_grid(const SpectralCoeffs& c, Index L, AnalysisOp sampling);

enum class PolySpace { algebraic, trigonometric };

struct FactorizationReport {
  PolySpace space = PolySpace::algebraic;
  Index degree = 0;
  Index level = 0;
  Index bond = 0;
  Index observed_rank = 0;
  Index claimed_rank = 0;
  bool ok = false;
};

// Empirically checks that every degree-p basis function, sampled on the
// level-L grid and split at the given bond, has unfolding rank at most the
// dimension of the claimed coarse factor (p+1 algebraic, 2p+1 trigonometric).
FactorizationReport verify_factorization(PolySpace space, Index p, Index L, Index bond);

}  // namespace qttfem
