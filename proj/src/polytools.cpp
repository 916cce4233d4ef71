#include "qttfem/polytools.hpp"

#include <cmath>

namespace qttfem {

namespace {

using detail::require;

constexpr double kPi = 3.14159265358979323846;

// Chebyshev polynomials T_j(2x-1) evaluated by Clenshaw recurrence.
double clenshaw_unit(const Vec<double>& c, double x) {
  const double t = 2.0 * x - 1.0;
  double b1 = 0.0, b2 = 0.0;
  for (Index j = c.size() - 1; j >= 1; --j) {
    const double b0 = c(j) + 2.0 * t * b1 - b2;
    b2 = b1;
    b1 = b0;
  }
  return c(0) + t * b1 - b2;
}

double cheb_t(Index j, double t) {
  if (std::abs(t) <= 1.0) return std::cos(double(j) * std::acos(t));
  // outside [-1,1] (never hit by grid sampling, kept for completeness)
  double a = 1.0, b = t;
  if (j == 0) return a;
  for (Index k = 2; k <= j; ++k) {
    const double c = 2.0 * t * b - a;
    a = b;
    b = c;
  }
  return b;
}

// Coefficients of a degree <= p polynomial g on [0,1] in the rescaled
// Chebyshev basis, by interpolation at p+1 Gauss-Chebyshev points (exact).
Vec<double> cheb_interpolate(const std::function<double(double)>& g, Index p) {
  const Index m = p + 1;
  Vec<double> vals(m), nodes(m);
  for (Index k = 0; k < m; ++k) {
    nodes(k) = std::cos(kPi * (2.0 * double(k) + 1.0) / (2.0 * double(m)));
    vals(k) = g(0.5 * (nodes(k) + 1.0));
  }
  Vec<double> c(m);
  for (Index i = 0; i < m; ++i) {
    double s = 0.0;
    for (Index k = 0; k < m; ++k) s += vals(k) * std::cos(double(i) * kPi * (2.0 * double(k) + 1.0) / (2.0 * double(m)));
    c(i) = (i == 0 ? 1.0 : 2.0) / double(m) * s;
  }
  return c;
}

void check_coeffs(const SpectralCoeffs& c) {
  require(c.degree >= 0, "spectral: negative degree");
  if (c.kind == SpectralKind::chebyshev) {
    require(c.cos_coeffs.size() == c.degree + 1, "spectral: chebyshev coefficient count must be p+1");
    require(c.sin_coeffs.size() == 0, "spectral: chebyshev expansion has no sine part");
    require(c.shift == 0, "spectral: frequency shift applies to the trigonometric basis only");
  } else {
    require(c.cos_coeffs.size() == c.degree + 1, "spectral: fourier cosine coefficient count must be p+1");
    require(c.sin_coeffs.size() == c.degree, "spectral: fourier sine coefficient count must be p");
  }
  require(c.cos_coeffs.allFinite() && c.sin_coeffs.allFinite(), "spectral: non-finite coefficients");
}

}  // namespace

double spectral_eval(const SpectralCoeffs& c, double x) {
  check_coeffs(c);
  if (c.kind == SpectralKind::chebyshev) return clenshaw_unit(c.cos_coeffs, x);
  const double scale = std::pow(2.0, double(c.shift));
  double s = c.cos_coeffs(0);
  for (Index k = 1; k <= c.degree; ++k) {
    const double th = 2.0 * kPi * double(k) * scale * x;
    s += c.cos_coeffs(k) * std::cos(th) + c.sin_coeffs(k - 1) * std::sin(th);
  }
  return s;
}

double spectral_eval_deriv(const SpectralCoeffs& c, double x) {
  check_coeffs(c);
  if (c.kind == SpectralKind::fourier) {
    const double scale = std::pow(2.0, double(c.shift));
    double s = 0.0;
    for (Index k = 1; k <= c.degree; ++k) {
      const double w = 2.0 * kPi * double(k) * scale;
      s += w * (-c.cos_coeffs(k) * std::sin(w * x) + c.sin_coeffs(k - 1) * std::cos(w * x));
    }
    return s;
  }
  // d/dx T_j(2x-1) = 2 j U_{j-1}(2x-1); Clenshaw on the second kind (the
  // chain factor 2 is folded into the series coefficients)
  const double t = 2.0 * x - 1.0;
  double b1 = 0.0, b2 = 0.0;
  for (Index j = c.degree; j >= 1; --j) {
    const double b0 = 2.0 * double(j) * c.cos_coeffs(j) + 2.0 * t * b1 - b2;
    b2 = b1;
    b1 = b0;
  }
  return b1;
}

SpectralCoeffs chebyshev_project(const Callable1& f, Index p) {
  require(p >= 0, "chebyshev_project: negative degree");
  const Index m = 4 * (p + 1);
  Vec<double> vals(m);
  for (Index k = 0; k < m; ++k) {
    const double t = std::cos(kPi * (2.0 * double(k) + 1.0) / (2.0 * double(m)));
    vals(k) = f(0.5 * (t + 1.0));
  }
  require(vals.allFinite(), "chebyshev_project: non-finite sample");
  SpectralCoeffs c;
  c.kind = SpectralKind::chebyshev;
  c.degree = p;
  c.cos_coeffs = Vec<double>::Zero(p + 1);
  for (Index i = 0; i <= p; ++i) {
    double s = 0.0;
    for (Index k = 0; k < m; ++k) s += vals(k) * std::cos(double(i) * kPi * (2.0 * double(k) + 1.0) / (2.0 * double(m)));
    c.cos_coeffs(i) = (i == 0 ? 1.0 : 2.0) / double(m) * s;
  }
  return c;
}

SpectralCoeffs fourier_project(const Callable1& f, Index p) {
  require(p >= 0, "fourier_project: negative degree");
  const Index m = 4 * (2 * p + 1);
  Vec<double> vals(m);
  for (Index k = 0; k < m; ++k) vals(k) = f(double(k) / double(m));
  require(vals.allFinite(), "fourier_project: non-finite sample");
  SpectralCoeffs c;
  c.kind = SpectralKind::fourier;
  c.degree = p;
  c.cos_coeffs = Vec<double>::Zero(p + 1);
  c.sin_coeffs = Vec<double>::Zero(p);
  c.cos_coeffs(0) = vals.mean();
  for (Index j = 1; j <= p; ++j) {
    double ca = 0.0, sa = 0.0;
    for (Index k = 0; k < m; ++k) {
      const double th = 2.0 * kPi * double(j) * double(k) / double(m);
      ca += vals(k) * std::cos(th);
      sa += vals(k) * std::sin(th);
    }
    c.cos_coeffs(j) = 2.0 * ca / double(m);
    c.sin_coeffs(j - 1) = 2.0 * sa / double(m);
  }
  return c;
}

Index coupled_degree(Index L, double c) {
  require(L >= 1 && c > 0.0, "coupled_degree: invalid arguments");
  return static_cast<Index>(std::ceil(c * double(L)));
}

namespace {

// Algebraic constructor.  Bond l carries the coefficients of the sampled
// polynomial in the rescaled Chebyshev basis of the tail variable
// tau_l = 2^l (x - prefix_l) in [0,1]; every transition entry is O(1).
TtTensorD poly_grid_chebyshev(const SpectralCoeffs& c, Index L, double offset) {
  const Index r = c.degree + 1;
  // Subdivision matrices: S_b(j,i) = coefficient of T_i(2 tau - 1) in
  // T_j(2 ((b + tau)/2) - 1) = T_j(tau + b - 1).
  std::vector<Mat<double>> sub(2, Mat<double>(r, r));
  for (Index b = 0; b < 2; ++b)
    for (Index j = 0; j < r; ++j) {
      const Vec<double> row = cheb_interpolate(
          [&](double tau) { return cheb_t(j, tau + double(b) - 1.0); }, c.degree);
      sub[static_cast<size_t>(b)].row(j) = row.transpose();
    }
  Vec<double> tail_eval(r);
  for (Index i = 0; i < r; ++i) tail_eval(i) = cheb_t(i, 2.0 * offset - 1.0);

  TtTensorD t;
  t.dims.assign(static_cast<size_t>(L), 2);
  for (Index l = 0; l < L; ++l) {
    const bool first = (l == 0), last = (l == L - 1);
    const Index rl = first ? 1 : r;
    const Index rr = last ? 1 : r;
    Mat<double> core(rl * 2, rr);
    for (Index b = 0; b < 2; ++b) {
      const Mat<double>& s = sub[static_cast<size_t>(b)];
      if (first && last)
        core.row(b) = (c.cos_coeffs.transpose() * s * tail_eval).eval();
      else if (first)
        core.row(b) = c.cos_coeffs.transpose() * s;
      else if (last)
        core.middleRows(b * r, r) = s * tail_eval;
      else
        core.middleRows(b * r, r) = s;
    }
    t.cores.push_back(std::move(core));
  }
  return t;
}

// Trigonometric constructor.  Bond state per frequency k is the rotation pair
// (cos, sin) of the prefix angle; bit b at mode l rotates by w_k b 2^-l.
TtTensorD poly_grid_fourier(const SpectralCoeffs& c, Index L, double offset) {
  const Index p = c.degree;
  const Index r = 2 * p + 1;
  TtTensorD t;
  t.dims.assign(static_cast<size_t>(L), 2);
  auto omega = [&](Index k) { return 2.0 * kPi * double(k) * std::pow(2.0, double(c.shift)); };
  for (Index l = 0; l < L; ++l) {
    const bool first = (l == 0), last = (l == L - 1);
    const Index rl = first ? 1 : r;
    const Index rr = last ? 1 : r;
    Mat<double> core = Mat<double>::Zero(rl * 2, rr);
    const double step = std::pow(2.0, -double(l + 1));  // weight of bit l (modes MSB-first)
    for (Index b = 0; b < 2; ++b) {
      for (Index k = 0; k <= p; ++k) {
        const double beta = omega(k) * double(b) * step;
        const double gamma = omega(k) * offset;  // tail offset applied at the last mode
        const Index ic = (k == 0) ? 0 : 2 * k - 1;  // cos-state column/row
        const Index is = 2 * k;                     // sin-state (k >= 1)
        if (first && last) {
          double v = (k == 0) ? c.cos_coeffs(0)
                              : c.cos_coeffs(k) * std::cos(beta + gamma) + c.sin_coeffs(k - 1) * std::sin(beta + gamma);
          core(b, 0) += v;
        } else if (first) {
          if (k == 0)
            core(b, ic) = 1.0;
          else {
            core(b, ic) = std::cos(beta);
            core(b, is) = std::sin(beta);
          }
        } else if (last) {
          if (k == 0)
            core(0 + rl * b, 0) += c.cos_coeffs(0);
          else {
            const double ang = beta + gamma;
            // value = a_k cos(phi+ang) + b_k sin(phi+ang), expanded in (cos phi, sin phi)
            core(ic + rl * b, 0) += c.cos_coeffs(k) * std::cos(ang) + c.sin_coeffs(k - 1) * std::sin(ang);
            core(is + rl * b, 0) += -c.cos_coeffs(k) * std::sin(ang) + c.sin_coeffs(k - 1) * std::cos(ang);
          }
        } else {
          if (k == 0)
            core(0 + rl * b, 0) = 1.0;
          else {
            // (cos, sin) row-state times rotation by beta
            core(ic + rl * b, ic) = std::cos(beta);
            core(ic + rl * b, is) = std::sin(beta);
            core(is + rl * b, ic) = -std::sin(beta);
            core(is + rl * b, is) = std::cos(beta);
          }
        }
      }
    }
    t.cores.push_back(std::move(core));
  }
  return t;
}

}  // namespace

TtTensorD qtt_poly_grid(const SpectralCoeffs& c, Index L, AnalysisOp sampling) {
  check_coeffs(c);
  require(L >= 1, "qtt_poly_grid: level must be positive");
  const double h = std::pow(2.0, -double(L));
  const double offset = sampling == AnalysisOp::nodal ? h : 0.5 * h;
  if (c.kind == SpectralKind::chebyshev) return poly_grid_chebyshev(c, L, std::pow(2.0, double(L)) * offset);
  return poly_grid_fourier(c, L, offset);
}

FactorizationReport verify_factorization(PolySpace space, Index p, Index L, Index bond) {
  require(p >= 0 && L >= 2 && bond >= 1 && bond <= L - 1, "verify_factorization: need 1 <= bond <= L-1");
  require((Index(1) << L) <= kDenseCap, "verify_factorization: dense cap exceeded");
  const Index n = Index(1) << L;
  const double h = 1.0 / double(n);
  const Index count = space == PolySpace::algebraic ? p + 1 : 2 * p + 1;

  FactorizationReport rep;
  rep.space = space;
  rep.degree = p;
  rep.level = L;
  rep.bond = bond;
  rep.claimed_rank = count;

  const Index rows = Index(1) << bond;
  const Index cols = n / rows;
  Index observed = 0;
  for (Index a = 0; a < count; ++a) {
    SpectralCoeffs c;
    if (space == PolySpace::algebraic) {
      c.kind = SpectralKind::chebyshev;
      c.degree = p;
      c.cos_coeffs = Vec<double>::Zero(p + 1);
      c.cos_coeffs(a) = 1.0;
    } else {
      c.kind = SpectralKind::fourier;
      c.degree = p;
      c.cos_coeffs = Vec<double>::Zero(p + 1);
      c.sin_coeffs = Vec<double>::Zero(p);
      if (a == 0)
        c.cos_coeffs(0) = 1.0;
      else if (a <= p)
        c.cos_coeffs(a) = 1.0;
      else
        c.sin_coeffs(a - p - 1) = 1.0;
    }
    Mat<double> m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = spectral_eval(c, double(i * cols + j + 1) * h);
    Eigen::JacobiSVD<Mat<double>> svd(m);
    const double scale = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
    Index r = 0;
    for (Index k = 0; k < svd.singularValues().size(); ++k)
      if (svd.singularValues()(k) > 1e-10 * scale) ++r;
    observed = std::max(observed, r);
  }
  rep.observed_rank = observed;
  rep.ok = observed <= rep.claimed_rank;
  return rep;
}

}  // namespace qttfem
