#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace qttfem {

using Index = Eigen::Index;

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Largest tensor that may be materialized densely (entries).
inline constexpr Index kDenseCap = Index(1) << 24;

// Absolute per-bond threshold used for rank-revealing factorizations when the
// caller passes tol = 0: singular values below kMachineRankTol * (tensor norm)
// are treated as numerically zero.
inline constexpr double kMachineRankTol = 1e-14;

// Tensor train over modes n_1..n_L.  Core l is stored as its vertical
// unfolding: a (r_{l-1} * n_l) x r_l matrix whose row index is a + r_{l-1}*i
// (left-rank index a fastest).  The horizontal unfolding (r_{l-1} x n_l*r_l)
// shares the same memory layout, so both views are free.
template <class T>
struct TtTensor {
  std::vector<Index> dims;
  std::vector<Mat<T>> cores;

  Index order() const { return static_cast<Index>(dims.size()); }

  // Bond rank r_b for b = 0..L; r_0 = r_L = 1 by construction.
  Index rank(Index bond) const {
    if (bond <= 0) return order() > 0 ? cores[0].rows() / dims[0] : 1;
    return cores[static_cast<size_t>(bond - 1)].cols();
  }

  std::vector<Index> ranks() const {
    std::vector<Index> r(static_cast<size_t>(order()) + 1);
    r[0] = rank(0);
    for (Index l = 0; l < order(); ++l) r[static_cast<size_t>(l + 1)] = cores[static_cast<size_t>(l)].cols();
    return r;
  }

  const std::vector<Index>& mode_sizes() const { return dims; }

  // Slice U_l(i): the r_{l-1} x r_l block of core l at mode index i.
  auto slice(Index l, Index i) const {
    const Index rl = rank(l);
    return cores[static_cast<size_t>(l)].middleRows(i * rl, rl);
  }
  auto slice(Index l, Index i) {
    const Index rl = rank(l);
    return cores[static_cast<size_t>(l)].middleRows(i * rl, rl);
  }

  Index size() const {
    Index n = 1;
    for (Index d : dims) n *= d;
    return n;
  }
};

using TtTensorD = TtTensor<double>;

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

template <class T>
void check_train(const TtTensor<T>& t) {
  require(!t.dims.empty(), "tt: empty train");
  require(t.cores.size() == t.dims.size(), "tt: core/mode count mismatch");
  Index r = 1;
  for (Index l = 0; l < t.order(); ++l) {
    const auto& c = t.cores[static_cast<size_t>(l)];
    require(t.dims[static_cast<size_t>(l)] >= 1, "tt: empty mode");
    require(c.rows() == r * t.dims[static_cast<size_t>(l)], "tt: core row count inconsistent with rank profile");
    r = c.cols();
  }
  require(r == 1, "tt: terminal rank must be 1");
}

// Smallest retained rank whose discarded singular-value tail satisfies
// sum_{k>=rank} s_k^2 <= delta^2.
template <class S>
Index truncation_rank(const S& s, double delta) {
  Index k = s.size();
  double tail = 0.0;
  while (k > 1) {
    const double cand = tail + double(s[k - 1]) * double(s[k - 1]);
    if (cand > delta * delta) break;
    tail = cand;
    --k;
  }
  return k;
}

// Thin QR: A = Q R with Q having orthonormal columns, k = min(rows, cols).
template <class T>
void thin_qr(const Mat<T>& a, Mat<T>& q, Mat<T>& r) {
  const Index k = std::min(a.rows(), a.cols());
  Eigen::HouseholderQR<Mat<T>> qr(a);
  q = qr.householderQ() * Mat<T>::Identity(a.rows(), k);
  r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
}

// Reinterpret a horizontal unfolding (r x n*rr) as the vertical unfolding
// (r*n x rr); both share one column-major memory layout.
template <class T>
Mat<T> horizontal_to_vertical(const Mat<T>& h, Index r, Index n, Index rr) {
  return Eigen::Map<const Mat<T>>(h.data(), r * n, rr);
}

template <class T>
Mat<T> vertical_to_horizontal(const Mat<T>& v, Index r, Index n, Index rr) {
  return Eigen::Map<const Mat<T>>(v.data(), r, n * rr);
}

}  // namespace detail

template <class T>
TtTensor<T> tt_ones(const std::vector<Index>& dims) {
  TtTensor<T> t;
  t.dims = dims;
  for (Index n : dims) t.cores.push_back(Mat<T>::Ones(n, 1));
  return t;
}

template <class T>
TtTensor<T> tt_zero(const std::vector<Index>& dims) {
  TtTensor<T> t;
  t.dims = dims;
  for (Index n : dims) t.cores.push_back(Mat<T>::Zero(n, 1));
  return t;
}

// Unit coordinate tensor e_idx.
template <class T>
TtTensor<T> tt_basis(const std::vector<Index>& dims, const std::vector<Index>& idx) {
  detail::require(dims.size() == idx.size(), "tt_basis: index order mismatch");
  TtTensor<T> t;
  t.dims = dims;
  for (size_t l = 0; l < dims.size(); ++l) {
    detail::require(idx[l] >= 0 && idx[l] < dims[l], "tt_basis: index out of range");
    Mat<T> c = Mat<T>::Zero(dims[l], 1);
    c(idx[l], 0) = T(1);
    t.cores.push_back(std::move(c));
  }
  return t;
}

template <class T>
TtTensor<T> tt_rand(const std::vector<Index>& dims, Index rank, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  TtTensor<T> t;
  t.dims = dims;
  const Index L = static_cast<Index>(dims.size());
  Index rl = 1;
  for (Index l = 0; l < L; ++l) {
    const Index rr = (l == L - 1) ? 1 : rank;
    Mat<T> c(rl * dims[static_cast<size_t>(l)], rr);
    for (Index j = 0; j < c.cols(); ++j)
      for (Index i = 0; i < c.rows(); ++i) c(i, j) = T(gauss(rng));
    t.cores.push_back(std::move(c));
    rl = rr;
  }
  return t;
}

template <class T>
T tt_entry(const TtTensor<T>& t, const std::vector<Index>& idx) {
  detail::require(static_cast<Index>(idx.size()) == t.order(), "tt_entry: index order mismatch");
  Mat<T> v = Mat<T>::Ones(1, 1);
  for (Index l = 0; l < t.order(); ++l) {
    detail::require(idx[static_cast<size_t>(l)] >= 0 && idx[static_cast<size_t>(l)] < t.dims[static_cast<size_t>(l)],
                    "tt_entry: index out of range");
    v = v * t.slice(l, idx[static_cast<size_t>(l)]);
  }
  return v(0, 0);
}

// Dense expansion in row-major mode order (mode 1 slowest, mode L fastest).
template <class T>
Vec<T> full(const TtTensor<T>& t) {
  detail::require(t.size() <= kDenseCap, "full: dense cap exceeded");
  Mat<T> m = Mat<T>::Ones(1, 1);  // r x N layout, transposed accumulation
  for (Index l = 0; l < t.order(); ++l) {
    const Index n = t.dims[static_cast<size_t>(l)];
    const Index N = m.cols();
    const Index rr = t.rank(l + 1);
    Mat<T> next(rr, N * n);
    for (Index i = 0; i < n; ++i) {
      Mat<T> qi = t.slice(l, i).transpose() * m;  // rr x N
      for (Index p = 0; p < N; ++p) next.col(p * n + i) = qi.col(p);
    }
    m = std::move(next);
  }
  return m.transpose().col(0);
}

// TT-SVD from a dense vector in row-major mode order.  With tol = 0 the
// factorization is rank-revealing to machine precision; otherwise the result
// satisfies ||full(result) - values|| <= tol * ||values||.
template <class T>
TtTensor<T> tt_from_full(const Vec<T>& values, const std::vector<Index>& dims, double tol) {
  Index N = 1;
  for (Index n : dims) N *= n;
  detail::require(N == values.size(), "tt_from_full: size/dims mismatch");
  detail::require(N <= kDenseCap, "tt_from_full: dense cap exceeded");
  detail::require(values.allFinite(), "tt_from_full: non-finite entries");
  detail::require(tol >= 0.0, "tt_from_full: negative tolerance");

  const Index L = static_cast<Index>(dims.size());
  const double norm = values.norm();
  if (norm == 0.0) return tt_zero<T>(dims);
  const double delta = tol > 0.0 ? tol * norm / std::sqrt(double(std::max<Index>(L - 1, 1))) : kMachineRankTol * norm;

  TtTensor<T> t;
  t.dims = dims;
  Mat<T> w = Eigen::Map<const Mat<T>>(values.data(), 1, N);  // r x rest, mode-l index slowest within rest
  for (Index l = 0; l < L - 1; ++l) {
    const Index r = w.rows();
    const Index n = dims[static_cast<size_t>(l)];
    const Index rest = w.cols() / n;
    Mat<T> m(r * n, rest);
    for (Index i = 0; i < n; ++i) m.middleRows(i * r, r) = w.middleCols(i * rest, rest);
    Eigen::JacobiSVD<Mat<T>> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Index k = detail::truncation_rank(svd.singularValues(), delta);
    t.cores.push_back(svd.matrixU().leftCols(k));
    w = svd.singularValues().head(k).asDiagonal() * svd.matrixV().leftCols(k).transpose();
  }
  const Index r = w.rows();
  const Index n = dims[static_cast<size_t>(L - 1)];
  t.cores.push_back(Eigen::Map<const Mat<T>>(w.data(), r * n, 1));
  return t;
}

template <class T>
TtTensor<T> tt_scale(const TtTensor<T>& t, T s) {
  TtTensor<T> out = t;
  out.cores[0] *= s;
  return out;
}

template <class T>
TtTensor<T> tt_add(const TtTensor<T>& a, const TtTensor<T>& b) {
  detail::require(a.dims == b.dims, "tt_add: mode-size mismatch");
  const Index L = a.order();
  if (L == 1) {
    TtTensor<T> out = a;
    out.cores[0] += b.cores[0];
    return out;
  }
  TtTensor<T> out;
  out.dims = a.dims;
  for (Index l = 0; l < L; ++l) {
    const Index n = a.dims[static_cast<size_t>(l)];
    const Index ra = a.rank(l), rar = a.rank(l + 1);
    const Index rb = b.rank(l), rbr = b.rank(l + 1);
    if (l == 0) {
      Mat<T> c(n, rar + rbr);
      c << a.cores[0], b.cores[0];
      out.cores.push_back(std::move(c));
    } else if (l == L - 1) {
      Mat<T> c((ra + rb) * n, 1);
      for (Index i = 0; i < n; ++i) {
        c.block(i * (ra + rb), 0, ra, 1) = a.slice(l, i);
        c.block(i * (ra + rb) + ra, 0, rb, 1) = b.slice(l, i);
      }
      out.cores.push_back(std::move(c));
    } else {
      Mat<T> c = Mat<T>::Zero((ra + rb) * n, rar + rbr);
      for (Index i = 0; i < n; ++i) {
        c.block(i * (ra + rb), 0, ra, rar) = a.slice(l, i);
        c.block(i * (ra + rb) + ra, rar, rb, rbr) = b.slice(l, i);
      }
      out.cores.push_back(std::move(c));
    }
  }
  return out;
}

// Separated (tensor) product: entry at the combined index (p, q) is
// a[p] * b[q], with a's modes leading.  Exact; ranks are unchanged because the
// joining bond has rank one.
template <class T>
TtTensor<T> tt_concat(const TtTensor<T>& a, const TtTensor<T>& b) {
  TtTensor<T> out = a;
  out.dims.insert(out.dims.end(), b.dims.begin(), b.dims.end());
  out.cores.insert(out.cores.end(), b.cores.begin(), b.cores.end());
  return out;
}

template <class T>
TtTensor<T> tt_hadamard(const TtTensor<T>& a, const TtTensor<T>& b) {
  detail::require(a.dims == b.dims, "tt_hadamard: mode-size mismatch");
  TtTensor<T> out;
  out.dims = a.dims;
  for (Index l = 0; l < a.order(); ++l) {
    const Index n = a.dims[static_cast<size_t>(l)];
    const Index ra = a.rank(l), rar = a.rank(l + 1);
    const Index rb = b.rank(l), rbr = b.rank(l + 1);
    Mat<T> c(ra * rb * n, rar * rbr);
    for (Index i = 0; i < n; ++i) {
      auto sa = a.slice(l, i);
      auto sb = b.slice(l, i);
      // kron(sa, sb): combined left index a_a*rb + a_b, right index b_a*rbr + b_b
      for (Index pa = 0; pa < ra; ++pa)
        for (Index pb = 0; pb < rb; ++pb)
          for (Index qa = 0; qa < rar; ++qa)
            for (Index qb = 0; qb < rbr; ++qb)
              c(i * ra * rb + pa * rb + pb, qa * rbr + qb) = sa(pa, qa) * sb(pb, qb);
    }
    out.cores.push_back(std::move(c));
  }
  return out;
}

template <class T>
T tt_dot(const TtTensor<T>& a, const TtTensor<T>& b) {
  detail::require(a.dims == b.dims, "tt_dot: mode-size mismatch");
  Mat<T> w = Mat<T>::Ones(1, 1);
  for (Index l = 0; l < a.order(); ++l) {
    const Index n = a.dims[static_cast<size_t>(l)];
    Mat<T> next = Mat<T>::Zero(a.rank(l + 1), b.rank(l + 1));
    for (Index i = 0; i < n; ++i) next += a.slice(l, i).transpose() * w * b.slice(l, i);
    w = std::move(next);
  }
  return w(0, 0);
}

// In-place right-orthogonalization: after the sweep every core except the
// first has orthonormal horizontal unfoldings, and ||t|| = ||cores[0]||_F.
template <class T>
void right_orthogonalize(TtTensor<T>& t) {
  const Index L = t.order();
  for (Index l = L - 1; l >= 1; --l) {
    const Index r = t.rank(l);
    const Index n = t.dims[static_cast<size_t>(l)];
    const Index rr = t.rank(l + 1);
    Mat<T> h = detail::vertical_to_horizontal(t.cores[static_cast<size_t>(l)], r, n, rr);
    Mat<T> q, rm;
    detail::thin_qr(Mat<T>(h.transpose()), q, rm);  // h^T = q rm  =>  h = rm^T q^T
    const Index k = q.cols();
    Mat<T> qt = q.transpose();  // k x n*rr, orthonormal rows
    t.cores[static_cast<size_t>(l)] = detail::horizontal_to_vertical(qt, k, n, rr);
    t.cores[static_cast<size_t>(l - 1)] = t.cores[static_cast<size_t>(l - 1)] * rm.transpose();
  }
}

template <class T>
void left_orthogonalize(TtTensor<T>& t) {
  const Index L = t.order();
  for (Index l = 0; l < L - 1; ++l) {
    Mat<T> q, rm;
    detail::thin_qr(t.cores[static_cast<size_t>(l)], q, rm);
    t.cores[static_cast<size_t>(l)] = q;
    const Index k = q.cols();
    const Index n = t.dims[static_cast<size_t>(l + 1)];
    const Index rn = rm.cols();  // old bond rank
    const Index rrr = t.cores[static_cast<size_t>(l + 1)].cols();
    Mat<T> next(k * n, rrr);
    for (Index i = 0; i < n; ++i)
      next.middleRows(i * k, k) = rm * t.cores[static_cast<size_t>(l + 1)].middleRows(i * rn, rn);
    t.cores[static_cast<size_t>(l + 1)] = std::move(next);
  }
}

template <class T>
double tt_norm(const TtTensor<T>& t) {
  TtTensor<T> c = t;
  right_orthogonalize(c);
  return c.cores[0].norm();
}

// Norm-controlled recompression: ||result - t|| <= tol * ||t||, ranks
// non-increasing.  tol = 0 recompresses to numerically minimal ranks.
// max_rank additionally clamps every bond (the error bound then only covers
// the tolerance part); *norm_out receives ||t|| measured before truncation.
template <class T>
TtTensor<T> tt_round(const TtTensor<T>& t, double tol, Index max_rank = std::numeric_limits<Index>::max(),
                     double* norm_out = nullptr) {
  detail::require(tol >= 0.0, "tt_round: negative tolerance");
  detail::require(max_rank >= 1, "tt_round: max_rank must be positive");
  const Index L = t.order();
  if (L == 1) {
    if (norm_out) *norm_out = t.cores[0].norm();
    return t;
  }
  TtTensor<T> c = t;
  right_orthogonalize(c);
  const double norm = c.cores[0].norm();
  if (norm_out) *norm_out = norm;
  if (norm == 0.0) return tt_zero<T>(t.dims);
  const double delta = tol > 0.0 ? tol * norm / std::sqrt(double(L - 1)) : kMachineRankTol * norm;
  for (Index l = 0; l < L - 1; ++l) {
    // JacobiSVD, not BDCSVD: BDCSVD mispairs singular vectors on cores with
    // tightly clustered spectra, silently breaking the rounding bound.
    Eigen::JacobiSVD<Mat<T>> svd(c.cores[static_cast<size_t>(l)], Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Index k = std::min(detail::truncation_rank(svd.singularValues(), delta), max_rank);
    c.cores[static_cast<size_t>(l)] = svd.matrixU().leftCols(k);
    Mat<T> carry = svd.singularValues().head(k).asDiagonal() * svd.matrixV().leftCols(k).transpose();
    const Index rn = carry.cols();
    const Index n = c.dims[static_cast<size_t>(l + 1)];
    const Index rrr = c.cores[static_cast<size_t>(l + 1)].cols();
    Mat<T> next(k * n, rrr);
    for (Index i = 0; i < n; ++i)
      next.middleRows(i * k, k) = carry * c.cores[static_cast<size_t>(l + 1)].middleRows(i * rn, rn);
    c.cores[static_cast<size_t>(l + 1)] = std::move(next);
  }
  return c;
}

struct RankReport {
  std::vector<Index> ranks;
  Index max_rank = 0;
  double effective_rank = 0.0;
  Index parameter_count = 0;
};

template <class T>
RankReport rank_report(const TtTensor<T>& t) {
  RankReport rep;
  rep.ranks = t.ranks();
  rep.max_rank = 1;
  for (Index r : rep.ranks) rep.max_rank = std::max(rep.max_rank, r);
  rep.parameter_count = 0;
  for (Index l = 0; l < t.order(); ++l)
    rep.parameter_count += t.rank(l) * t.dims[static_cast<size_t>(l)] * t.rank(l + 1);
  const Index L = t.order();
  if (L == 1) {
    rep.effective_rank = 1.0;
    return rep;
  }
  // Uniform rank with equal storage: quad * r^2 + lin * r = parameter_count.
  double quad = 0.0;
  for (Index l = 1; l < L - 1; ++l) quad += double(t.dims[static_cast<size_t>(l)]);
  const double lin = double(t.dims[0] + t.dims[static_cast<size_t>(L - 1)]);
  const double p = double(rep.parameter_count);
  rep.effective_rank = quad > 0.0 ? (-lin + std::sqrt(lin * lin + 4.0 * quad * p)) / (2.0 * quad) : p / lin;
  return rep;
}

}  // namespace qttfem
