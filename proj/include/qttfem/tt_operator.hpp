#pragma once

#include "qttfem/tt_tensor.hpp"

namespace qttfem {

// Linear map between quantized grids.  Stored as a TtTensor whose mode l has
// size m_l * n_l with flattened index k = i + m_l * j (output index i fastest).
template <class T>
struct TtOperator {
  std::vector<Index> row_dims;
  std::vector<Index> col_dims;
  TtTensor<T> tensor;

  Index order() const { return tensor.order(); }
  Index rank(Index bond) const { return tensor.rank(bond); }
  std::vector<Index> ranks() const { return tensor.ranks(); }

  auto slice(Index l, Index i, Index j) const { return tensor.slice(l, i + row_dims[static_cast<size_t>(l)] * j); }

  Index rows() const {
    Index n = 1;
    for (Index d : row_dims) n *= d;
    return n;
  }
  Index cols() const {
    Index n = 1;
    for (Index d : col_dims) n *= d;
    return n;
  }
};

using TtOperatorD = TtOperator<double>;

namespace detail {

template <class T>
void check_operator(const TtOperator<T>& a) {
  require(a.row_dims.size() == a.col_dims.size() && static_cast<Index>(a.row_dims.size()) == a.tensor.order(),
          "tt_operator: dimension bookkeeping mismatch");
  for (Index l = 0; l < a.tensor.order(); ++l)
    require(a.tensor.dims[static_cast<size_t>(l)] == a.row_dims[static_cast<size_t>(l)] * a.col_dims[static_cast<size_t>(l)],
            "tt_operator: mode size != row*col size");
  check_train(a.tensor);
}

// Entry setter for hand-built operator cores (vertical unfolding layout).
template <class T>
void op_set(Mat<T>& core, Index r_prev, Index m, Index a, Index i, Index j, Index b, T v) {
  core(a + r_prev * (i + m * j), b) = v;
}

}  // namespace detail

template <class T>
TtOperator<T> op_identity(const std::vector<Index>& dims) {
  TtOperator<T> a;
  a.row_dims = dims;
  a.col_dims = dims;
  a.tensor.dims.reserve(dims.size());
  for (Index n : dims) {
    a.tensor.dims.push_back(n * n);
    Mat<T> c = Mat<T>::Zero(n * n, 1);
    for (Index i = 0; i < n; ++i) c(i + n * i, 0) = T(1);
    a.tensor.cores.push_back(std::move(c));
  }
  return a;
}

// Diagonal operator with diagonal entries given by a TT vector.
template <class T>
TtOperator<T> op_diag(const TtTensor<T>& v) {
  TtOperator<T> a;
  a.row_dims = v.dims;
  a.col_dims = v.dims;
  a.tensor.dims.reserve(v.dims.size());
  for (Index l = 0; l < v.order(); ++l) {
    const Index n = v.dims[static_cast<size_t>(l)];
    const Index rl = v.rank(l), rr = v.rank(l + 1);
    Mat<T> c = Mat<T>::Zero(rl * n * n, rr);
    for (Index i = 0; i < n; ++i) c.middleRows((i + n * i) * rl, rl) = v.slice(l, i);
    a.tensor.dims.push_back(n * n);
    a.tensor.cores.push_back(std::move(c));
  }
  return a;
}

// Separated (tensor) product of operators: acts as a on the leading modes and
// as b on the trailing ones.  Exact; the joining bond has rank one.
template <class T>
TtOperator<T> op_concat(const TtOperator<T>& a, const TtOperator<T>& b) {
  TtOperator<T> c = a;
  c.row_dims.insert(c.row_dims.end(), b.row_dims.begin(), b.row_dims.end());
  c.col_dims.insert(c.col_dims.end(), b.col_dims.begin(), b.col_dims.end());
  c.tensor = tt_concat(c.tensor, b.tensor);
  return c;
}

template <class T>
TtOperator<T> op_transpose(const TtOperator<T>& a) {
  TtOperator<T> b;
  b.row_dims = a.col_dims;
  b.col_dims = a.row_dims;
  b.tensor.dims.reserve(a.row_dims.size());
  for (Index l = 0; l < a.order(); ++l) {
    const Index m = a.row_dims[static_cast<size_t>(l)];
    const Index n = a.col_dims[static_cast<size_t>(l)];
    const Index rl = a.rank(l);
    Mat<T> c(rl * n * m, a.rank(l + 1));
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j) c.middleRows((j + n * i) * rl, rl) = a.tensor.slice(l, i + m * j);
    b.tensor.dims.push_back(n * m);
    b.tensor.cores.push_back(std::move(c));
  }
  return b;
}

template <class T>
TtOperator<T> op_scale(const TtOperator<T>& a, T s) {
  TtOperator<T> b = a;
  b.tensor.cores[0] *= s;
  return b;
}

template <class T>
TtOperator<T> op_add(const TtOperator<T>& a, const TtOperator<T>& b) {
  detail::require(a.row_dims == b.row_dims && a.col_dims == b.col_dims, "op_add: shape mismatch");
  TtOperator<T> c;
  c.row_dims = a.row_dims;
  c.col_dims = a.col_dims;
  c.tensor = tt_add(a.tensor, b.tensor);
  return c;
}

template <class T>
TtOperator<T> op_round(const TtOperator<T>& a, double tol) {
  TtOperator<T> b;
  b.row_dims = a.row_dims;
  b.col_dims = a.col_dims;
  b.tensor = tt_round(a.tensor, tol);
  return b;
}

template <class T>
double op_norm(const TtOperator<T>& a) {
  return tt_norm(a.tensor);
}

template <class T>
TtTensor<T> tt_apply(const TtOperator<T>& a, const TtTensor<T>& x) {
  detail::require(a.col_dims == x.dims, "tt_apply: column sizes do not match argument");
  TtTensor<T> y;
  y.dims = a.row_dims;
  y.cores.reserve(static_cast<size_t>(x.order()));
  for (Index l = 0; l < x.order(); ++l) {
    const Index m = a.row_dims[static_cast<size_t>(l)];
    const Index n = a.col_dims[static_cast<size_t>(l)];
    const Index ra = a.rank(l), rar = a.rank(l + 1);
    const Index rx = x.rank(l), rxr = x.rank(l + 1);
    Mat<T> c = Mat<T>::Zero(ra * rx * m, rar * rxr);
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j) {
        auto sa = a.tensor.slice(l, i + m * j);
        auto sx = x.slice(l, j);
        for (Index pa = 0; pa < ra; ++pa)
          for (Index px = 0; px < rx; ++px)
            for (Index qa = 0; qa < rar; ++qa)
              c.block(i * ra * rx + pa * rx + px, qa * rxr, 1, rxr) += sa(pa, qa) * sx.row(px);
      }
    y.cores.push_back(std::move(c));
  }
  return y;
}

// Operator product (a * b): first apply b, then a.
template <class T>
TtOperator<T> op_compose(const TtOperator<T>& a, const TtOperator<T>& b) {
  detail::require(a.col_dims == b.row_dims, "op_compose: inner dimensions mismatch");
  TtOperator<T> c;
  c.row_dims = a.row_dims;
  c.col_dims = b.col_dims;
  c.tensor.dims.reserve(a.row_dims.size());
  for (Index l = 0; l < a.order(); ++l) {
    const Index m = a.row_dims[static_cast<size_t>(l)];
    const Index p = a.col_dims[static_cast<size_t>(l)];
    const Index n = b.col_dims[static_cast<size_t>(l)];
    const Index ra = a.rank(l), rar = a.rank(l + 1);
    const Index rb = b.rank(l), rbr = b.rank(l + 1);
    Mat<T> core = Mat<T>::Zero(ra * rb * m * n, rar * rbr);
    for (Index i = 0; i < m; ++i)
      for (Index k = 0; k < n; ++k)
        for (Index j = 0; j < p; ++j) {
          auto sa = a.tensor.slice(l, i + m * j);
          auto sb = b.tensor.slice(l, j + p * k);
          for (Index pa = 0; pa < ra; ++pa)
            for (Index pb = 0; pb < rb; ++pb)
              for (Index qa = 0; qa < rar; ++qa)
                core.block((i + m * k) * ra * rb + pa * rb + pb, qa * rbr, 1, rbr) += sa(pa, qa) * sb.row(pb);
        }
    c.tensor.dims.push_back(m * n);
    c.tensor.cores.push_back(std::move(core));
  }
  return c;
}

// Mode-wise tensorization of two equal-length trains: mode l of the result has
// size n_a * n_b with combined index i_a * n_b + i_b (first train's bit high).
template <class T>
TtTensor<T> tt_zip(const TtTensor<T>& a, const TtTensor<T>& b) {
  detail::require(a.order() == b.order(), "tt_zip: order mismatch");
  TtTensor<T> out;
  out.dims.reserve(static_cast<size_t>(a.order()));
  for (Index l = 0; l < a.order(); ++l) {
    const Index na = a.dims[static_cast<size_t>(l)];
    const Index nb = b.dims[static_cast<size_t>(l)];
    const Index ra = a.rank(l), rar = a.rank(l + 1);
    const Index rb = b.rank(l), rbr = b.rank(l + 1);
    Mat<T> c(ra * rb * na * nb, rar * rbr);
    for (Index ia = 0; ia < na; ++ia)
      for (Index ib = 0; ib < nb; ++ib) {
        auto sa = a.slice(l, ia);
        auto sb = b.slice(l, ib);
        for (Index pa = 0; pa < ra; ++pa)
          for (Index pb = 0; pb < rb; ++pb)
            for (Index qa = 0; qa < rar; ++qa)
              for (Index qb = 0; qb < rbr; ++qb)
                c((ia * nb + ib) * ra * rb + pa * rb + pb, qa * rbr + qb) = sa(pa, qa) * sb(pb, qb);
      }
    out.dims.push_back(na * nb);
    out.cores.push_back(std::move(c));
  }
  return out;
}

template <class T>
TtOperator<T> op_zip(const TtOperator<T>& a, const TtOperator<T>& b) {
  detail::require(a.order() == b.order(), "op_zip: order mismatch");
  TtOperator<T> c;
  c.row_dims.reserve(a.row_dims.size());
  c.col_dims.reserve(a.col_dims.size());
  c.tensor.dims.reserve(a.row_dims.size());
  for (Index l = 0; l < a.order(); ++l) {
    const Index ma = a.row_dims[static_cast<size_t>(l)], na = a.col_dims[static_cast<size_t>(l)];
    const Index mb = b.row_dims[static_cast<size_t>(l)], nb = b.col_dims[static_cast<size_t>(l)];
    const Index m = ma * mb, n = na * nb;
    const Index ra = a.rank(l), rar = a.rank(l + 1);
    const Index rb = b.rank(l), rbr = b.rank(l + 1);
    Mat<T> core(ra * rb * m * n, rar * rbr);
    for (Index ia = 0; ia < ma; ++ia)
      for (Index ib = 0; ib < mb; ++ib)
        for (Index ja = 0; ja < na; ++ja)
          for (Index jb = 0; jb < nb; ++jb) {
            auto sa = a.tensor.slice(l, ia + ma * ja);
            auto sb = b.tensor.slice(l, ib + mb * jb);
            const Index i = ia * mb + ib;
            const Index j = ja * nb + jb;
            for (Index pa = 0; pa < ra; ++pa)
              for (Index pb = 0; pb < rb; ++pb)
                for (Index qa = 0; qa < rar; ++qa)
                  for (Index qb = 0; qb < rbr; ++qb)
                    core((i + m * j) * ra * rb + pa * rb + pb, qa * rbr + qb) = sa(pa, qa) * sb(pb, qb);
          }
    c.row_dims.push_back(m);
    c.col_dims.push_back(n);
    c.tensor.dims.push_back(m * n);
    c.tensor.cores.push_back(std::move(core));
  }
  return c;
}

template <class T>
Mat<T> dense(const TtOperator<T>& a) {
  detail::require(a.rows() * a.cols() <= kDenseCap, "dense: cap exceeded");
  const Vec<T> v = full(a.tensor);
  Mat<T> out = Mat<T>::Zero(a.rows(), a.cols());
  const Index L = a.order();
  std::vector<Index> digit(static_cast<size_t>(L), 0);
  for (Index p = 0; p < v.size(); ++p) {
    // decode row-major digits of the flattened (i + m*j) multi-index
    Index rem = p;
    for (Index l = L - 1; l >= 0; --l) {
      digit[static_cast<size_t>(l)] = rem % a.tensor.dims[static_cast<size_t>(l)];
      rem /= a.tensor.dims[static_cast<size_t>(l)];
    }
    Index I = 0, J = 0;
    for (Index l = 0; l < L; ++l) {
      const Index m = a.row_dims[static_cast<size_t>(l)];
      I = I * m + digit[static_cast<size_t>(l)] % m;
      J = J * a.col_dims[static_cast<size_t>(l)] + digit[static_cast<size_t>(l)] / m;
    }
    out(I, J) = v(p);
  }
  return out;
}

template <class T>
TtOperator<T> op_from_dense(const Mat<T>& m, const std::vector<Index>& row_dims, const std::vector<Index>& col_dims,
                            double tol) {
  detail::require(row_dims.size() == col_dims.size(), "op_from_dense: order mismatch");
  std::vector<Index> dims;
  Index total = 1;
  for (size_t l = 0; l < row_dims.size(); ++l) {
    dims.push_back(row_dims[l] * col_dims[l]);
    total *= dims.back();
  }
  detail::require(m.rows() * m.cols() == total, "op_from_dense: size mismatch");
  Vec<T> v(total);
  const Index L = static_cast<Index>(dims.size());
  std::vector<Index> digit(static_cast<size_t>(L), 0);
  for (Index p = 0; p < total; ++p) {
    Index rem = p;
    for (Index l = L - 1; l >= 0; --l) {
      digit[static_cast<size_t>(l)] = rem % dims[static_cast<size_t>(l)];
      rem /= dims[static_cast<size_t>(l)];
    }
    Index I = 0, J = 0;
    for (Index l = 0; l < L; ++l) {
      const Index mm = row_dims[static_cast<size_t>(l)];
      I = I * mm + digit[static_cast<size_t>(l)] % mm;
      J = J * col_dims[static_cast<size_t>(l)] + digit[static_cast<size_t>(l)] / mm;
    }
    v(p) = m(I, J);
  }
  TtOperator<T> a;
  a.row_dims = row_dims;
  a.col_dims = col_dims;
  a.tensor = tt_from_full(v, dims, tol);
  return a;
}

}  // namespace qttfem
