#include <doctest.h>

#include "dense_ref.hpp"
#include "qttfem/tt_tensor.hpp"

#include <cmath>

using namespace qttfem;
using dense_ref::binary_dims;

namespace {
const double kPi = 3.14159265358979323846;

Index max_rank_of(const TtTensor<double>& t) { return rank_report(t).max_rank; }
}  // namespace

TEST_CASE("tt_from_full: constant tensor is rank one") {
  auto v = Eigen::VectorXd::Ones(1 << 10);
  auto t = tt_from_full<double>(v, binary_dims(10), 0.0);
  CHECK(max_rank_of(t) == 1);
  CHECK(full(t).isApprox(v, 1e-13));
}

TEST_CASE("tt_from_full: linear samples have ranks <= 2") {
  const Index L = 8;
  auto v = dense_ref::sample_midpoints([](double x) { return x; }, L);
  auto t = tt_from_full<double>(v, binary_dims(L), 1e-13);
  CHECK(max_rank_of(t) <= 2);
  CHECK((full(t) - v).norm() <= 1e-13 * v.norm());
}

TEST_CASE("tt_from_full: cos^2 has ranks <= 3, matching the dense oracle") {
  const Index L = 10;
  auto v = dense_ref::sample_midpoints([](double y) { return std::cos(2.0 * kPi * y) * std::cos(2.0 * kPi * y); }, L);
  auto t = tt_from_full<double>(v, binary_dims(L), 1e-12);
  const auto oracle = dense_ref::bond_ranks(v, binary_dims(L), 1e-12);
  Index oracle_max = 1;
  for (Index r : oracle) oracle_max = std::max(oracle_max, r);
  CHECK(oracle_max <= 3);  // frequencies {0, +-2}: three exponentials
  CHECK(max_rank_of(t) <= 3);
  CHECK(max_rank_of(t) >= oracle_max);  // exact data: ranks cannot undershoot the oracle
}

TEST_CASE("tt_from_full: round-trip on random data, including degenerate modes") {
  for (auto dims : {binary_dims(10), std::vector<Index>{4, 3, 2, 5}, std::vector<Index>{2, 1, 2, 1, 2}}) {
    Index n = 1;
    for (Index d : dims) n *= d;
    auto v = dense_ref::random_vector(n, 42);
    auto t = tt_from_full<double>(v, dims, 0.0);
    CHECK((full(t) - v).norm() <= 1e-12 * v.norm());
  }
}

TEST_CASE("tt_entry matches stored values and closed forms") {
  auto ones = tt_ones<double>(binary_dims(6));
  CHECK(tt_entry(ones, {0, 1, 0, 1, 1, 0}) == doctest::Approx(1.0));

  const Index L = 8;
  auto v = dense_ref::sample_midpoints([](double x) { return x; }, L);
  auto t = tt_from_full<double>(v, binary_dims(L), 0.0);
  std::vector<Index> last(L, 1);  // grid index i = 2^L (all bits set)
  const double expect = (std::pow(2.0, double(L)) - 0.5) / std::pow(2.0, double(L));
  CHECK(tt_entry(t, last) == doctest::Approx(expect).epsilon(1e-13));

  auto r = dense_ref::random_vector(1 << 6, 7);
  auto tr = tt_from_full<double>(r, binary_dims(6), 0.0);
  for (Index p : {0, 13, 37, 63}) {
    std::vector<Index> idx(6);
    for (Index l = 0; l < 6; ++l) idx[static_cast<size_t>(l)] = (p >> (5 - l)) & 1;
    CHECK(tt_entry(tr, idx) == doctest::Approx(r(p)).epsilon(1e-13));
  }
}

TEST_CASE("tt arithmetic: cancellation, identity element, dense dot oracle") {
  auto t = tt_rand<double>(binary_dims(10), 3, 11);
  auto z = tt_add(t, tt_scale(t, -1.0));
  CHECK(tt_norm(z) <= 1e-12 * tt_norm(t));

  auto ones = tt_ones<double>(binary_dims(10));
  auto h = tt_hadamard(ones, t);
  CHECK(tt_norm(tt_add(h, tt_scale(t, -1.0))) <= 1e-12 * tt_norm(t));

  auto a = tt_rand<double>(binary_dims(6), 2, 1);
  auto b = tt_rand<double>(binary_dims(6), 2, 2);
  const double dense_dot = full(a).dot(full(b));
  CHECK(tt_dot(a, b) == doctest::Approx(dense_dot).epsilon(1e-12));
  CHECK(tt_norm(a) == doctest::Approx(full(a).norm()).epsilon(1e-12));
}

TEST_CASE("tt arithmetic: rank bounds and bilinearity") {
  auto a = tt_rand<double>(binary_dims(8), 2, 3);
  auto b = tt_rand<double>(binary_dims(8), 3, 4);
  auto s = tt_add(a, b);
  auto p = tt_hadamard(a, b);
  for (Index bond = 1; bond < 8; ++bond) {
    CHECK(s.rank(bond) <= a.rank(bond) + b.rank(bond));
    CHECK(p.rank(bond) <= a.rank(bond) * b.rank(bond));
  }
  auto c = tt_rand<double>(binary_dims(8), 2, 5);
  const double lhs = tt_dot(c, tt_add(a, tt_scale(b, 2.5)));
  const double rhs = tt_dot(c, a) + 2.5 * tt_dot(c, b);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-11));
}

TEST_CASE("tt_hadamard matches dense elementwise product") {
  auto a = tt_rand<double>(binary_dims(7), 2, 21);
  auto b = tt_rand<double>(binary_dims(7), 3, 22);
  Eigen::VectorXd expect = full(a).cwiseProduct(full(b));
  CHECK((full(tt_hadamard(a, b)) - expect).norm() <= 1e-12 * expect.norm());
}

TEST_CASE("tt_round: recompression and entry agreement") {
  auto t = tt_rand<double>(binary_dims(9), 2, 3);
  auto r0 = tt_round(t, 0.0);
  CHECK((full(r0) - full(t)).norm() <= 1e-12 * tt_norm(t));

  // artificial rank inflation: sum of 10 copies collapses back
  TtTensor<double> s = t;
  for (int k = 0; k < 9; ++k) s = tt_add(s, t);
  CHECK(max_rank_of(s) >= 10);
  auto rs = tt_round(s, 1e-12);
  CHECK(max_rank_of(rs) <= 2);
  CHECK(tt_norm(tt_add(rs, tt_scale(t, -10.0))) <= 1e-10 * tt_norm(t));
}

TEST_CASE("tt_round: rounding contract over tolerance sweep (dense check, small L)") {
  auto v = dense_ref::random_vector(1 << 10, 5);
  auto t = tt_from_full<double>(v, binary_dims(10), 0.0);
  for (double tol : {1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12}) {
    auto r = tt_round(t, tol);
    CHECK((full(r) - v).norm() <= tol * v.norm() * (1.0 + 1e-10));
    for (Index bond = 0; bond <= 10; ++bond) CHECK(r.rank(bond) <= t.rank(bond));
  }
}

TEST_CASE("tt_round: rounding contract at large L via TT norms") {
  // structured tensor at L = 16 built without densification
  auto a = tt_rand<double>(binary_dims(16), 4, 31);
  for (double tol : {1e-2, 1e-6, 1e-12}) {
    auto r = tt_round(a, tol);
    const double err = tt_norm(tt_add(r, tt_scale(a, -1.0)));
    CHECK(err <= tol * tt_norm(a) * (1.0 + 1e-10));
  }
}

TEST_CASE("tt_round: two-scale product rank grows slowly as tolerance shrinks") {
  const Index L = 16;
  const double eps = std::pow(2.0, -10.0);
  auto v = dense_ref::sample_midpoints(
      [&](double x) {
        const double c = std::cos(2.0 * kPi * x / eps);
        return (1.0 + x) * (1.0 + c * c);
      },
      L);
  auto t = tt_from_full<double>(v, binary_dims(L), 0.0);
  Index prev = 1;
  for (double tol : {1e-2, 1e-4, 1e-6, 1e-8, 1e-10}) {
    auto r = tt_round(t, tol);
    const Index mr = max_rank_of(r);
    CHECK(mr >= prev);  // monotone in decreasing tolerance
    prev = mr;
  }
  // polylog scaling: even at 1e-10 the rank stays far below the generic bound
  CHECK(prev <= 12);
}

TEST_CASE("rank_report: definition fixed points") {
  auto ones = tt_ones<double>(binary_dims(8));
  auto rep1 = rank_report(ones);
  CHECK(rep1.max_rank == 1);
  CHECK(rep1.effective_rank == doctest::Approx(1.0));
  CHECK(rep1.parameter_count == 16);

  auto u = tt_rand<double>(binary_dims(10), 3, 3);
  auto rep = rank_report(u);
  CHECK(rep.max_rank == 3);
  CHECK(rep.effective_rank == doctest::Approx(3.0).epsilon(1e-9));
  Index expect_params = 0;
  for (Index l = 0; l < 10; ++l) expect_params += u.rank(l) * 2 * u.rank(l + 1);
  CHECK(rep.parameter_count == expect_params);
  CHECK(rep.effective_rank <= double(rep.max_rank));
}

TEST_CASE("orthogonalization preserves values") {
  auto t = tt_rand<double>(binary_dims(8), 3, 17);
  auto v = full(t);
  TtTensor<double> a = t;
  right_orthogonalize(a);
  CHECK((full(a) - v).norm() <= 1e-12 * v.norm());
  TtTensor<double> b = t;
  left_orthogonalize(b);
  CHECK((full(b) - v).norm() <= 1e-12 * v.norm());
  CHECK(a.cores[0].norm() == doctest::Approx(v.norm()).epsilon(1e-12));
}

TEST_CASE("tt_from_full input validation") {
  CHECK_THROWS(tt_from_full<double>(Eigen::VectorXd::Ones(7), binary_dims(3), 0.0));
  Eigen::VectorXd bad = Eigen::VectorXd::Ones(8);
  bad(3) = std::nan("");
  CHECK_THROWS(tt_from_full<double>(bad, binary_dims(3), 0.0));
  CHECK_THROWS(tt_from_full<double>(Eigen::VectorXd::Ones(8), binary_dims(3), -1.0));
}
