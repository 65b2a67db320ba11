#include <doctest.h>

#include <cmath>

#include "casenbr/errors.hpp"
#include "casenbr/kernels.hpp"
#include "helpers.hpp"

using namespace casenbr;
namespace K = casenbr::kernels;
using testing::random_tensor;

namespace {

Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  Tensor<double> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

Tensor<double> transpose(const Tensor<double>& a) {
  Tensor<double> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

template <typename Real>
double max_diff(const Tensor<Real>& a, const Tensor<Real>& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace

TEST_CASE("matmul identity and zero") {
  const auto eye = Tensor<double>::from_rows({{1, 0}, {0, 1}});
  const auto b = Tensor<double>::from_rows({{1, 2, 3}, {4, 5, 6}});
  Tensor<double> c;
  K::matmul(eye, b, c, false);
  CHECK(c == b);
  K::matmul(Tensor<double>(2, 2), b, c, false);
  CHECK(c == Tensor<double>(2, 3));
}

TEST_CASE("matmul matches a triple loop in double") {
  Rng rng(1);
  const auto a = random_tensor<double>(3, 4, rng);
  const auto b = random_tensor<double>(4, 2, rng);
  Tensor<double> c;
  K::matmul(a, b, c, false);
  CHECK(max_diff(c, naive_matmul(a, b)) < 1e-12);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor<double> c;
  try {
    K::matmul(Tensor<double>(2, 3), Tensor<double>(4, 2), c, false);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x2") != std::string::npos);
  }
}

TEST_CASE_TEMPLATE("parallel kernels agree with the reference", Real, float, double) {
  Rng rng(7);
  const double tol = sizeof(Real) == 4 ? 1e-4 : 1e-11;
  for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1}, {5, 7, 3}, {33, 130, 17},
                         {70, 256, 129}}) {
    const auto a = random_tensor<Real>(m, k, rng);
    const auto b = random_tensor<Real>(k, n, rng);
    const auto at = random_tensor<Real>(k, m, rng);
    const auto bt = random_tensor<Real>(n, k, rng);
    Tensor<Real> r, p;
    K::reference::matmul(a, b, r, false);
    K::parallel::matmul(a, b, p, false);
    CHECK(max_diff(r, p) < tol * static_cast<double>(k));
    K::reference::matmul_tn(at, b, r, false);
    K::parallel::matmul_tn(at, b, p, false);
    CHECK(max_diff(r, p) < tol * static_cast<double>(k));
    K::reference::matmul_nt(a, bt, r, false);
    K::parallel::matmul_nt(a, bt, p, false);
    CHECK(max_diff(r, p) < tol * static_cast<double>(k));
    // accumulate mode adds onto the existing output
    Tensor<Real> acc = r;
    K::parallel::matmul_nt(a, bt, acc, true);
    for (std::size_t i = 0; i < acc.size(); ++i)
      CHECK(static_cast<double>(acc[i]) == doctest::Approx(2.0 * static_cast<double>(r[i])).epsilon(1e-4));
  }

  for (std::size_t w : {1, 3, 7, 14}) {
    const auto signal = random_tensor<Real>(9, 30, rng);
    const auto kernel = random_tensor<Real>(2, w, rng);
    const auto bias = random_tensor<Real>(1, 2, rng);
    Tensor<Real> r, p;
    K::reference::conv1d_strided(signal, kernel, bias, r);
    K::parallel::conv1d_strided(signal, kernel, bias, p);
    CHECK(max_diff(r, p) < tol * 10);
    const auto d_out = random_tensor<Real>(r.rows(), r.cols(), rng);
    Tensor<Real> ds_r(9, 30), ds_p(9, 30), dk_r(2, w), dk_p(2, w), db_r(1, 2), db_p(1, 2);
    K::reference::conv1d_strided_backward(signal, kernel, d_out, &ds_r, &dk_r, &db_r);
    K::parallel::conv1d_strided_backward(signal, kernel, d_out, &ds_p, &dk_p, &db_p);
    CHECK(max_diff(ds_r, ds_p) < tol * 10);
    CHECK(max_diff(dk_r, dk_p) < tol * 100);
    CHECK(max_diff(db_r, db_p) < tol * 100);
  }

  const std::vector<std::size_t> qo = {0, 3, 4, 9}, ko = {0, 2, 7, 8};
  const auto q = random_tensor<Real>(9, 8, rng);
  const auto k = random_tensor<Real>(8, 8, rng);
  const auto v = random_tensor<Real>(8, 8, rng);
  Tensor<Real> r, p;
  std::vector<Real> pr, pp;
  K::reference::segment_attention(q, k, v, qo, ko, 2, r, pr);
  K::parallel::segment_attention(q, k, v, qo, ko, 2, p, pp);
  CHECK(max_diff(r, p) < tol * 10);
  REQUIRE(pr.size() == K::attention_probs_size(qo, ko, 2));
  const auto d_out = random_tensor<Real>(9, 8, rng);
  Tensor<Real> dq_r(9, 8), dq_p(9, 8), dk_r(8, 8), dk_p(8, 8), dv_r(8, 8), dv_p(8, 8);
  K::reference::segment_attention_backward(q, k, v, qo, ko, 2, pr, d_out, &dq_r, &dk_r, &dv_r);
  K::parallel::segment_attention_backward(q, k, v, qo, ko, 2, pp, d_out, &dq_p, &dk_p, &dv_p);
  CHECK(max_diff(dq_r, dq_p) < tol * 10);
  CHECK(max_diff(dk_r, dk_p) < tol * 10);
  CHECK(max_diff(dv_r, dv_p) < tol * 10);
}

TEST_CASE("parallel kernels are independent of the thread count") {
  Rng rng(3);
  const auto a = random_tensor<float>(200, 300, rng);
  const auto b = random_tensor<float>(300, 64, rng);
  Tensor<float> one, four;
  const int saved = K::threads();
  K::set_threads(1);
  K::parallel::matmul(a, b, one, false);
  K::set_threads(4);
  K::parallel::matmul(a, b, four, false);
  K::set_threads(saved);
  CHECK(one == four);
}

TEST_CASE("conv1d window sums and zero signal") {
  Tensor<double> signal(1, 14);
  signal(0, 3) = 1;
  signal(0, 10) = 1;
  const Tensor<double> kernel(1, 7, 1.0), zero_bias(1, 1);
  Tensor<double> out;
  K::conv1d_strided(signal, kernel, zero_bias, out);
  CHECK(out == Tensor<double>::from_rows({{1, 1}}));

  const auto bias = Tensor<double>::from_rows({{0.5, -2}});
  K::conv1d_strided(Tensor<double>(1, 14), Tensor<double>(2, 7, 3.0), bias, out);
  CHECK(out == Tensor<double>::from_rows({{0.5, 0.5, -2, -2}}));

  K::conv1d_strided(Tensor<double>(1, 364), Tensor<double>(1, 91), Tensor<double>(1, 1), out);
  CHECK(out.cols() == 4);

  // trailing remainder is ignored: T = 10, w = 4 uses positions 0..7
  Tensor<double> tail(1, 10);
  tail(0, 8) = tail(0, 9) = 1;
  K::conv1d_strided(tail, Tensor<double>(1, 4, 1.0), Tensor<double>(1, 1), out);
  CHECK(out == Tensor<double>::from_rows({{0, 0}}));

  CHECK_THROWS_AS(K::conv1d_strided(Tensor<double>(1, 5), Tensor<double>(1, 7), Tensor<double>(1, 1), out),
                  ShapeError);
}

TEST_CASE("attention with a single key returns that key's value") {
  const auto q = Tensor<double>::from_rows({{3, -1, 2, 7}});
  const auto k = Tensor<double>::from_rows({{0.2, 5, -3, 1}});
  const auto v = Tensor<double>::from_rows({{1, 2, 3, 4}});
  const std::vector<std::size_t> off = {0, 1};
  Tensor<double> out;
  std::vector<double> probs;
  K::segment_attention(q, k, v, off, off, 2, out, probs);
  CHECK(out == v);
  for (double p : probs) CHECK(p == 1.0);
}

TEST_CASE("flop counter counts multiply-adds") {
  Tensor<float> c;
  K::reset_flop_count();
  K::matmul(Tensor<float>(3, 4), Tensor<float>(4, 5), c, false);
  CHECK(K::flop_count() == 60);
}
