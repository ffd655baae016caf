#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "chemoflow/linalg.hpp"

using namespace chemoflow;
using linalg::SparseMatrix;
using Vec = Eigen::VectorXd;

namespace {

SparseMatrix<double> poisson2d(int n) {
  std::vector<Eigen::Triplet<double>> t;
  auto id = [n](int i, int j) { return i + n * j; };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      t.emplace_back(id(i, j), id(i, j), 4.0);
      if (i > 0) t.emplace_back(id(i, j), id(i - 1, j), -1.0);
      if (i + 1 < n) t.emplace_back(id(i, j), id(i + 1, j), -1.0);
      if (j > 0) t.emplace_back(id(i, j), id(i, j - 1), -1.0);
      if (j + 1 < n) t.emplace_back(id(i, j), id(i, j + 1), -1.0);
    }
  SparseMatrix<double> a(n * n, n * n);
  a.setFromTriplets(t.begin(), t.end());
  a.makeCompressed();
  return a;
}

SparseMatrix<double> random_sparse(int n, double density, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), p(0.0, 1.0);
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (p(rng) < density) t.emplace_back(i, j, u(rng));
  SparseMatrix<double> a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  a.makeCompressed();
  return a;
}

}  // namespace

TEST_CASE("csr layout invariants") {
  const auto a = poisson2d(5);
  CHECK_NOTHROW(linalg::validate_csr(a));
  CHECK(a.outerSize() + 1 == 26);
  SparseMatrix<double> u(3, 3);
  u.insert(0, 0) = 1.0;
  CHECK_THROWS_AS(linalg::validate_csr(u), std::logic_error);
}

TEST_CASE("spmv") {
  SUBCASE("identity") {
    SparseMatrix<double> i(6, 6);
    i.setIdentity();
    const Vec x = Vec::LinSpaced(6, -1.0, 4.0);
    CHECK(linalg::spmv(i, x) == x);
  }
  SUBCASE("1D Dirichlet Laplacian times ones") {
    SparseMatrix<double> l(4, 4);
    std::vector<Eigen::Triplet<double>> t;
    for (int r = 0; r < 4; ++r) {
      t.emplace_back(r, r, 2.0);
      if (r) t.emplace_back(r, r - 1, -1.0);
      if (r < 3) t.emplace_back(r, r + 1, -1.0);
    }
    l.setFromTriplets(t.begin(), t.end());
    const Vec y = linalg::spmv(l, Vec::Ones(4).eval());
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 0.0);
    CHECK(y[3] == 1.0);
  }
  SUBCASE("random sparse against dense") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
      const auto a = random_sparse(20, 0.2, rng);
      Vec x(20);
      for (auto& v : x) v = std::uniform_real_distribution<double>(-1, 1)(rng);
      const Vec dense = Eigen::MatrixXd(a) * x;
      const Vec sparse = linalg::spmv(a, x);
      CHECK((dense - sparse).lpNorm<Eigen::Infinity>() <= 1e-14 * std::max(1.0, dense.lpNorm<Eigen::Infinity>()));
    }
  }
  SUBCASE("dimension mismatch") {
    const auto a = poisson2d(3);
    CHECK_THROWS_AS(linalg::spmv(a, Vec::Ones(4).eval()), std::invalid_argument);
  }
}

TEST_CASE("gmres on the identity converges in one iteration") {
  SparseMatrix<double> i(10, 10);
  i.setIdentity();
  const Vec b = Vec::LinSpaced(10, 1.0, 10.0);
  Vec x = Vec::Zero(10);
  const auto st = linalg::gmres(i, b, x, linalg::KrylovConfig{});
  CHECK(st.converged);
  CHECK(st.iterations == 1);
  CHECK((x - b).norm() <= 1e-14);
}

TEST_CASE("gmres matches a dense solve on 2D Poisson 16x16") {
  const auto a = poisson2d(16);
  const Vec b = Vec::Ones(256);
  const Vec exact = linalg::dense_solve(a, b);
  for (auto pre : {linalg::PreconditionerKind::None, linalg::PreconditionerKind::Jacobi,
                   linalg::PreconditionerKind::Ilut, linalg::PreconditionerKind::Lu}) {
    linalg::KrylovConfig cfg;
    cfg.rtol = 1e-12;
    cfg.preconditioner = pre;
    Vec x = Vec::Zero(256);
    const auto st = linalg::gmres(a, b, x, cfg);
    CHECK(st.converged);
    CHECK((x - exact).lpNorm<Eigen::Infinity>() <= 1e-8);
  }
}

TEST_CASE("gmres residuals never increase inside a restart cycle") {
  const auto a = poisson2d(12);
  std::mt19937_64 rng(3);
  Vec b(144);
  for (auto& v : b) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  linalg::KrylovConfig cfg;
  cfg.restart = 10;
  cfg.rtol = 1e-10;
  Vec x = Vec::Zero(144);
  const auto st = linalg::gmres(a, b, x, cfg);
  CHECK(st.converged);
  CHECK(st.cycle_residuals.size() > 1);
  for (const auto& cycle : st.cycle_residuals)
    for (std::size_t k = 1; k < cycle.size(); ++k) CHECK(cycle[k] <= cycle[k - 1] * (1 + 1e-12));
}

TEST_CASE("gmres reports failure for a singular incompatible system") {
  SparseMatrix<double> a(3, 3);
  a.insert(0, 0) = 1.0;
  a.insert(1, 1) = 1.0;
  a.makeCompressed();
  const Vec b = Vec::Ones(3);
  Vec x = Vec::Zero(3);
  linalg::KrylovConfig cfg;
  cfg.max_iters = 50;
  const auto st = linalg::gmres(a, b, x, cfg);
  CHECK_FALSE(st.converged);
}

TEST_CASE("gmres is deterministic") {
  const auto a = poisson2d(10);
  const Vec b = Vec::LinSpaced(100, -2.0, 3.0);
  Vec x1 = Vec::Zero(100), x2 = Vec::Zero(100);
  linalg::gmres(a, b, x1, linalg::KrylovConfig{});
  linalg::gmres(a, b, x2, linalg::KrylovConfig{});
  CHECK(std::memcmp(x1.data(), x2.data(), sizeof(double) * 100) == 0);
}

TEST_CASE("newton on a linear residual takes one step") {
  auto res = [](const Vec& x) { return x; };
  auto jac = [](const Vec& x) {
    SparseMatrix<double> j(x.size(), x.size());
    j.setIdentity();
    return j;
  };
  Vec x = Vec::Constant(5, 3.0);
  const auto st = linalg::newton<double>(res, jac, x, linalg::NewtonConfig{}, linalg::KrylovConfig{});
  CHECK(st.converged());
  CHECK(st.iterations == 1);
  CHECK(x.norm() <= 1e-14);
}

TEST_CASE("newton on x² - 4 from 3") {
  auto res = [](const Vec& x) { return Vec::Constant(1, x[0] * x[0] - 4.0); };
  auto jac = [](const Vec& x) {
    SparseMatrix<double> j(1, 1);
    j.insert(0, 0) = 2.0 * x[0];
    return j;
  };
  Vec x = Vec::Constant(1, 3.0);
  linalg::NewtonConfig cfg;
  cfg.abs_tol = 1e-13;
  const auto st = linalg::newton<double>(res, jac, x, cfg, linalg::KrylovConfig{});
  CHECK(st.converged());
  CHECK(st.iterations <= 8);
  CHECK(std::abs(x[0] - 2.0) <= 1e-12);
  // independent trace x <- x - (x² - 4) / 2x
  double y = 3.0;
  const auto& h = st.residual_history;
  for (std::size_t k = 0; k < h.size(); ++k) {
    CHECK(h[k] == doctest::Approx(std::abs(y * y - 4.0)).epsilon(1e-10));
    y -= (y * y - 4.0) / (2 * y);
  }
  // quadratic decay: e_{k+1} ≈ e_k² / 4
  for (std::size_t k = 1; k + 1 < h.size(); ++k)
    if (h[k] > 1e-6) CHECK(h[k + 1] <= h[k] * h[k]);
}

TEST_CASE("check_jacobian") {
  SparseMatrix<double> a = poisson2d(4);
  auto lin = [&a](const Vec& x) { return linalg::spmv(a, x); };
  // The central-difference floor is about ε|F|/h, so keep |F| near 0.1 here.
  const Vec x0 = Vec::LinSpaced(16, 0.01, 0.16);
  CHECK(linalg::check_jacobian(lin, a, x0, 1e-6) <= 1e-10);

  const Vec x = Vec::LinSpaced(16, 0.1, 1.6);

  auto nonlin = [](const Vec& x) { return x.array().square().matrix().eval(); };
  SparseMatrix<double> j(16, 16);
  for (int i = 0; i < 16; ++i) j.insert(i, i) = 2.0 * x[i];
  j.makeCompressed();
  CHECK(linalg::check_jacobian(nonlin, j, x, 1e-6) <= 1e-8);
  j.coeffRef(5, 5) *= 1.5;
  CHECK(linalg::check_jacobian(nonlin, j, x, 1e-6) > 1e-2);
}

TEST_CASE("config validation") {
  linalg::KrylovConfig k;
  k.restart = 0;
  CHECK_THROWS_AS(k.validate(), std::invalid_argument);
  linalg::NewtonConfig n;
  n.abs_tol = 0.0;
  CHECK_THROWS_AS(n.validate(), std::invalid_argument);
}
