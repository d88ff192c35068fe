#include <doctest.h>

#include "bubbletower/linear_theory.hpp"
#include "bubbletower/numerics.hpp"
#include "bubbletower/profiles.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

using namespace bt;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double D3_beta_oracle(int n) {
  // int_0^inf r^{n-1} (1+r^2)^{-(n+2)/2} dr = 1/n after r -> r/sqrt(n(n-2)).
  return std::pow(n * (n - 2.0), 0.5 * n) * sphere_area(n) / n;
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("sphere area matches low-dimensional values") {
  CHECK(sphere_area(2) == doctest::Approx(2 * std::numbers::pi).epsilon(1e-15));
  CHECK(sphere_area(3) == doctest::Approx(4 * std::numbers::pi).epsilon(1e-15));
  // omega_6 = pi^3 (area of S^6 is 16 pi^3 / 15)
  CHECK(sphere_area(7) == doctest::Approx(16 * std::pow(std::numbers::pi, 3) / 15).epsilon(1e-14));
  CHECK_THROWS_AS(sphere_area(0), DomainError);
}

TEST_CASE("radial_integral of U0^p reproduces the Beta-integral constant") {
  for (int n : {7, 8, 9}) {
    QuadOptions opt;
    opt.rel_tol = 1e-12;
    opt.lo_scale = 1e-3;
    const double v = radial_integral([n](double r) { return std::pow(U0(n, r), crit_power(n)); }, n, kInf, opt).value;
    CHECK(std::abs(v / D3_beta_oracle(n) - 1.0) < 1e-8);
  }
}

TEST_CASE("radial_integral of zero is zero") {
  CHECK(radial_integral([](double) { return 0.0; }, 7, kInf).value == 0.0);
  CHECK(radial_integral([](double) { return 0.0; }, 7, 1.0).value == 0.0);
}

TEST_CASE("radial_integral of the indicator gives the ball volume") {
  const double v = radial_integral([](double) { return 1.0; }, 7, 1.0).value;
  CHECK(v == doctest::Approx(sphere_area(7) / 7).epsilon(1e-12));
}

TEST_CASE("gradient norm of V0 agrees between two panel densities") {
  auto f = [](double r) { return V0_dr(7, r) * V0_dr(7, r); };
  QuadOptions a, b;
  a.rel_tol = b.rel_tol = 1e-12;
  a.per_decade = 4;
  b.per_decade = 9;
  const double va = radial_integral(f, 7, kInf, a).value, vb = radial_integral(f, 7, kInf, b).value;
  CHECK(std::abs(va / vb - 1.0) < 1e-9);
}

TEST_CASE("divergent tail is reported") {
  CHECK_THROWS_AS(radial_integral([](double r) { return std::pow(r, -6.5); }, 7, kInf), NumericalError);
}

TEST_CASE("newtonian potential of the unit-ball indicator at the origin") {
  auto g = [](double r) { return r <= 1.0 ? 1.0 : 0.0; };
  CHECK(newtonian_potential_at(g, 7, 1.0, 0.0) == doctest::Approx(sphere_area(7) / 2).epsilon(1e-10));
  // Outside the support the potential is |B| r^{2-n}.
  CHECK(newtonian_potential_at(g, 7, 1.0, 2.0) == doctest::Approx(sphere_area(7) / 7 * std::pow(2.0, -5)).epsilon(1e-10));
}

TEST_CASE("potential of a positive radial density decays monotonically") {
  auto g = [](double r) { return std::pow(U0(7, r), crit_power(7)); };
  const double R = 200.0;
  double prev = newtonian_potential_at(g, 7, R, 0.0);
  CHECK(std::isfinite(prev));
  for (double r = 0.25; r < 50.0; r *= 1.5) {
    const double v = newtonian_potential_at(g, 7, R, r);
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("radial_laplacian is exact on constants and r^2") {
  const RadialGrid g = RadialGrid::graded(7, 1e-4, 0.1, 10, 30);
  const RadialField one = RadialField::sample(g, [](double) { return 1.0; });
  for (double v : radial_laplacian(one).values) CHECK(std::abs(v) < 1e-9);
  const RadialField sq = RadialField::sample(g, [](double r) { return r * r; });
  for (double v : radial_laplacian(sq).values) CHECK(std::abs(v / -14.0 - 1.0) < 1e-10);
}

TEST_CASE("radial_laplacian of U0 converges at second order") {
  const RadialGrid g1 = RadialGrid::log_uniform(7, 1e-3, 24);
  const RadialGrid g2 = g1.refined(2.0);
  auto err = [](const RadialGrid& g) {
    const RadialField L = radial_laplacian(RadialField::sample(g, [](double r) { return U0(7, r); }));
    double e = 0.0;
    for (std::size_t i = 0; i + 1 < g.size(); ++i) e = std::max(e, std::abs(L[i] - std::pow(U0(7, g.r[i]), crit_power(7))));
    return e;
  };
  CHECK(err(g1) / err(g2) >= 3.5);
}

TEST_CASE("radial_laplacian needs three nodes") {
  CHECK_THROWS_AS(RadialGrid::from_nodes(7, {0.5, 1.0}), DomainError);
}

TEST_CASE("discrete Laplacian of the mesh potential returns (n-2) omega g") {
  auto run = [](int ppd) {
    const RadialGrid g = RadialGrid::graded(7, 1e-3, 0.05, ppd, 10 * ppd);
    const RadialField src = RadialField::sample(g, [](double r) { return std::exp(-20.0 * r * r); });
    // The mesh potential only sees the ball, so test away from r = 1.
    const RadialField pot = newtonian_potential(src);
    const RadialField L = radial_laplacian(pot);
    double e = 0.0;
    for (std::size_t i = 1; i + 1 < g.size(); ++i)
      if (g.r[i] > 0.05 && g.r[i] < 0.6) e = std::max(e, std::abs(L[i] - 5.0 * sphere_area(7) * src[i]));
    return e;
  };
  const double e1 = run(10), e2 = run(20);
  CHECK(e2 < e1);
  CHECK(e2 < 0.05 * 5.0 * sphere_area(7));
}

TEST_CASE("bordered_solve hand cases") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(3, 3);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(1, 3);
  B(0, 0) = 1.0;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(3);
  rhs(0) = 1.0;
  BorderedSolution s = bordered_solve(A, B, rhs);
  CHECK(s.x.norm() < 1e-15);
  CHECK(s.lambda(0) == doctest::Approx(1.0));

  Eigen::MatrixXd B0(0, 3);
  rhs << 1, 2, 3;
  s = bordered_solve(A, B0, rhs);
  CHECK(s.lambda.size() == 0);
  CHECK((s.x - rhs).norm() < 1e-15);
}

TEST_CASE("bordered_solve on random SPD with orthonormal constraints") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd M(20, 20);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) M(i, j) = nd(rng);
  const Eigen::MatrixXd A = M * M.transpose() + 20.0 * Eigen::MatrixXd::Identity(20, 20);
  Eigen::MatrixXd Q(20, 3);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 3; ++j) Q(i, j) = nd(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Q);
  const Eigen::MatrixXd B = Eigen::MatrixXd(qr.householderQ()).leftCols(3).transpose();
  Eigen::VectorXd rhs(20);
  for (int i = 0; i < 20; ++i) rhs(i) = nd(rng);
  const BorderedSolution s = bordered_solve(A, B, rhs);
  CHECK((A * s.x + B.transpose() * s.lambda - rhs).norm() <= 1e-10);
  CHECK((B * s.x).norm() <= 1e-10);

  SUBCASE("multipliers scale reciprocally with the constraint rows") {
    const double alpha = 37.0;
    const BorderedSolution t = bordered_solve(A, alpha * B, rhs);
    CHECK((t.lambda - s.lambda / alpha).norm() <= 1e-12 * s.lambda.norm());
    CHECK((t.x - s.x).norm() <= 1e-12 * s.x.norm());
  }
}

TEST_CASE("bordered_solve reports a degenerate constraint") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(4, 4);
  Eigen::MatrixXd B(2, 4);
  B << 1, 0, 0, 0, 2, 0, 0, 0;
  Eigen::VectorXd rhs = Eigen::VectorXd::Ones(4);
  try {
    bordered_solve(A, B, rhs);
    FAIL("expected a NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("degenerate") != std::string::npos);
  }
}

TEST_CASE("loglog_slope of a power law") {
  std::vector<double> x{1, 2, 4, 8}, y;
  for (double v : x) y.push_back(3.0 * std::pow(v, 2.5));
  CHECK(loglog_slope(x, y) == doctest::Approx(2.5).epsilon(1e-13));
}

}
