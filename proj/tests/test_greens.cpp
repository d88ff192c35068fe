#include <doctest.h>

#include "bubbletower/greens.hpp"

#include <cmath>
#include <random>

using namespace bt;

namespace {

Eigen::VectorXd point(int n, double r, int axis = 0) { return Eigen::VectorXd::Unit(n, axis) * r; }

Eigen::VectorXd random_point(std::mt19937_64& rng, int n, double rmax) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = nd(rng);
  return x.normalized() * rmax * std::pow(ud(rng), 1.0 / n);
}

}  // namespace

TEST_SUITE("greens") {

TEST_CASE("ball Green function special values") {
  const int n = 7;
  const double c = 1.0 / ((n - 2) * sphere_area(n));
  CHECK(std::abs(ball_green(point(n, 0.0), point(n, 1.0 - 1e-15), n)) < 1e-12);
  CHECK(ball_green(point(n, 0.0), point(n, 0.5), n) == doctest::Approx(c * 31.0).epsilon(1e-14));
  CHECK_THROWS_AS(ball_green(point(n, 0.3), point(n, 0.3), n), DomainError);
  CHECK_THROWS_AS(ball_green(point(n, 0.3), point(n, 1.2), n), DomainError);
}

TEST_CASE("ball Green function is radially harmonic away from the pole") {
  const int n = 7;
  auto g = [&](double r) { return ball_green(point(n, 0.0), point(n, r), n); };
  auto worst_defect = [&](double h) {
    double worst = 0.0;
    for (double r = 0.3; r < 0.95; r += 0.05) {
      const double d2 = (g(r + h) - 2 * g(r) + g(r - h)) / (h * h);
      const double d1 = (g(r + h) - g(r - h)) / (2 * h);
      worst = std::max(worst, std::abs(d2 + (n - 1) * d1 / r) / std::abs(d2));
    }
    return worst;
  };
  const double e1 = worst_defect(1e-2), e2 = worst_defect(5e-3);
  CHECK(e1 < 1e-2);
  CHECK(e1 / e2 > 3.5);
}

TEST_CASE("ball Green function is symmetric") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd x = random_point(rng, 7, 0.95), y = random_point(rng, 7, 0.95);
    const double a = ball_green(x, y, 7), b = ball_green(y, x, 7);
    CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));
  }
}

TEST_CASE("Robin function on the ball") {
  const int n = 7;
  const double c = 1.0 / ((n - 2) * sphere_area(n));
  const DomainSpec ball = DomainSpec::unit_ball(n);
  RobinResult R = robin_diag(ball, point(n, 0.0));
  CHECK(R.value == c);
  CHECK(R.gradient.norm() == 0.0);
  R = robin_diag(ball, point(n, std::sqrt(0.5)));
  CHECK(R.value == doctest::Approx(32.0 * c).epsilon(1e-13));
  CHECK((R.hessian - R.hessian.transpose()).norm() == 0.0);
  CHECK(ball_regular_part(point(n, 0.2), point(n, 0.2), n) == doctest::Approx(robin_diag(ball, point(n, 0.2)).value));
}

TEST_CASE("Robin function increases towards the boundary") {
  const DomainSpec ball = DomainSpec::unit_ball(7);
  std::mt19937_64 rng(3);
  for (int ray = 0; ray < 5; ++ray) {
    const Eigen::VectorXd dir = random_point(rng, 7, 1.0).normalized();
    double prev = 0.0;
    for (double s = 0.8; s < 0.999; s += 0.01) {
      const double v = robin_diag(ball, s * dir).value;
      CHECK(v > prev);
      prev = v;
    }
  }
}

TEST_CASE("analytic Hessian matches differences of the Robin value") {
  const DomainSpec ball = DomainSpec::unit_ball(7);
  const Eigen::VectorXd xi = (Eigen::VectorXd(7) << 0.2, -0.1, 0.05, 0.0, 0.1, 0.0, -0.15).finished();
  const RobinResult R = robin_diag(ball, xi);
  const double h = 1e-4;
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 7; ++j) {
      auto v = [&](double a, double b) {
        Eigen::VectorXd x = xi;
        x(i) += a;
        x(j) += b;
        return robin_diag(ball, x).value;
      };
      const double fd = (v(h, h) - v(h, -h) - v(-h, h) + v(-h, -h)) / (4 * h * h);
      CHECK(std::abs(fd - R.hessian(i, j)) <= 1e-5 * R.hessian.cwiseAbs().maxCoeff());
    }
  }
}

TEST_CASE("critical point of the Robin function on the ball") {
  const DomainSpec ball = DomainSpec::unit_ball(7);
  RobinCriticalPoint cp = find_robin_critical_point(ball, point(7, 0.3));
  CHECK(cp.xi.norm() < 1e-10);
  CHECK(cp.nondegenerate);
  cp = find_robin_critical_point(ball, point(7, 0.0));
  CHECK(cp.iterations == 0);
  CHECK_THROWS_AS(find_robin_critical_point(ball, point(7, 0.99)), DomainError);
}

TEST_CASE("collocation on the ball reproduces the analytic Robin value") {
  const int n = 7;
  const DomainSpec shaped = DomainSpec::star_shaped(n, [](const Eigen::VectorXd&) { return 1.0; });
  const CollocationGreen G(shaped);
  const RobinResult R = G.robin(point(n, 0.0));
  const double exact = 1.0 / ((n - 2) * sphere_area(n));
  CHECK(std::abs(R.value - exact) <= 1e-6 * exact);
  CHECK(R.gradient.norm() < 1e-6 * exact);

  SUBCASE("Green function vanishes on boundary samples to the reported accuracy") {
    const Eigen::VectorXd y = point(n, 0.2, 1);
    const double acc = G.boundary_accuracy(y);
    std::mt19937_64 rng(5);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const Eigen::VectorXd b = random_point(rng, n, 1.0).normalized();
      worst = std::max(worst, std::abs(G.green(b, y)));
    }
    CHECK(worst <= acc);
  }

  SUBCASE("off-center value") {
    const Eigen::VectorXd xi = point(n, 0.1, 2);
    const double a = robin_diag(DomainSpec::unit_ball(n), xi).value;
    CHECK(std::abs(G.robin(xi).value - a) <= 1e-5 * a);
  }
}

TEST_CASE("critical point moves by O(perturbation) on a perturbed ball") {
  const int n = 7;
  const double delta = 0.03;
  const DomainSpec shaped =
      DomainSpec::star_shaped(n, [delta](const Eigen::VectorXd& u) { return 1.0 + delta * u(0) * u(0); });
  const CollocationGreen G(shaped);
  const RobinCriticalPoint cp = find_robin_critical_point(shaped, point(n, 0.05, 3), {}, &G);
  CHECK(cp.xi.norm() < 3 * delta);
  CHECK(cp.nondegenerate);
}

TEST_CASE("robin_diag rejects boundary points") {
  CHECK_THROWS_AS(robin_diag(DomainSpec::unit_ball(7), point(7, 1.0)), DomainError);
}

}
