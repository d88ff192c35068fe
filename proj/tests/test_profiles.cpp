#include <doctest.h>

#include "bubbletower/gamma.hpp"
#include "bubbletower/numerics.hpp"
#include "bubbletower/profiles.hpp"

#include <cmath>

using namespace bt;

namespace {

// Fourth-order central difference of the radial Laplacian -u'' - (n-1)u'/r.
double fd_laplacian(const std::function<double(double)>& u, int n, double r) {
  const double h = 1e-3 * std::max(r, 1e-2);
  const double d1 = (-u(r + 2 * h) + 8 * u(r + h) - 8 * u(r - h) + u(r - 2 * h)) / (12 * h);
  const double d2 = (-u(r + 2 * h) + 16 * u(r + h) - 30 * u(r) + 16 * u(r - h) - u(r - 2 * h)) / (12 * h * h);
  return -d2 - (n - 1) * d1 / r;
}

}  // namespace

TEST_SUITE("profiles") {

TEST_CASE("bubble values") {
  CHECK(bubble_value({1.0, 0.0, 7}, 0.0) == 1.0);
  CHECK(bubble_value({1.0, 0.0, 7}, std::sqrt(35.0)) == doctest::Approx(std::pow(2.0, -2.5)).epsilon(1e-15));
  CHECK(bubble_value({0.5, 0.0, 7}, 0.0) == doctest::Approx(std::pow(2.0, 2.5)).epsilon(1e-15));
  CHECK_THROWS_AS(validate(Bubble{0.0, 0.0, 7}), DomainError);
  CHECK_THROWS_AS(validate(Bubble{1.0, 0.0, 6}), DomainError);
}

TEST_CASE("kernel values") {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(7);
  CHECK(kernel_value(0, 7, x) == -1.0);
  CHECK(kernel_value(1, 7, x) == 0.0);
  x(2) = std::sqrt(35.0);
  CHECK(std::abs(kernel_value(0, 7, x)) < 1e-16);
  CHECK_THROWS_AS(kernel_value(8, 7, x), DomainError);
  CHECK_THROWS_AS(kernel_value(-1, 7, x), DomainError);
  CHECK(V0(7, 1.3) == doctest::Approx(kernel_value(0, 7, Eigen::VectorXd::Unit(7, 0) * 1.3)));
}

TEST_CASE("bubble residual vanishes to round-off") {
  auto res = [](int n, double mu, double r) {
    const RadialGrid g = RadialGrid::from_nodes(n, {r, 0.5 * (r + 1.0), 1.0});
    return bubble_pde_residual({mu, 0.0, n}, g)[0];
  };
  CHECK(std::abs(bubble_laplacian({1.0, 0.0, 7}, 0.0) - 1.0) < 1e-12);
  CHECK(std::abs(res(7, 1.0, 1e-9)) < 1e-12);
  CHECK(std::abs(bubble_pde_residual({1.0, 0.0, 7}, RadialGrid::from_nodes(7, {0.2, 0.6, 1.0}))[2]) < 1e-12);
  CHECK(std::abs(res(8, 0.1, 0.05)) < 1e-10);
}

TEST_CASE("analytic Laplacians agree with a finite-difference oracle") {
  for (int n : {7, 8, 10}) {
    for (double r : {0.3, 1.0, 2.5, 7.0}) {
      const double a = U0_laplacian(n, r);
      const double b = fd_laplacian([n](double s) { return U0(n, s); }, n, r);
      CHECK(std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(a)));
      const double c = V0_laplacian(n, r);
      const double d = fd_laplacian([n](double s) { return V0(n, s); }, n, r);
      CHECK(std::abs(c - d) <= 1e-6 * std::max(1.0, std::abs(c)));
      // V0 lies in the kernel of the linearization.
      CHECK(std::abs(c - crit_power(n) * std::pow(U0(n, r), crit_power(n) - 1) * V0(n, r)) < 1e-12);
    }
  }
}

TEST_CASE("V0 is the normalized dilation derivative of the bubble") {
  const int n = 7;
  const double h = 1e-5;
  for (double r : {0.0, 0.5, 3.0, 9.0}) {
    auto b = [&](double mu) { return bubble_value({mu, 0.0, n}, r); };
    const double dmu = (b(1 + h) - b(1 - h)) / (2 * h);
    CHECK(2.0 / (n - 2) * dmu == doctest::Approx(V0(n, r)).epsilon(1e-8));
  }
}

TEST_CASE("under-resolved grid is flagged but still evaluated") {
  bool flag = false;
  const RadialGrid g = RadialGrid::log_uniform(7, 1e-2, 4);
  const RadialField res = bubble_pde_residual({1e-2, 0.0, 7}, g, &flag);
  CHECK(flag);
  CHECK(res.sup_abs() < 1e-3 * std::pow(1e-2, -4.5));
  bubble_pde_residual({1.0, 0.0, 7}, g, &flag);
  CHECK_FALSE(flag);
}

TEST_CASE("projected bubble on the ball") {
  const Bubble b{0.1, 0.0, 7};
  const RadialGrid g = RadialGrid::graded(7, 1e-3, 0.3, 12, 40);
  const RadialField P = projected_bubble_ball(b, g);
  CHECK(P.values.back() == 0.0);
  CHECK(projected_bubble_value(b, 0.0) == doctest::Approx(std::pow(0.1, -2.5) - bubble_value(b, 1.0)));
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(P[i] <= bubble_value(b, g.r[i]));
  CHECK_THROWS_AS(projected_bubble_ball({0.1, 0.2, 7}, g), DomainError);
}

TEST_CASE("single-bubble tower is minus the projected bubble") {
  TowerConfig c = TowerConfig::make(7, 1, 1e-2, {1.0});
  const RadialGrid g = RadialGrid::graded(7, 1e-3, 0.3, 12, 40);
  const RadialField W = tower_ansatz(c, g);
  const Bubble b{c.mu(1), 0.0, 7};
  for (std::size_t i = 0; i + 1 < g.size(); ++i) CHECK(W[i] == doctest::Approx(-projected_bubble_value(b, g.r[i])));
}

TEST_CASE("two-bubble tower: center value, sign and one sign change") {
  TowerConfig c = TowerConfig::make(7, 2, 1e-2, {1.0, 1.0});
  const double m1 = c.mu(1), m2 = c.mu(2);
  const double expect = std::pow(m2, -2.5) - bubble_value({m2, 0.0, 7}, 1.0) -
                        (bubble_value({m1, 0.0, 7}, 0.0) - bubble_value({m1, 0.0, 7}, 1.0));
  CHECK(tower_value(c, 0.0) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(tower_value(c, 0.0) > 0);
  const RadialGrid g = RadialGrid::log_uniform(7, 0.1 * m2, 40);
  const RadialField W = tower_ansatz(c, g);
  CHECK(W[0] > 0);
  int changes = 0;
  for (std::size_t i = 1; i + 1 < g.size(); ++i)
    if ((W[i] > 0) != (W[i - 1] > 0)) ++changes;
  CHECK(changes == 1);
}

TEST_CASE("tower ansatz refuses a mesh that misses mu_k") {
  TowerConfig c = TowerConfig::make(7, 2, 1e-2, {1.0, 1.0});
  CHECK_THROWS_AS(tower_ansatz(c, RadialGrid::log_uniform(7, 1e-3, 10)), DomainError);
}

TEST_CASE("tower configuration validation") {
  TowerConfig c = TowerConfig::make(7, 2, 1e-2, {1.0, 1.0});
  CHECK_NOTHROW(c.validate());
  TowerConfig bad = c;
  bad.t = {1.0, 20.0};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = c;
  bad.xi(0) = 0.95;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = c;
  bad.z[0](1) = 1.5;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = c;
  bad.signs = {1, 0};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = c;
  bad.eps = 0.9;
  bad.t = {0.1, 10.0};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  CHECK_THROWS_AS(TowerConfig::make(6, 1, 1e-2, {1.0}).validate(), DomainError);
}

TEST_CASE("annuli") {
  TowerConfig c = TowerConfig::make(7, 2, 1e-2, {1.0, 1.0});
  AnnulusSet A = annuli(c);
  REQUIRE(A.radii.size() == 3);
  CHECK(A.radii[0] == 1.0);
  CHECK(A.radii[1] == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(A.radii[2] == 0.0);
  CHECK(A.shell(0.5) == 1);
  CHECK(A.shell(1e-4) == 1);
  CHECK(A.shell(0.999e-4) == 2);
  CHECK(A.theta(2, 0.0) == doctest::Approx(c.mu(2)));

  const AnnulusSet A1 = annuli(TowerConfig::make(7, 1, 1e-2, {1.0}));
  CHECK(A1.radii == std::vector<double>{1.0, 0.0});

  TowerConfig wide = TowerConfig::make(7, 2, 0.5, {10.0, 10.0});
  CHECK_THROWS_AS(annuli(wide), DomainError);
}

TEST_CASE("bubble ratios on the inner ball are bounded uniformly in eps") {
  std::vector<double> sup;
  for (double eps : {1e-2, 3e-3, 1e-3}) {
    TowerConfig c = TowerConfig::make(7, 2, eps, {1.0, 1.0});
    const AnnulusSet A = annuli(c);
    double s = 0.0;
    for (int i = 0; i <= 200; ++i) {
      const double r = A.radii[1] * std::pow(10.0, -4.0 * i / 200.0);
      s = std::max(s, bubble_value({c.mu(1), 0.0, 7}, r) / bubble_value({c.mu(2), 0.0, 7}, r));
    }
    sup.push_back(s);
  }
  const auto [lo, hi] = std::minmax_element(sup.begin(), sup.end());
  CHECK(*hi < 1.0);
  CHECK(*hi / *lo < 1.5);
}

TEST_CASE("weight psi: closed forms") {
  TowerConfig c1 = TowerConfig::make(7, 1, 1e-2, {1.0});
  const double m = c1.mu(1);
  CHECK(weight_psi(c1, 0.0) == doctest::Approx(std::pow(m, 2.5)).epsilon(1e-13));

  TowerConfig c2 = TowerConfig::make(7, 2, 1e-2, {1.0, 1.0});
  const double m1 = c2.mu(1), m2 = c2.mu(2);
  for (double r : {m1, 0.4, 0.7}) {
    REQUIRE(m2 + r > m1);
    CHECK(weight_psi(c2, r) == doctest::Approx(std::pow(m1, 4.5) / ((m1 + r) * (m1 + r))).epsilon(1e-13));
  }
}

TEST_CASE("weight psi is positive and nearly continuous across the shell boundary") {
  for (double eps : {1e-2, 1e-3}) {
    TowerConfig c = TowerConfig::make(7, 2, eps, {1.0, 1.0});
    const double rho = annuli(c).radii[1];
    const double in = weight_psi(c, rho * (1 - 1e-12)), out = weight_psi(c, rho);
    CHECK(in > 0);
    CHECK(out > 0);
    CHECK(std::max(in / out, out / in) <= 10.0);
    for (double r = 1e-12; r < 1.0; r *= 1.7) CHECK(weight_psi(c, r) > 0);
  }
}

TEST_CASE("weight psi is dominated by the sum of projected bubbles") {
  TowerConfig c = TowerConfig::make(7, 2, 1e-2, {1.0, 1.0});
  double worst = 0.0;
  for (double r = 1e-12; r < 0.9; r *= 1.3) {
    double s = 0.0;
    for (int l = 1; l <= 2; ++l) s += projected_bubble_value({c.mu(l), 0.0, 7}, r);
    worst = std::max(worst, weight_psi(c, r) / s);
  }
  CHECK(worst < 1.0);
}

TEST_CASE("log-scaled psi does not underflow for tiny scales") {
  TowerConfig c = TowerConfig::make(7, 2, 1e-3, {1.0, 1.0});
  REQUIRE(c.mu(2) < 1e-10);
  CHECK(std::isfinite(log_weight_psi(c, 1e-14)));
  CHECK(weight_psi(c, 1e-14) > 0);
}

TEST_CASE("mu schedule: eps mu_{l+1}^2 against (mu_{l+1}/mu_l)^{(n-2)/2} is constant in eps") {
  for (int n : {7, 8, 9}) {
    std::vector<double> q;
    for (double eps : {1e-1, 1e-2, 1e-3}) {
      TowerConfig c = TowerConfig::make(n, 2, eps, {1.0, 1.0});
      c.A = 1e3;
      const double m1 = c.mu(1), m2 = c.mu(2);
      q.push_back(eps * m2 * m2 / std::pow(m2 / m1, 0.5 * (n - 2)));
    }
    CHECK(q[1] == doctest::Approx(q[0]).epsilon(1e-12));
    CHECK(q[2] == doctest::Approx(q[0]).epsilon(1e-12));
  }
}

}
