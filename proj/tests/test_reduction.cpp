#include <doctest.h>

#include "bubbletower/gamma.hpp"
#include "bubbletower/greens.hpp"
#include "bubbletower/reduction.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>
#include <cmath>

using namespace bt;

namespace {

using Big = boost::multiprecision::cpp_bin_float_100;

double spread(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi / *lo;
}

const FitReport& n7_fit() {
  static const FitReport fit = fit_constants(7);
  return fit;
}

double H00(int n) { return 1.0 / ((n - 2) * sphere_area(n)); }

std::vector<double> n7_t0(int k) { return explicit_t0(7, n7_fit().coeffs, H00(7), k); }

TowerConfig tower(int k, double eps, std::vector<double> t) {
  TowerConfig cfg = TowerConfig::make(7, k, eps, t);
  double A = 1.0;
  for (double x : t) A = std::max({A, x, 1.0 / x});
  cfg.A = 10.0 * A;
  return cfg;
}

std::vector<double> scaled(std::vector<double> t, double f) {
  for (double& x : t) x *= f;
  return t;
}

struct PicardNu {
  PicardReport picard;
  NuExtraction nu;
};

PicardNu picard_nu(const TowerConfig& cfg, const RadialGrid& g) {
  PicardNu out{picard_solve(cfg, g), {}};
  out.nu = extract_nu(cfg, out.picard.phi, n7_fit().coeffs, H00(7));
  return out;
}

}  // namespace

TEST_SUITE("reduction") {

TEST_CASE("k = 1 residual equals f(U) - f(PU) - eps PU") {
  const int n = 7;
  const TowerConfig cfg = TowerConfig::make(n, 1, 1e-3, {1.0});
  const Bubble b{cfg.mu(1), 0.0, n};
  const Big p = Big(n + 2) / Big(n - 2);
  const Big c = bubble_value(b, 1.0);
  for (double r : {1e-4, 1e-2, 0.05, 0.1, 0.3, 0.7, 0.99}) {
    const Big U = bubble_value(b, r);
    const Big PU = U - c;
    // kappa_1 = -1: W = -PU.
    const Big expect = -(pow(U, p) - pow(PU, p) - Big(cfg.eps) * PU);
    const double R = residual_R_at(cfg, r);
    CHECK(std::abs(R - static_cast<double>(expect)) <= 1e-12 * std::abs(static_cast<double>(expect)));
  }
  CHECK(residual_R_at(cfg, 1.0) == 0.0);
}

TEST_CASE("k = 2 residual keeps the interaction near the inner core") {
  const int n = 7;
  const TowerConfig cfg = tower(2, 1e-3, n7_t0(2));
  const double mu2 = cfg.mu(2), p = crit_power(n);
  const Bubble b1{cfg.mu(1), 0.0, n}, b2{mu2, 0.0, n};
  for (double x : {0.0, 1.0, 3.0}) {
    const double r = x * mu2;
    const Big U1 = bubble_value(b1, r), U2 = bubble_value(b2, r);
    const Big P1 = U1 - Big(bubble_value(b1, 1.0)), P2 = U2 - Big(bubble_value(b2, 1.0));
    const Big W = P2 - P1;
    const Big expect = pow(U2, p) - pow(U1, p) - Big(cfg.eps) * W - pow(W, p);
    CHECK(std::abs(residual_R_at(cfg, r) - static_cast<double>(expect)) <= 1e-9 * std::abs(static_cast<double>(expect)));
  }
}

TEST_CASE("residual outer branch and inner shell scans are stable over a decade of eps") {
  const int n = 7;
  std::vector<double> outer, inner;
  for (double eps : {1e-2, 3e-3, 1e-3}) {
    const TowerConfig c1 = tower(1, eps, n7_t0(1));
    const double mu = c1.mu(1);
    const RadialGrid g1 = tower_grid(c1);
    const RadialField R1 = residual_R(c1, g1);
    double s = 0.0;
    for (std::size_t i = 0; i < g1.size(); ++i) {
      const double r = g1.r[i], th = mu + r;
      if (r >= 2.0 * std::sqrt(mu)) s = std::max(s, std::abs(R1[i]) * std::pow(th, 4) / std::pow(mu, 0.5 * (n + 2)));
    }
    outer.push_back(s);

    const TowerConfig c2 = tower(2, eps, n7_t0(2));
    const RadialGrid g2 = tower_grid(c2);
    const RadialField R2 = residual_R(c2, g2);
    const Bubble b1{c2.mu(1), 0.0, n}, b2{c2.mu(2), 0.0, n};
    const double edge = std::sqrt(c2.mu(1) * c2.mu(2));
    double C = 0.0;
    for (std::size_t i = 0; i < g2.size(); ++i) {
      const double r = g2.r[i];
      if (r >= edge) break;
      const double bound = std::pow(bubble_value(b2, r), crit_exponent(n) - 2.0) * bubble_value(b1, r);
      C = std::max(C, std::abs(R2[i]) / bound);
    }
    inner.push_back(C);
  }
  CHECK(spread(outer) <= 3.0);
  CHECK(spread(inner) <= 3.0);
}

TEST_CASE("remainder N: series branch matches a 100-digit oracle and is continuous") {
  const int n = 7;
  const Big p = Big(n + 2) / Big(n - 2);
  for (double W : {2.0, -3.5}) {
    for (double x : {1e-6, 1e-3, 4.9e-2, 5.1e-2, -5e-4, -0.2}) {
      const double phi = x * W;
      const Big w = W, f = phi;
      auto fb = [&](const Big& u) { return u < 0 ? -pow(-u, p) : pow(u, p); };
      const Big expect = fb(w + f) - fb(w) - p * pow(abs(w), p - 1) * f;
      CHECK(std::abs(nonlinear_N_at(n, W, phi) - static_cast<double>(expect)) <=
            1e-10 * std::abs(static_cast<double>(expect)));
    }
  }
  CHECK(nonlinear_N_at(n, 0.0, 2.0) == doctest::Approx(f_nl(n, 2.0)));
  CHECK(nonlinear_N_at(n, 1.0, 0.0) == 0.0);
  CHECK_THROWS_AS(nonlinear_N(n, {1.0, 2.0}, {0.0}), DomainError);
}

TEST_CASE("Picard on an empty tower stops at iteration 0") {
  TowerConfig cfg;
  cfg.k = 0;
  const RadialGrid g = RadialGrid::log_uniform(7, 1e-3, 8);
  const PicardReport rep = picard_solve(cfg, g);
  CHECK(rep.converged);
  CHECK(rep.iterations == 0);
  CHECK(rep.phi.sup_abs() == 0.0);
}

TEST_CASE("Picard refuses eps above the threshold") {
  const TowerConfig cfg = TowerConfig::make(7, 1, 0.1, {1.0});
  CHECK_THROWS_AS(picard_solve(cfg, tower_grid(cfg)), DomainError);
}

TEST_CASE("Picard for k = 1 contracts faster as eps decreases") {
  std::vector<double> worst, per_mu4;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const TowerConfig cfg = tower(1, eps, n7_t0(1));
    const PicardReport rep = picard_solve(cfg, tower_grid(cfg));
    CHECK(rep.converged);
    CHECK(rep.iterations <= 20);
    CHECK(rep.reapplication_defect <= 2e-10);
    CHECK(rep.orthogonality[0] <= 1e-9);
    REQUIRE(!rep.contraction_estimates.empty());
    const double c = *std::max_element(rep.contraction_estimates.begin(), rep.contraction_estimates.end());
    worst.push_back(c);
    per_mu4.push_back(c / std::pow(cfg.mu(1), 4));
  }
  CHECK(worst[0] < 0.5);
  CHECK(worst[1] < worst[0]);
  CHECK(worst[2] < worst[1]);
  // Contraction tracks mu_1^4 with a steady constant.
  CHECK(spread(per_mu4) <= 3.0);
}

TEST_CASE("Picard for k = 2 keeps the weighted norm bounded") {
  std::vector<double> wn;
  for (double eps : {3e-3, 1e-3}) {
    const TowerConfig cfg = tower(2, eps, n7_t0(2));
    const PicardReport rep = picard_solve(cfg, tower_grid(cfg));
    CHECK(rep.converged);
    for (double o : rep.orthogonality) CHECK(o <= 1e-9);
    wn.push_back(rep.final_weighted_norm);
  }
  CHECK(spread(wn) <= 3.0);
}

TEST_CASE("nu vanishes when the residual is added back as forcing") {
  const TowerConfig cfg = tower(1, 1e-3, scaled(n7_t0(1), 2.0));
  const RadialGrid g = tower_grid(cfg);
  const RadialField zero(g, std::vector<double>(g.size(), 0.0));
  const NuExtraction plain = extract_nu(cfg, zero, n7_fit().coeffs, H00(7));
  NuForcing forcing;
  forcing.continuous = [&](double r) { return residual_R_at(cfg, r); };
  const NuExtraction forced = extract_nu(cfg, zero, n7_fit().coeffs, H00(7), &forcing);
  CHECK(std::abs(plain.nu[0]) > 0.0);
  CHECK(std::abs(forced.nu[0]) <= 1e-9 * std::abs(plain.nu[0]));
}

TEST_CASE("nu is invariant under 1.5x refinement") {
  // nu converges at second order in points per decade; 12 per decade moves it by 1.7e-6.
  for (int k : {1, 2}) {
    const TowerConfig cfg = tower(k, 1e-3, scaled(n7_t0(k), 2.0));
    const RadialGrid g = tower_grid(cfg, 24);
    const auto a = picard_nu(cfg, g), b = picard_nu(cfg, g.refined(1.5));
    for (int l = 0; l < k; ++l) CHECK(std::abs(a.nu.nu[l] - b.nu.nu[l]) <= 1e-6 * std::abs(a.nu.nu[l]));
  }
}

TEST_CASE("nu approaches the leading term for k = 1 and for the second bubble") {
  for (int k : {1, 2}) {
    std::vector<double> err;
    for (double eps : {1e-2, 2.5e-3, 6.25e-4}) {
      const TowerConfig cfg = tower(k, eps, scaled(n7_t0(k), 2.0));
      err.push_back(std::abs(picard_nu(cfg, tower_grid(cfg)).nu.ratios[static_cast<std::size_t>(k - 1)] - 1.0));
    }
    CHECK(err[1] < err[0]);
    CHECK(err[2] < err[1]);
    CHECK(err[2] <= (k == 1 ? 0.2 : 0.3));
  }
}

TEST_CASE("nu changes sign as t crosses its zero, with the analytic slope sign") {
  const double eps = 1e-3;
  const auto t0 = n7_t0(2);
  for (int l : {1, 2}) {
    const int k = l;
    std::vector<double> num, an;
    for (double f : {0.8, 1.25}) {
      std::vector<double> t(t0.begin(), t0.begin() + k);
      if (k == 1) t = n7_t0(1);
      t[static_cast<std::size_t>(l - 1)] *= f;
      const TowerConfig cfg = tower(k, eps, t);
      const auto r = picard_nu(cfg, tower_grid(cfg));
      num.push_back(r.nu.nu[static_cast<std::size_t>(l - 1)]);
      an.push_back(r.nu.nu_analytic[static_cast<std::size_t>(l - 1)]);
    }
    CHECK(num[0] * num[1] < 0.0);
    CHECK((num[1] - num[0]) * (an[1] - an[0]) > 0.0);
  }
}

TEST_CASE("analytic nu: exact eps scaling and structural zeros") {
  const int n = 7;
  const auto& c = n7_fit().coeffs;
  const RobinResult robin = robin_diag(DomainSpec::unit_ball(n), Eigen::VectorXd::Zero(n));
  TowerConfig cfg = tower(2, 1e-3, {1.3, 0.7});
  const auto a = analytic_nu(cfg, c, robin);
  cfg.eps = 2e-3;
  const auto b = analytic_nu(cfg, c, robin);
  for (int l = 1; l <= 2; ++l) {
    const double e = analytic_nu_exponent(n, l, 0);
    CHECK(b[l - 1][0] / a[l - 1][0] == doctest::Approx(std::pow(2.0, e)).epsilon(1e-14));
    for (int j = 1; j <= n; ++j) CHECK(a[l - 1][j] == 0.0);
  }
  CHECK(analytic_nu_exponent(n, 1, 0) == doctest::Approx(5.0 / 3.0).epsilon(1e-15));
  CHECK(analytic_nu_exponent(n, 2, 0) == doctest::Approx(25.0 / 3.0).epsilon(1e-15));
  CHECK(analytic_nu_exponent(n, 2, 1) == doctest::Approx(35.0 / 3.0).epsilon(1e-15));

  cfg.z[0] = Eigen::VectorXd::Zero(n);
  cfg.z[0](2) = 0.3;
  const auto off = analytic_nu(cfg, c, robin);
  CHECK(off[1][3] != 0.0);
  for (int j = 1; j <= n; ++j) CHECK(off[0][j] == 0.0);
  cfg.eps = 1e-3;
  const auto shifted = analytic_nu(cfg, c, robin);
  for (int j = 1; j <= n; ++j) {
    if (shifted[1][j] == 0.0) continue;
    const double e = analytic_nu_exponent(n, 2, j);
    CHECK(off[1][j] / shifted[1][j] == doctest::Approx(std::pow(2.0, e)).epsilon(1e-14));
  }

  const TowerConfig at_zero = tower(1, 1e-3, n7_t0(1));
  CHECK(std::abs(analytic_nu(at_zero, c, robin)[0][0]) <=
        1e-10 * std::abs(analytic_nu(tower(1, 1e-3, scaled(n7_t0(1), 2.0)), c, robin)[0][0]));
}

TEST_CASE("D3 quadrature matches the closed form") {
  for (int n : {7, 8, 9}) CHECK(std::abs(D3_quadrature(n) / D3_closed_form(n) - 1.0) <= 1e-8);
  CHECK(D3_closed_form(7) == doctest::Approx(std::pow(35.0, 3.5) * sphere_area(7) / 7.0).epsilon(1e-14));
}

TEST_CASE("fitted constants: positive, reproducible across grids, stable limit") {
  const FitReport& a = n7_fit();
  const FitReport b = fit_constants(7, FitGrid::secondary());
  CHECK(a.coeffs.D1 > 0.0);
  CHECK(a.coeffs.D2 > 0.0);
  CHECK(a.coeffs.D3 > 0.0);
  for (double g : a.coeffs.gradV_norms) CHECK(g > 0.0);
  CHECK(std::abs(a.coeffs.D1 / b.coeffs.D1 - 1.0) <= 1e-4);
  CHECK(std::abs(a.coeffs.D2 / b.coeffs.D2 - 1.0) <= 1e-4);

  FitGrid half = FitGrid::primary();
  half.mu.insert(half.mu.begin(), 0.5 * half.mu.front());
  const FitReport h = fit_constants(7, half);
  CHECK(std::abs(h.c0 / a.c0 - 1.0) <= 1e-4);
  CHECK(std::abs(a.c0 / energy_limit(7) - 1.0) <= 1e-4);

  CHECK_THROWS_AS(fit_constants(7, FitGrid::primary(), 1e-14), NumericalError);
  CHECK_THROWS_AS(fit_constants(6), DomainError);
}

}  // TEST_SUITE
