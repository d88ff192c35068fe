#include <doctest.h>

#include "bubbletower/gamma.hpp"
#include "bubbletower/pde.hpp"
#include "bubbletower/reduction.hpp"

#include <algorithm>
#include <cmath>

using namespace bt;

namespace {

TowerConfig tower_at_t0(int k, double eps) {
  static const FitReport fit = fit_constants(7);
  const double H = 1.0 / (5.0 * sphere_area(7));
  const auto t = explicit_t0(7, fit.coeffs, H, k);
  TowerConfig cfg = TowerConfig::make(7, k, eps, t);
  double A = 1.0;
  for (double x : t) A = std::max({A, x, 1.0 / x});
  cfg.A = 10.0 * A;
  return cfg;
}

SolveReport solve_from_ansatz(const TowerConfig& cfg, const PdeOptions& opt = {}) {
  const RadialGrid g = pde_grid(cfg, opt);
  return solve_bvp(cfg, g, tower_ansatz(cfg, g), opt);
}

RadialField resample(const RadialField& u, const RadialGrid& g) {
  RadialField f = RadialField::sample(g, [&](double r) { return u.interpolate(r); });
  f.values.back() = 0.0;
  return f;
}

}  // namespace

TEST_SUITE("pde") {

TEST_CASE("zero seed stays at the trivial solution") {
  const TowerConfig cfg = TowerConfig::make(7, 1, 1e-2, {1.0});
  const RadialGrid g = pde_grid(cfg);
  const SolveReport rep = solve_bvp(cfg, g, RadialField(g, std::vector<double>(g.size(), 0.0)));
  CHECK(rep.converged);
  CHECK(rep.newton_iterations <= 1);
  CHECK(rep.solution.sup_abs() == 0.0);
}

TEST_CASE("seed must live on the grid") {
  const TowerConfig cfg = TowerConfig::make(7, 1, 1e-2, {1.0});
  const RadialGrid g = pde_grid(cfg);
  CHECK_THROWS_AS(solve_bvp(cfg, g, RadialField(g, std::vector<double>(3, 0.0))), DomainError);
}

TEST_CASE("k = 1 from the ansatz: one signed peak at the origin close to the ansatz") {
  const TowerConfig cfg = tower_at_t0(1, 1e-2);
  const RadialGrid g = pde_grid(cfg);
  const RadialField seed = tower_ansatz(cfg, g);
  const SolveReport rep = solve_bvp(cfg, g, seed);
  REQUIRE(rep.converged);
  CHECK(rep.final_residual <= PdeOptions{}.tol);
  CHECK(rep.sign_changes == 0);
  const auto& u = rep.solution.values;
  const auto peak = std::max_element(u.begin(), u.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
  CHECK(peak == u.begin());
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size() && g.r[i] <= 3.0 * cfg.mu(1); ++i)
    worst = std::max(worst, std::abs(u[i] - seed[i]));
  CHECK(worst <= 0.2 * std::abs(seed[0]));
  CHECK(energy_identity_defect(rep.solution, cfg.eps) <= 1e-8);
  CHECK(jacobian_asymmetry(rep.solution, cfg.eps) <= 1e-10);
  CHECK(discrete_residual(rep.solution, cfg.eps) == doctest::Approx(rep.final_residual).epsilon(1e-6));
}

TEST_CASE("k = 2: one sign change and the scale ratio follows eps^(gamma_2 - gamma_1)") {
  std::vector<double> eps, ratio;
  for (double e : {0.25, 0.125}) {
    const TowerConfig cfg = tower_at_t0(2, e);
    const SolveReport rep = solve_from_ansatz(cfg);
    REQUIRE(rep.converged);
    CHECK(rep.sign_changes == 1);
    const auto mu = extract_scales(rep.solution, 2);
    CHECK(mu[1].mu < mu[0].mu);
    eps.push_back(e);
    ratio.push_back(mu[1].mu / mu[0].mu);
  }
  const double predicted = to_double(gamma(7, 2) - gamma(7, 1));
  CHECK(std::abs(loglog_slope(eps, ratio) / predicted - 1.0) <= 0.3);
}

TEST_CASE("extract_scales recovers the scales of an exact ansatz") {
  for (int k : {1, 2}) {
    const TowerConfig cfg = tower_at_t0(k, k == 1 ? 1e-2 : 0.5);
    const RadialGrid g = pde_grid(cfg);
    const auto est = extract_scales(tower_ansatz(cfg, g), k);
    REQUIRE(est.size() == static_cast<std::size_t>(k));
    for (int l = 1; l <= k; ++l) CHECK(std::abs(est[l - 1].mu / cfg.mu(l) - 1.0) <= 0.05);
  }
}

TEST_CASE("extract_scales rejects fields without the tower structure") {
  const RadialGrid g = RadialGrid::log_uniform(7, 1e-4, 12);
  CHECK_THROWS_AS(extract_scales(RadialField(g, std::vector<double>(g.size(), 0.0)), 1), DomainError);
  const TowerConfig cfg = TowerConfig::make(7, 1, 1e-2, {1.0});
  CHECK_THROWS_AS(extract_scales(tower_ansatz(cfg, g), 2), DomainError);
}

TEST_CASE("sign changes skip zeros and the boundary node") {
  CHECK(count_sign_changes({1.0, 0.0, 2.0, -1.0, 0.0, -3.0, 5.0}) == 1);
  CHECK(count_sign_changes({-1.0, 1.0, -1.0, 2.0}) == 2);
  CHECK(count_sign_changes({}) == 0);
}

TEST_CASE("scaling regression on synthetic reports is exact") {
  std::vector<SolveReport> reps;
  for (double e : {0.8, 0.4, 0.2, 0.1}) {
    SolveReport r;
    r.eps = e;
    r.converged = true;
    for (int l = 1; l <= 2; ++l) {
      ScaleEstimate s;
      s.mu = std::pow(e, to_double(gamma(7, l)));
      r.extracted_mu.push_back(s);
    }
    reps.push_back(r);
  }
  const ScalingReport sr = scaling_regression(reps, 7, 2);
  for (const auto& b : sr.bubbles) CHECK(b.rel_error <= 1e-12);

  CHECK_THROWS_AS(scaling_regression({reps.begin(), reps.begin() + 3}, 7, 2), DomainError);
  reps[3].eps = 0.15;
  CHECK_THROWS_AS(scaling_regression(reps, 7, 2), DomainError);
}

TEST_CASE("continuation: single entry equals a direct solve") {
  const TowerConfig cfg = tower_at_t0(1, 1e-2);
  const auto list = continue_in_eps(cfg, {1e-2}, SeedMode::ansatz);
  REQUIRE(list.size() == 1);
  const SolveReport direct = solve_from_ansatz(cfg);
  REQUIRE(list[0].converged);
  CHECK(list[0].solution.values == direct.solution.values);
  CHECK_THROWS_AS(continue_in_eps(cfg, {1e-3, 1e-2}, SeedMode::ansatz), DomainError);
}

TEST_CASE("continuation over four halvings: seeds agree and the peak height scales") {
  const TowerConfig cfg = tower_at_t0(1, 8e-3);
  const std::vector<double> eps = {8e-3, 4e-3, 2e-3, 1e-3};
  const auto a = continue_in_eps(cfg, eps, SeedMode::ansatz);
  const auto p = continue_in_eps(cfg, eps, SeedMode::previous);
  REQUIRE(a.size() == eps.size());
  REQUIRE(p.size() == eps.size());
  std::vector<double> height;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    REQUIRE(a[i].converged);
    REQUIRE(p[i].converged);
    double d = 0.0;
    for (std::size_t j = 0; j < a[i].solution.size(); ++j)
      d = std::max(d, std::abs(a[i].solution[j] - p[i].solution[j]));
    CHECK(d <= 1e-6 * a[i].solution.sup_abs());
    height.push_back(std::abs(a[i].solution[0]));
  }
  const double predicted = -0.5 * (7 - 2) * to_double(gamma(7, 1));
  CHECK(std::abs(loglog_slope(eps, height) / predicted - 1.0) <= 0.15);
}

TEST_CASE("u(0) is stable under 1.5x refinement on a fine mesh") {
  // Second-order scheme: the 1.5x change is 4% at 24 per decade and 3e-5 at 700.
  const TowerConfig cfg = tower_at_t0(1, 8e-3);
  PdeOptions opt;
  opt.per_decade = 48;
  SolveReport rep = solve_from_ansatz(cfg, opt);
  REQUIRE(rep.converged);
  std::vector<double> u0;
  for (int ppd : {192, 700, 1050}) {
    opt.per_decade = ppd;
    const RadialGrid g = pde_grid(cfg, opt);
    rep = solve_bvp(cfg, g, resample(rep.solution, g), opt);
    REQUIRE(rep.converged);
    u0.push_back(rep.solution[0]);
  }
  CHECK(std::abs(u0[2] / u0[1] - 1.0) <= 1e-4);
}

}  // TEST_SUITE
