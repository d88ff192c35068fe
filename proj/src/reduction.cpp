#include "bubbletower/reduction.hpp"

#include "bubbletower/gamma.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace bt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

double residual_R_at(const TowerConfig& cfg, double r) {
  const int n = cfg.n;
  const std::size_t k = static_cast<std::size_t>(cfg.k);
  std::vector<double> U(k), U1(k), P(k);
  std::size_t top = 0;
  for (std::size_t u = 0; u < k; ++u) {
    const Bubble b{cfg.mu(static_cast<int>(u) + 1), 0.0, n};
    U[u] = bubble_value(b, r);
    U1[u] = bubble_value(b, 1.0);
    P[u] = cfg.signs[u] * (U[u] - U1[u]);
    if (U[u] > U[top]) top = u;
  }
  if (r >= 1.0) return 0.0;
  // W - lead summed directly: the dominant bubble can exceed the others by 1e17.
  const double lead = cfg.signs[top] * U[top];
  double rest = -cfg.signs[top] * U1[top];
  double W = 0.0;
  for (std::size_t u = 0; u < k; ++u) {
    W += P[u];
    if (u != top) rest += P[u];
  }
  double R = -f_nl_increment(n, lead, rest) - cfg.eps * W;
  for (std::size_t u = 0; u < k; ++u)
    if (u != top) R += cfg.signs[u] * f_nl(n, U[u]);
  return R;
}

RadialField residual_R(const TowerConfig& cfg, const RadialGrid& grid) {
  cfg.validate();
  return RadialField::sample(grid, [&](double r) { return residual_R_at(cfg, r); });
}

double nonlinear_N_at(int n, double W, double phi) {
  if (W == 0.0) return f_nl(n, phi);
  const double x = phi / W;
  if (std::abs(x) < 0.05) {
    const double p = crit_power(n);
    double c = p, s = 0.0, xm = x;
    for (int m = 2; m <= 14; ++m) {
      c *= (p - m + 1) / m;
      xm *= x;
      s += c * xm;
    }
    return f_nl(n, W) * s;
  }
  return f_nl(n, W + phi) - f_nl(n, W) - f_nl_prime(n, W) * phi;
}

std::vector<double> nonlinear_N(int n, const std::vector<double>& W, const std::vector<double>& phi) {
  if (W.size() != phi.size()) throw DomainError("nonlinear_N: size mismatch");
  std::vector<double> out(W.size());
  for (std::size_t i = 0; i < W.size(); ++i) out[i] = nonlinear_N_at(n, W[i], phi[i]);
  return out;
}

PicardReport picard_solve(const TowerConfig& cfg, const RadialGrid& grid, const PicardOptions& opt) {
  if (cfg.k == 0) {
    PicardReport rep;
    rep.phi = RadialField(grid, std::vector<double>(grid.size(), 0.0));
    rep.converged = true;
    return rep;
  }
  if (cfg.eps > opt.eps_max)
    throw DomainError("picard_solve: eps = " + short_num(cfg.eps) + " above the configured threshold " +
                      short_num(opt.eps_max));
  return picard_solve(ProjectedSolver(cfg, grid), opt);
}

PicardReport picard_solve(const ProjectedSolver& solver, const PicardOptions& opt) {
  const TowerConfig& cfg = solver.config();
  if (cfg.eps > opt.eps_max)
    throw DomainError("picard_solve: eps = " + short_num(cfg.eps) + " above the configured threshold " +
                      short_num(opt.eps_max));
  const RadialGrid& grid = solver.grid();
  const std::size_t N = grid.size();
  const std::vector<double>& W = solver.op().W;
  const RadialField R = residual_R(cfg, grid);

  auto T = [&](const std::vector<double>& phi) {
    std::vector<double> rhs(N);
    for (std::size_t i = 0; i < N; ++i) rhs[i] = -R[i] + nonlinear_N_at(cfg.n, W[i], phi[i]);
    return solver.solve(rhs);
  };
  auto diff_norm = [&](const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d(N);
    for (std::size_t i = 0; i < N; ++i) d[i] = a[i] - b[i];
    return solver.weighted_norm(d);
  };

  PicardReport rep;
  std::vector<double> phi(N, 0.0);
  LinearSolveResult last;
  int streak = 0;
  for (int m = 0; m <= opt.max_iterations; ++m) {
    last = T(phi);
    const double d = diff_norm(last.phi.values, phi);
    const double nrm = solver.weighted_norm(last.phi.values);
    rep.step_norms.push_back(d);
    rep.multipliers.push_back(last.lambda);
    if (rep.step_norms.size() >= 2) {
      const double prev = rep.step_norms[rep.step_norms.size() - 2];
      const double c = prev > 0 ? d / prev : 0.0;
      rep.contraction_estimates.push_back(c);
      streak = c >= 1.0 ? streak + 1 : 0;
      if (streak >= opt.divergence_streak)
        throw NumericalError("picard_solve: contraction estimate >= 1 for " + std::to_string(streak) +
                             " consecutive iterations at eps = " + short_num(cfg.eps) + "; try a smaller eps");
    }
    phi = last.phi.values;
    if (d <= opt.tol * nrm || d == 0.0) {
      rep.iterations = m;
      rep.converged = true;
      break;
    }
  }
  if (!rep.converged)
    throw NumericalError("picard_solve: no convergence in " + std::to_string(opt.max_iterations) + " iterations");
  rep.phi = last.phi;
  rep.final_weighted_norm = solver.weighted_norm(phi);
  rep.orthogonality = last.orthogonality;
  const LinearSolveResult again = T(phi);
  const double nrm = rep.final_weighted_norm;
  const double d = diff_norm(again.phi.values, phi);
  rep.reapplication_defect = nrm > 0 ? d / nrm : d;
  return rep;
}

double analytic_nu_exponent(int n, int l, int j) {
  if (j == 0) return to_double(1 + 2 * gamma(n, l));
  if (l == 1) return to_double(1 + 3 * gamma(n, 1));
  return to_double(Rational(n, 2) * (gamma(n, l) - gamma(n, l - 1)));
}

std::vector<std::vector<double>> analytic_nu(const TowerConfig& cfg, const ReducedCoefficients& coeffs,
                                             const RobinResult& robin) {
  const int n = cfg.n, k = cfg.k;
  if (coeffs.gradV_norms.size() != static_cast<std::size_t>(n + 1))
    throw DomainError("analytic_nu: need ||grad V_j||^2 for j = 0..n");
  ReducedPoint p = ReducedPoint::make(n, k, cfg.t);
  p.xi = cfg.xi;
  p.z = cfg.z;
  p.signs = cfg.signs;
  const Eigen::VectorXd F = reduced_F(p, coeffs, robin);
  std::vector<std::vector<double>> out;
  for (int l = 1; l <= k; ++l) {
    std::vector<double> row;
    for (int j = 0; j <= n; ++j) {
      const double e = static_cast<double>(std::exp(analytic_nu_exponent(n, l, j) * std::log(static_cast<long double>(cfg.eps))));
      row.push_back(cfg.sign(l) * e * F((l - 1) * (n + 1) + j) / coeffs.gradV_norms[static_cast<std::size_t>(j)]);
    }
    out.push_back(std::move(row));
  }
  return out;
}

NuExtraction extract_nu(const TowerConfig& cfg, const RadialField& phi, const ReducedCoefficients& coeffs,
                        double robin_value, const NuForcing* forcing) {
  cfg.validate();
  const RadialGrid& grid = phi.grid;
  const int n = cfg.n, k = cfg.k;
  const std::size_t N = grid.size();
  const LinearOperator op = assemble_linearized(cfg, grid);
  const std::vector<double> Nphi = nonlinear_N(n, op.W, phi.values);
  const auto mus = cfg.mus();

  QuadOptions opt;
  opt.rel_tol = 1e-11;
  opt.abs_tol = 0.0;
  opt.per_decade = 6;
  opt.lo_scale = 1e-3 * mus.back();

  NuExtraction out;
  out.b.resize(static_cast<std::size_t>(k));
  out.pairing.resize(k, k);
  for (int m = 1; m <= k; ++m) {
    const double mu = mus[static_cast<std::size_t>(m - 1)];
    auto Zm = [&](double r) { return Z_value(n, mu, r); };
    double b = radial_integral([&](double r) { return residual_R_at(cfg, r) * Zm(r); }, n, 1.0, opt).value;
    // int (L phi) Z_m = int phi (L Z_m) with L Z_m in closed form.
    long double s = 0.0L;
    for (std::size_t i = 0; i + 1 < N; ++i) {
      const double r = grid.r[i], z = Zm(r);
      const double LZ = Z_laplacian(n, mu, r) - cfg.eps * z - f_nl_prime(n, op.W[i]) * z;
      s += static_cast<long double>(grid.vol[i]) * (phi[i] * LZ - Nphi[i] * z);
    }
    if (forcing) {
      if (forcing->continuous) b -= radial_integral([&](double r) { return forcing->continuous(r) * Zm(r); }, n, 1.0, opt).value;
      for (std::size_t i = 0; i + 1 < N && i < forcing->discrete.size(); ++i)
        s -= static_cast<long double>(grid.vol[i]) * forcing->discrete[i] * Zm(grid.r[i]);
    }
    out.b[static_cast<std::size_t>(m - 1)] = b + static_cast<double>(s);
    for (int l = 1; l <= k; ++l) {
      const double ml = mus[static_cast<std::size_t>(l - 1)];
      out.pairing(m - 1, l - 1) = radial_integral(
          [&](double r) { return (Z_laplacian(n, ml, r) - cfg.eps * Z_value(n, ml, r)) * Zm(r); }, n, 1.0, opt).value;
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(out.pairing);
  if (!lu.isInvertible()) throw NumericalError("extract_nu: singular pairing matrix (degenerate eps or parameters)");
  const Eigen::VectorXd nu = lu.solve(Eigen::Map<const Eigen::VectorXd>(out.b.data(), k));

  RobinResult robin;
  robin.value = robin_value;
  robin.gradient = Eigen::VectorXd::Zero(n);
  robin.hessian = Eigen::MatrixXd::Zero(n, n);
  const auto an = analytic_nu(cfg, coeffs, robin);
  for (int l = 0; l < k; ++l) {
    out.nu.push_back(nu(l));
    out.nu_analytic.push_back(an[static_cast<std::size_t>(l)][0]);
    out.ratios.push_back(nu(l) / out.nu_analytic.back());
  }
  return out;
}

namespace {

// int_R^inf f(r) r^{n-1} dr through r = 1/s.
double tail_integral(const std::function<double(double)>& f, int n, double R) {
  QuadOptions opt;
  opt.rel_tol = 1e-12;
  opt.abs_tol = 0.0;
  opt.lo_scale = 1e-3 / R;
  return integrate_segment([&](double s) { return s == 0.0 ? 0.0 : f(1.0 / s) * std::pow(s, -n - 1); }, 0.0, 1.0 / R,
                           opt).value;
}

double ball_integral(const std::function<double(double)>& f, int n, double R) {
  QuadOptions opt;
  opt.rel_tol = 1e-12;
  opt.abs_tol = 0.0;
  opt.lo_scale = 1e-3;
  return integrate_segment([&](double r) { return f(r) * std::pow(r, n - 1); }, 0.0, R, opt).value;
}

}  // namespace

double energy_limit(int n) {
  QuadOptions opt;
  opt.rel_tol = 1e-12;
  opt.lo_scale = 1e-3;
  const double q = crit_exponent(n);
  return radial_integral([&](double r) { return std::pow(U0(n, r), q); }, n, kInf, opt).value / n;
}

double energy_deviation(int n, double mu, double eps) {
  if (!(mu > 0.0 && mu < 1.0)) throw DomainError("energy_deviation: need 0 < mu < 1");
  const double om = sphere_area(n), q = crit_exponent(n);
  const double R = 1.0 / mu, c = U0(n, R);
  const double T1 = -0.5 * tail_integral([&](double r) { return U0_dr(n, r) * U0_dr(n, r); }, n, R);
  const double T2 = tail_integral([&](double r) { return std::pow(U0(n, r), q); }, n, R) / q;
  const double T3 = -ball_integral([&](double r) {
    const double u = U0(n, r);
    return std::pow(u, q) * std::expm1(q * std::log1p(-c / u));
  }, n, R) / q;
  const double T4 = -0.5 * eps * mu * mu * ball_integral([&](double r) {
    const double d = U0(n, r) - c;
    return d * d;
  }, n, R);
  return om * (T1 + T2 + T3 + T4);
}

FitGrid FitGrid::primary() { return {{1e-4, 1.5e-4, 2e-4, 3e-4}, {1e-8, 1e-7, 1e-6}}; }
FitGrid FitGrid::secondary() { return {{1.2e-4, 1.8e-4, 2.5e-4, 3.5e-4}, {2e-8, 2e-7, 2e-6}}; }

double D3_closed_form(int n) { return std::pow(n * (n - 2.0), 0.5 * n) * sphere_area(n) / n; }

double D3_quadrature(int n) {
  QuadOptions opt;
  opt.rel_tol = 1e-12;
  opt.abs_tol = 0.0;
  opt.lo_scale = 1e-3;
  return radial_integral([&](double r) { return std::pow(U0(n, r), crit_power(n)); }, n, kInf, opt).value;
}

std::vector<double> grad_V_norms(int n) {
  std::vector<double> out{grad_V0_norm_sq(n)};
  const double a = n * (n - 2.0);
  QuadOptions opt;
  opt.rel_tol = 1e-12;
  opt.lo_scale = 1e-4;
  const double vj = radial_integral([&](double r) {
    const double s = r * r / a;
    const double g = std::pow(1.0 + s, -0.5 * n);
    const double g1 = -n * r / a * std::pow(1.0 + s, -0.5 * n - 1.0);
    return g * g + 2.0 / n * r * g * g1 + r * r / n * g1 * g1;
  }, n, kInf, opt).value;
  out.insert(out.end(), static_cast<std::size_t>(n), vj);
  return out;
}

FitReport fit_constants(int n, const FitGrid& grid, double max_rel_residual) {
  if (n < 7) throw DomainError("fit_constants: requires n >= 7");
  if (grid.mu.empty() || grid.eps.empty() || grid.mu.size() * grid.eps.size() < 4)
    throw DomainError("fit_constants: fit grid needs at least 4 samples");
  const int m = static_cast<int>(grid.mu.size() * grid.eps.size());
  Eigen::MatrixXd A(m, 3);
  Eigen::VectorXd y(m), rhs(m);
  int row = 0;
  for (double mu : grid.mu) {
    for (double eps : grid.eps) {
      const double v = energy_deviation(n, mu, eps);
      if (!(v != 0.0) || !std::isfinite(v)) throw NumericalError("fit_constants: degenerate energy sample");
      const double w = 1.0 / std::abs(v);
      A(row, 0) = w;
      A(row, 1) = w * eps * mu * mu;
      A(row, 2) = w * std::pow(mu, n - 2);
      y(row) = v;
      rhs(row) = v * w;
      ++row;
    }
  }
  Eigen::Vector3d cs = A.colwise().norm().cwiseInverse().transpose();
  Eigen::MatrixXd As = A * cs.asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(As, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::Vector3d c = cs.cwiseProduct(svd.solve(rhs));

  FitReport rep;
  rep.samples = m;
  const auto& sv = svd.singularValues();
  rep.condition = sv(0) / sv(2);
  rep.delta0 = c(0);
  rep.c_a = c(1);
  rep.c_b = c(2);
  rep.c0 = energy_limit(n) + c(0);
  row = 0;
  for (double mu : grid.mu) {
    for (double eps : grid.eps) {
      const double model = c(0) + c(1) * eps * mu * mu + c(2) * std::pow(mu, n - 2);
      rep.max_rel_residual = std::max(rep.max_rel_residual, std::abs(model - y(row)) / std::abs(y(row)));
      ++row;
    }
  }
  if (!(rep.max_rel_residual <= max_rel_residual))
    throw NumericalError("fit_constants: relative fit residual " + short_num(rep.max_rel_residual) +
                         " exceeds " + short_num(max_rel_residual) + " (condition " +
                         short_num(rep.condition) + ")");
  const double H00 = 1.0 / ((n - 2) * sphere_area(n));
  rep.coeffs.D1 = -rep.c_a;
  rep.coeffs.D2 = rep.c_b / H00;
  rep.coeffs.D3 = D3_quadrature(n);
  rep.coeffs.gradV_norms = grad_V_norms(n);
  rep.coeffs.provenance = "fit";
  if (!(rep.coeffs.D1 > 0 && rep.coeffs.D2 > 0))
    throw NumericalError("fit_constants: fitted D1 or D2 is not positive");
  return rep;
}

}  // namespace bt
