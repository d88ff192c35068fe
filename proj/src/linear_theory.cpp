#include "bubbletower/linear_theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace bt {

RadialGrid tower_grid(const TowerConfig& cfg, int per_decade, int tail_points) {
  cfg.validate();
  return RadialGrid::graded(cfg.n, 0.25 * cfg.mu(cfg.k), std::sqrt(cfg.mu(1)), per_decade, tail_points);
}

Eigen::MatrixXd LinearOperator::dense() const {
  const int m = unknowns();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    A(i, i) = diag[static_cast<std::size_t>(i)];
    if (i > 0) A(i, i - 1) = lower[static_cast<std::size_t>(i)];
    if (i + 1 < m) A(i, i + 1) = upper[static_cast<std::size_t>(i)];
  }
  return A;
}

std::vector<double> LinearOperator::apply(const std::vector<double>& phi) const {
  const std::size_t m = diag.size();
  if (phi.size() != m + 1) throw DomainError("LinearOperator::apply: field size does not match the grid");
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double v = diag[i] * phi[i];
    if (i > 0) v += lower[i] * phi[i - 1];
    if (i + 1 < m) v += upper[i] * phi[i + 1];
    out[i] = v;
  }
  return out;
}

LinearOperator assemble_linearized(const TowerConfig& cfg, const RadialGrid& grid) {
  if (grid.dim != cfg.n) throw DomainError("assemble_linearized: grid dimension differs from n");
  LinearOperator op;
  op.grid = grid;
  op.n = cfg.n;
  op.eps = cfg.eps;
  if (cfg.k > 0) {
    op.W = tower_ansatz(cfg, grid).values;
  } else {
    op.W.assign(grid.size(), 0.0);
  }
  const std::size_t m = grid.size() - 1;
  op.lower.assign(m, 0.0);
  op.diag.assign(m, 0.0);
  op.upper.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double fin = i ? grid.face[i - 1] : 0.0, fout = grid.face[i];
    op.diag[i] = (fin + fout) / grid.vol[i] - cfg.eps - f_nl_prime(cfg.n, op.W[i]);
    op.lower[i] = -fin / grid.vol[i];
    op.upper[i] = -fout / grid.vol[i];
  }
  return op;
}

ProjectedSolver::ProjectedSolver(const TowerConfig& cfg, const RadialGrid& grid) : cfg_(cfg) {
  cfg.validate();
  op_ = assemble_linearized(cfg, grid);
  const int n = cfg.n, k = cfg.k;
  const std::size_t N = grid.size();
  const int m = op_.unknowns();
  for (int l = 1; l <= k; ++l) {
    const double mu = cfg.mu(l);
    std::vector<double> z(N), lz(N);
    for (std::size_t i = 0; i < N; ++i) {
      z[i] = Z_value(n, mu, grid.r[i]);
      lz[i] = Z_laplacian(n, mu, grid.r[i]) - cfg.eps * z[i];
    }
    z.back() = 0.0;
    Z_.push_back(std::move(z));
    LZ_.push_back(std::move(lz));
  }
  psi_.resize(N);
  for (std::size_t i = 0; i < N; ++i) psi_[i] = weight_psi(cfg, grid.r[i]);

  Eigen::MatrixXd C(m, k), B(k, m);
  for (int l = 0; l < k; ++l) {
    const auto& z = Z_[static_cast<std::size_t>(l)];
    for (int i = 0; i < m; ++i) {
      const std::size_t u = static_cast<std::size_t>(i);
      C(i, l) = -LZ_[static_cast<std::size_t>(l)][u];
      // d/dphi_i of sum_j face_j (phi_{j+1} - phi_j)(Z_{j+1} - Z_j)
      double b = -grid.face[u] * (z[u + 1] - z[u]);
      if (i > 0) b += grid.face[u - 1] * (z[u] - z[u - 1]);
      B(l, i) = b;
    }
  }
  try {
    sys_ = std::make_unique<BorderedSystem>(op_.dense(), C, B);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("ProjectedSolver: ") + e.what() + " (constraint index is l-1)");
  }
}

double ProjectedSolver::weighted_norm(const std::vector<double>& phi) const {
  double w = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) w = std::max(w, std::abs(phi[i]) / psi_[i]);
  return w;
}

LinearSolveResult ProjectedSolver::solve(const std::vector<double>& k_rhs) const {
  const RadialGrid& g = op_.grid;
  const std::size_t N = g.size();
  if (k_rhs.size() != N) throw DomainError("solve_projected: right-hand side does not match the grid");
  for (double v : k_rhs)
    if (!std::isfinite(v)) throw DomainError("solve_projected: right-hand side is not finite");
  const int m = op_.unknowns();
  Eigen::VectorXd rhs(m);
  for (int i = 0; i < m; ++i) rhs(i) = k_rhs[static_cast<std::size_t>(i)];
  BorderedSolution s = sys_->solve(rhs);

  LinearSolveResult res;
  std::vector<double> phi(N, 0.0);
  for (int i = 0; i < m; ++i) phi[static_cast<std::size_t>(i)] = s.x(i);
  res.phi = RadialField(g, phi);
  res.residual = std::max(s.residual, s.constraint_residual);
  for (int l = 1; l <= cfg_.k; ++l) {
    const double lam = s.lambda(l - 1);
    const double mu = cfg_.mu(l);
    res.lambda.push_back(lam);
    res.multiplier_ratios.push_back(std::abs(lam) / (cfg_.eps * mu * mu));
    const auto& z = Z_[static_cast<std::size_t>(l - 1)];
    const double pz = h1_inner(g, phi, z);
    const double nphi = std::sqrt(h1_inner(g, phi, phi)), nz = std::sqrt(h1_inner(g, z, z));
    res.orthogonality.push_back(nphi > 0 ? std::abs(pz) / (nphi * nz) : 0.0);
  }
  res.weighted_norm = weighted_norm(phi);
  res.annulus_ratios = annulus_ratios(cfg_, res.phi);
  return res;
}

LinearSolveResult solve_projected(const TowerConfig& cfg, const RadialGrid& grid, const RadialField& k_rhs) {
  return ProjectedSolver(cfg, grid).solve(k_rhs);
}

std::vector<double> annulus_ratios(const TowerConfig& cfg, const RadialField& phi) {
  const auto mu = cfg.mus();
  std::vector<double> out;
  for (int l = 1; l <= cfg.k; ++l) {
    const std::size_t u = static_cast<std::size_t>(l - 1);
    const double lo = l < cfg.k ? 0.25 * std::sqrt(mu[u + 1] * mu[u]) : 0.0;
    const double hi = l > 1 ? 4.0 * std::sqrt(mu[u] * mu[u - 1]) : std::numeric_limits<double>::infinity();
    const Bubble b{mu[u], 0.0, cfg.n};
    double a = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) {
      const double r = phi.grid.r[i];
      if (r >= lo && r <= hi) a = std::max(a, std::abs(phi[i]) / bubble_value(b, r));
    }
    out.push_back(a);
  }
  return out;
}

double admissibility_bound(const TowerConfig& cfg, double r) {
  const AnnulusSet A = annuli(cfg);
  const int n = cfg.n;
  double s = 0.0;
  for (int i = 1; i <= cfg.k; ++i) {
    const double mu = A.mu[static_cast<std::size_t>(i - 1)];
    s += std::pow(mu, 0.5 * (n + 2)) * std::pow(A.theta(i, r), -4.0);
  }
  const int l = A.shell(r);
  auto W = [&](int j) { return bubble_value(Bubble{A.mu[static_cast<std::size_t>(j - 1)], 0.0, n}, r); };
  double nb = 0.0;
  if (l < cfg.k) nb += W(l + 1);
  if (l > 1) nb += W(l - 1);
  s += std::pow(W(l), crit_exponent(n) - 2.0) * nb;
  return s;
}

AdmissibilityReport check_rhs_admissible(const TowerConfig& cfg, const RadialField& k_rhs, double max_ratio) {
  AdmissibilityReport rep;
  for (std::size_t i = 0; i < k_rhs.size(); ++i) {
    const double r = k_rhs.grid.r[i];
    const double ratio = std::abs(k_rhs[i]) / admissibility_bound(cfg, r);
    if (ratio > rep.worst_ratio) {
      rep.worst_ratio = ratio;
      rep.location = r;
    }
  }
  rep.admissible = rep.worst_ratio <= max_ratio;
  return rep;
}

double RadialTestFunction::laplacian(int n, double r) const {
  if (r >= support) return 0.0;
  if (r == 0.0) return -n * d2(0.0);
  return -d2(r) - (n - 1) * d1(r) / r;
}

namespace {

// 1 on [0, R/2], 0 beyond R, with S(t) = t^4 (35 - 84 t + 70 t^2 - 20 t^3) in between.
struct Cutoff {
  double R;
  double t(double r) const { return std::clamp(2.0 * r / R - 1.0, 0.0, 1.0); }
  double value(double r) const {
    const double s = t(r);
    return 1.0 - s * s * s * s * (35.0 - 84.0 * s + 70.0 * s * s - 20.0 * s * s * s);
  }
  double d1(double r) const {
    const double s = t(r);
    return -140.0 * std::pow(s * (1.0 - s), 3) * (2.0 / R);
  }
  double d2(double r) const {
    const double s = t(r);
    return -420.0 * s * s * (1.0 - s) * (1.0 - s) * (1.0 - 2.0 * s) * (4.0 / (R * R));
  }
};

RadialTestFunction cut(std::function<double(double)> f, std::function<double(double)> f1,
                       std::function<double(double)> f2, double R) {
  const Cutoff c{R};
  RadialTestFunction out;
  out.support = R;
  out.value = [=](double r) { return r >= R ? 0.0 : c.value(r) * f(r); };
  out.d1 = [=](double r) { return r >= R ? 0.0 : c.d1(r) * f(r) + c.value(r) * f1(r); };
  out.d2 = [=](double r) {
    return r >= R ? 0.0 : c.d2(r) * f(r) + 2.0 * c.d1(r) * f1(r) + c.value(r) * f2(r);
  };
  return out;
}

double V0_d2(int n, double r) {
  const double a = n * (n - 2.0), s = r * r / a, e = -0.5 * n;
  const double g1 = std::pow(1.0 + s, e) + (s - 1.0) * e * std::pow(1.0 + s, e - 1.0);
  const double g2 = 2.0 * e * std::pow(1.0 + s, e - 1.0) + (s - 1.0) * e * (e - 1.0) * std::pow(1.0 + s, e - 2.0);
  return g2 * 4.0 * r * r / (a * a) + 2.0 * g1 / a;
}

}  // namespace

RadialTestFunction truncated_V0(int n, double R) {
  if (!(R > 0.0)) throw DomainError("truncated_V0: support radius must be positive");
  return cut([n](double r) { return V0(n, r); }, [n](double r) { return V0_dr(n, r); },
             [n](double r) { return V0_d2(n, r); }, R);
}

RadialTestFunction gaussian_bump(double center, double width, double R) {
  if (!(width > 0.0) || !(R > center)) throw DomainError("gaussian_bump: need width > 0 and R > center");
  // Even in r, so smooth at the origin.
  auto g = [=](double r, int d) {
    double s = 0.0;
    for (double c : {center, -center}) {
      const double x = (r - c) / width, e = std::exp(-x * x);
      if (d == 0) s += e;
      if (d == 1) s += -2.0 * x / width * e;
      if (d == 2) s += (4.0 * x * x - 2.0) / (width * width) * e;
    }
    return s;
  };
  return cut([=](double r) { return g(r, 0); }, [=](double r) { return g(r, 1); },
             [=](double r) { return g(r, 2); }, R);
}

RepresentationCheck representation_check(int n, const RadialTestFunction& phi, const std::vector<double>& points) {
  const double p = crit_power(n);
  const double R = phi.support;
  QuadOptions opt;
  opt.rel_tol = 1e-11;
  opt.lo_scale = 1e-3;
  auto wgt = [&](double r) { return std::pow(U0(n, r), p - 1.0); };
  const double num = radial_integral([&](double r) { return phi.value(r) * V0(n, r) * wgt(r); }, n, R, opt).value;
  const double den = radial_integral([&](double r) { return V0(n, r) * V0(n, r) * wgt(r); }, n,
                                     std::numeric_limits<double>::infinity(), opt).value;
  RepresentationCheck out;
  out.projection_coefficient = num / den;
  auto g = [&](double r) { return std::abs(phi.laplacian(n, r) - p * wgt(r) * phi.value(r)); };
  for (double r : points) {
    const double lhs = std::abs(phi.value(r) - out.projection_coefficient * V0(n, r));
    const double rhs = newtonian_potential_at(g, n, R, r, opt);
    out.r.push_back(r);
    out.lhs.push_back(lhs);
    out.rhs.push_back(rhs);
    if (rhs > 0.0) out.max_ratio = std::max(out.max_ratio, lhs / rhs);
  }
  return out;
}

namespace {

// omega [ r^{2-n} int_a^{min(r,b)} g s^{n-1} + int_{max(r,a)}^b g s ] for g supported on [a, b].
double shell_potential(const std::function<double(double)>& g, int n, double a, double b, double r) {
  QuadOptions opt;
  opt.rel_tol = 1e-10;
  opt.lo_scale = std::max(a, 1e-3 * b);
  double in = 0.0, out = 0.0;
  if (r > a) in = integrate_segment([&](double s) { return g(s) * std::pow(s, n - 1); }, a, std::min(r, b), opt).value;
  if (r < b) out = integrate_segment([&](double s) { return g(s) * s; }, std::max(r, a), b, opt).value;
  return sphere_area(n) * (std::pow(r, 2 - n) * in + out);
}

void check_shell_index(const TowerConfig& cfg, int i) {
  if (i < 1 || i > cfg.k) throw DomainError("bubble index " + std::to_string(i) + " out of range");
}

}  // namespace

double tech1_integral(const TowerConfig& cfg, int i, double p, double r) {
  check_shell_index(cfg, i);
  const AnnulusSet A = annuli(cfg);
  const int n = cfg.n;
  const double mu = cfg.mu(i);
  const double a = A.radii[static_cast<std::size_t>(i)], b = A.radii[static_cast<std::size_t>(i - 1)];
  const Bubble bb{mu, 0.0, n};
  auto g = [&](double s) {
    return std::pow(projected_bubble_value(bb, s), crit_exponent(n) - 2.0) * std::pow(mu / (mu + s), p);
  };
  return shell_potential(g, n, a, b, r);
}

double tech1_bound(const TowerConfig& cfg, int i, double p, double r) {
  check_shell_index(cfg, i);
  const AnnulusSet A = annuli(cfg);
  const int n = cfg.n;
  const double mu = cfg.mu(i), th = A.theta(i, r);
  const bool outside = i >= 2 && r >= A.radii[static_cast<std::size_t>(i - 1)];
  if (p > n - 4) return std::pow(mu / th, n - 2);
  if (!outside) return std::pow(mu / th, p + 2);
  return std::pow(mu, 0.5 * (p + 2)) * std::pow(cfg.mu(i - 1), 0.5 * (n - 4 - p)) *
         bubble_value(Bubble{mu, 0.0, n}, r);
}

double tech2_integral(const TowerConfig& cfg, int i, int j, double r) {
  check_shell_index(cfg, i);
  check_shell_index(cfg, j);
  if (!(i < j)) throw DomainError("tech2_integral: need i < j");
  const AnnulusSet A = annuli(cfg);
  const int n = cfg.n;
  const Bubble bi{cfg.mu(i), 0.0, n}, bj{cfg.mu(j), 0.0, n};
  const double a = A.radii[static_cast<std::size_t>(i)], b = A.radii[static_cast<std::size_t>(i - 1)];
  auto g = [&](double s) {
    return std::pow(projected_bubble_value(bi, s), crit_exponent(n) - 2.0) * projected_bubble_value(bj, s);
  };
  return shell_potential(g, n, a, b, r);
}

double tech2_bound(const TowerConfig& cfg, int i, int j, double r) {
  check_shell_index(cfg, i);
  check_shell_index(cfg, j);
  if (!(i < j)) throw DomainError("tech2_bound: need i < j");
  const AnnulusSet A = annuli(cfg);
  const int n = cfg.n;
  const double mi = cfg.mu(i), mj = cfg.mu(j);
  const double h = 0.5 * (n - 2);
  const double inner = A.radii[static_cast<std::size_t>(i)], outer = A.radii[static_cast<std::size_t>(i - 1)];
  if (r < inner) {
    const double mn = cfg.mu(i + 1);
    return std::pow(mj / mn, h) * (mn / mi) * std::pow(mi, 1.0 - 0.5 * n);
  }
  if (r < outer && A.theta(j, r) <= mi) {
    const double th = A.theta(j, r);
    return th * th / (mi * mi) * bubble_value(Bubble{mj, 0.0, n}, r);
  }
  return std::pow(mj / mi, h) * bubble_value(Bubble{mi, 0.0, n}, r);
}

double gram_h1(int n, double mu_i, double mu_j) {
  QuadOptions opt;
  opt.rel_tol = 1e-13;
  opt.abs_tol = 0.0;
  opt.per_decade = 6;
  opt.lo_scale = 1e-4 * std::min(mu_i, mu_j);
  return radial_integral([&](double r) { return Z_dr(n, mu_i, r) * Z_dr(n, mu_j, r); }, n, 1.0, opt).value;
}

double grad_V0_norm_sq(int n) {
  QuadOptions opt;
  opt.rel_tol = 1e-12;
  opt.lo_scale = 1e-4;
  return radial_integral([&](double r) { return V0_dr(n, r) * V0_dr(n, r); }, n,
                         std::numeric_limits<double>::infinity(), opt).value;
}

}  // namespace bt
