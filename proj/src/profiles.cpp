#include "bubbletower/profiles.hpp"

#include "bubbletower/gamma.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace bt {

namespace {

double a_n(int n) { return static_cast<double>(n) * (n - 2); }

}  // namespace

double crit_exponent(int n) { return 2.0 * n / (n - 2.0); }
double crit_power(int n) { return (n + 2.0) / (n - 2.0); }

double U0(int n, double r) { return std::pow(1.0 + r * r / a_n(n), -0.5 * (n - 2)); }

double U0_dr(int n, double r) {
  const double a = a_n(n);
  return -(n - 2) * r / a * std::pow(1.0 + r * r / a, -0.5 * n);
}

double U0_laplacian(int n, double r) {
  // -U'' - (n-1) U'/r with U'' = -(n-2)/a (1+s)^{-n/2} + n(n-2) r^2/a^2 (1+s)^{-n/2-1}.
  const double a = a_n(n), s = r * r / a;
  const double q = std::pow(1.0 + s, -0.5 * n);
  const double upp = -(n - 2) / a * q + n * (n - 2) * r * r / (a * a) * q / (1.0 + s);
  const double up_over_r = -(n - 2) / a * q;
  return -upp - (n - 1) * up_over_r;
}

Eigen::VectorXd U0_gradient(int n, const Eigen::VectorXd& x) {
  const double a = a_n(n), s = x.squaredNorm() / a;
  return -(n - 2) / a * std::pow(1.0 + s, -0.5 * n) * x;
}

Eigen::MatrixXd U0_hessian(int n, const Eigen::VectorXd& x) {
  const double a = a_n(n), s = x.squaredNorm() / a;
  const double q = std::pow(1.0 + s, -0.5 * n);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(x.size(), x.size()) * q;
  H -= (n / a) * q / (1.0 + s) * (x * x.transpose());
  return -(n - 2) / a * H;
}

double f_nl(int n, double u) { return std::copysign(std::pow(std::abs(u), crit_power(n)), u); }

double f_nl_prime(int n, double u) { return crit_power(n) * std::pow(std::abs(u), crit_power(n) - 1.0); }

double f_nl_increment(int n, double a, double b) {
  if (a == 0.0) return f_nl(n, b);
  if (std::abs(b) < 0.5 * std::abs(a)) return f_nl(n, a) * std::expm1(crit_power(n) * std::log1p(b / a));
  return f_nl(n, a + b) - f_nl(n, a);
}

void validate(const Bubble& b) {
  if (b.dim < 7) throw DomainError("Bubble: dimension must be at least 7");
  if (!(b.mu > 0.0)) throw DomainError("Bubble: mu must be positive");
  if (!(b.center_offset >= 0.0 && b.center_offset < 1.0)) throw DomainError("Bubble: offset must lie in [0,1)");
}

double bubble_value(const Bubble& b, double r) {
  const int n = b.dim;
  return std::pow(b.mu, -0.5 * (n - 2)) * U0(n, (r - b.center_offset) / b.mu);
}

double bubble_dr(const Bubble& b, double r) {
  const int n = b.dim;
  return std::pow(b.mu, -0.5 * n) * U0_dr(n, (r - b.center_offset) / b.mu);
}

double bubble_laplacian(const Bubble& b, double r) {
  const int n = b.dim;
  return std::pow(b.mu, -0.5 * (n + 2)) * U0_laplacian(n, (r - b.center_offset) / b.mu);
}

RadialField bubble_pde_residual(const Bubble& b, const RadialGrid& grid, bool* under_resolved) {
  validate(b);
  if (under_resolved) {
    auto below = std::count_if(grid.r.begin(), grid.r.end(), [&](double r) { return r < b.mu; });
    *under_resolved = below < 8;
  }
  return RadialField::sample(grid, [&](double r) {
    return bubble_laplacian(b, r) - std::pow(bubble_value(b, r), crit_power(b.dim));
  });
}

double V0(int n, double r) {
  const double s = r * r / a_n(n);
  return (s - 1.0) * std::pow(1.0 + s, -0.5 * n);
}

double V0_dr(int n, double r) {
  const double a = a_n(n), s = r * r / a;
  const double dds = std::pow(1.0 + s, -0.5 * n - 1.0) * ((1.0 + s) - 0.5 * n * (s - 1.0));
  return dds * 2.0 * r / a;
}

double V0_laplacian(int n, double r) {
  // V_0 = g(s), s = r^2/a: -V'' - (n-1)V'/r = -(4 s/a) g'' - (2n/a) g'.
  const double a = a_n(n), s = r * r / a;
  const double e = -0.5 * n;
  const double g1 = std::pow(1.0 + s, e) + (s - 1.0) * e * std::pow(1.0 + s, e - 1.0);
  const double g2 = 2.0 * e * std::pow(1.0 + s, e - 1.0) + (s - 1.0) * e * (e - 1.0) * std::pow(1.0 + s, e - 2.0);
  return -(4.0 * s / a) * g2 - (2.0 * n / a) * g1;
}

double kernel_value(int j, int n, const Eigen::VectorXd& x) {
  if (j < 0 || j > n) throw DomainError("kernel_value: index " + std::to_string(j) + " out of range 0.." + std::to_string(n));
  if (x.size() != n) throw DomainError("kernel_value: point has wrong dimension");
  const double s = x.squaredNorm() / a_n(n);
  if (j == 0) return (s - 1.0) * std::pow(1.0 + s, -0.5 * n);
  return x(j - 1) * std::pow(1.0 + s, -0.5 * n);
}

double projected_bubble_value(const Bubble& b, double r) { return bubble_value(b, r) - bubble_value(b, 1.0); }

RadialField projected_bubble_ball(const Bubble& b, const RadialGrid& grid) {
  validate(b);
  if (b.center_offset != 0.0) throw DomainError("projected_bubble_ball: bubble must be centered at 0");
  const double c = bubble_value(b, 1.0);
  RadialField f = RadialField::sample(grid, [&](double r) { return bubble_value(b, r) - c; });
  f.values.back() = 0.0;
  return f;
}

double Z_value(int n, double mu, double r) {
  return std::pow(mu, -0.5 * (n - 2)) * (V0(n, r / mu) - V0(n, 1.0 / mu));
}

double Z_dr(int n, double mu, double r) { return std::pow(mu, -0.5 * n) * V0_dr(n, r / mu); }

double Z_laplacian(int n, double mu, double r) {
  // Delta V_0 = p U_0^{p-1} V_0.
  const double y = r / mu, p = crit_power(n);
  return std::pow(mu, -0.5 * (n + 2)) * p * std::pow(U0(n, y), p - 1.0) * V0(n, y);
}

TowerConfig TowerConfig::make(int n, int k, double eps, std::vector<double> t) {
  TowerConfig c;
  c.n = n;
  c.k = k;
  c.eps = eps;
  c.t = std::move(t);
  c.xi = Eigen::VectorXd::Zero(n);
  c.z.assign(static_cast<std::size_t>(std::max(0, k - 1)), Eigen::VectorXd::Zero(n));
  c.signs.resize(static_cast<std::size_t>(std::max(0, k)));
  for (int l = 1; l <= k; ++l) c.signs[static_cast<std::size_t>(l - 1)] = (l % 2 == 0) ? 1 : -1;
  return c;
}

double TowerConfig::mu(int l) const {
  if (l < 1 || l > k) throw DomainError("TowerConfig::mu: index out of range");
  return static_cast<double>(t[static_cast<std::size_t>(l - 1)] * eps_power(eps, gamma(n, l)));
}

std::vector<double> TowerConfig::mus() const {
  std::vector<double> m;
  for (int l = 1; l <= k; ++l) m.push_back(mu(l));
  return m;
}

Eigen::VectorXd TowerConfig::center(int l) const {
  Eigen::VectorXd c = xi.size() == n ? xi : Eigen::VectorXd::Zero(n);
  for (int j = 2; j <= l; ++j) c += mu(j - 1) * z[static_cast<std::size_t>(j - 2)];
  return c;
}

void TowerConfig::validate() const {
  if (n < 7) throw DomainError("TowerConfig: dimension n must be at least 7");
  if (k < 1) throw DomainError("TowerConfig: bubble count k must be at least 1");
  if (!(eps > 0.0)) throw DomainError("TowerConfig: eps must be positive");
  if (!(A > 1.0)) throw DomainError("TowerConfig: A must exceed 1");
  if (t.size() != static_cast<std::size_t>(k)) throw DomainError("TowerConfig: need k values of t");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] >= 1.0 / A && t[i] <= A))
      throw DomainError("TowerConfig: t_" + std::to_string(i + 1) + " = " + short_num(t[i]) + " outside [1/A, A]");
  }
  if (signs.size() != static_cast<std::size_t>(k)) throw DomainError("TowerConfig: need k signs");
  for (int s : signs)
    if (s != 1 && s != -1) throw DomainError("TowerConfig: signs must be +1 or -1");
  if (z.size() != static_cast<std::size_t>(k - 1)) throw DomainError("TowerConfig: need k-1 offsets z");
  for (const auto& zz : z) {
    if (zz.size() != n) throw DomainError("TowerConfig: offset z has wrong dimension");
    if (zz.norm() > 1.0) throw DomainError("TowerConfig: offsets must satisfy |z| <= 1");
  }
  if (xi.size() != n) throw DomainError("TowerConfig: xi has wrong dimension");
  if (1.0 - xi.norm() < d) throw DomainError("TowerConfig: xi closer than d to the boundary");
  auto m = mus();
  for (int l = 2; l <= k; ++l) {
    if (!(m[static_cast<std::size_t>(l - 1)] < m[static_cast<std::size_t>(l - 2)]))
      throw DomainError("TowerConfig: mu_" + std::to_string(l) + " not below mu_" + std::to_string(l - 1) + " (eps too large)");
  }
  for (int l = 1; l <= k; ++l)
    if (1.0 - center(l).norm() < d) throw DomainError("TowerConfig: center xi_" + std::to_string(l) + " leaves the interior");
}

double tower_value(const TowerConfig& cfg, double r) {
  double s = 0.0;
  for (int l = 1; l <= cfg.k; ++l) s += cfg.sign(l) * projected_bubble_value(Bubble{cfg.mu(l), 0.0, cfg.n}, r);
  return s;
}

RadialField tower_ansatz(const TowerConfig& cfg, const RadialGrid& grid) {
  cfg.validate();
  const double muk = cfg.mu(cfg.k);
  if (grid.r.front() > 0.25 * muk)
    throw DomainError("tower_ansatz: grid too coarse, first node " + short_num(grid.r.front()) +
                      " exceeds mu_k/4 = " + short_num(0.25 * muk));
  RadialField f = RadialField::sample(grid, [&](double r) { return tower_value(cfg, r); });
  f.values.back() = 0.0;
  return f;
}

int AnnulusSet::shell(double r) const {
  for (int l = k(); l >= 2; --l)
    if (r < radii[static_cast<std::size_t>(l - 1)]) return l;
  return 1;
}

AnnulusSet annuli(const TowerConfig& cfg) {
  AnnulusSet a;
  a.mu = cfg.mus();
  a.radii.assign(static_cast<std::size_t>(cfg.k + 1), 0.0);
  a.radii[0] = 1.0;
  for (int l = 2; l <= cfg.k; ++l) {
    double rad = std::sqrt(a.mu[static_cast<std::size_t>(l - 1)] * a.mu[static_cast<std::size_t>(l - 2)]);
    if (!(rad < a.radii[static_cast<std::size_t>(l - 2)]))
      throw DomainError("annuli: radii not nested at l = " + std::to_string(l) + " (eps too large)");
    a.radii[static_cast<std::size_t>(l - 1)] = rad;
  }
  return a;
}

namespace {

double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double log_projected_bubble(int n, double mu, double r) {
  const double lu = -0.5 * (n - 2) * std::log(mu) - 0.5 * (n - 2) * std::log1p(r * r / (mu * mu * a_n(n)));
  const double ratio = U0(n, 1.0 / mu) / U0(n, r / mu);
  return lu + std::log1p(-ratio);
}

}  // namespace

double log_weight_psi(const TowerConfig& cfg, double r) {
  const AnnulusSet A = annuli(cfg);
  const int n = cfg.n;
  const int l = A.shell(r);
  auto lmu = [&](int j) { return std::log(A.mu[static_cast<std::size_t>(j - 1)]); };
  std::vector<double> terms;
  if (l == 1) {
    terms.push_back(0.5 * (n + 2) * lmu(1) - 2.0 * std::log(A.theta(1, r)));
  } else {
    terms.push_back((1.0 - 0.5 * n) * lmu(l - 1) + 2.0 * (lmu(l) - std::log(A.theta(l, r))));
    terms.push_back(std::log(cfg.eps) + (3.0 - 0.5 * n) * lmu(l - 1));
  }
  if (l < cfg.k && A.theta(l + 1, r) <= A.mu[static_cast<std::size_t>(l - 1)]) {
    terms.push_back(2.0 * (std::log(A.theta(l + 1, r)) - lmu(l)) +
                    log_projected_bubble(n, A.mu[static_cast<std::size_t>(l)], r));
  }
  return log_sum_exp(terms);
}

double weight_psi(const TowerConfig& cfg, double r) { return std::exp(log_weight_psi(cfg, r)); }

}  // namespace bt
