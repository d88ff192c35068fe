#include "bubbletower/reduced_solver.hpp"

#include "bubbletower/profiles.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace bt {

ReducedPoint ReducedPoint::make(int n, int k, std::vector<double> t) {
  ReducedPoint p;
  p.n = n;
  p.k = k;
  p.t = std::move(t);
  p.xi = Eigen::VectorXd::Zero(n);
  p.z.assign(static_cast<std::size_t>(std::max(0, k - 1)), Eigen::VectorXd::Zero(n));
  for (int l = 1; l <= k; ++l) p.signs.push_back(l % 2 == 0 ? 1 : -1);
  return p;
}

std::vector<double> explicit_t0(int n, const ReducedCoefficients& c, double H00, int k) {
  if (n < 7) throw DomainError("explicit_t0: requires n >= 7");
  if (!(c.D1 > 0 && c.D2 > 0 && c.D3 > 0 && H00 > 0)) throw DomainError("explicit_t0: constants must be positive");
  std::vector<double> t;
  t.push_back(std::pow(2.0 * c.D1 / ((n - 2) * c.D2 * H00), 1.0 / (n - 4)));
  for (int l = 2; l <= k; ++l)
    t.push_back(std::pow(4.0 * c.D1 / ((n - 2) * c.D3) * std::pow(t.back(), 0.5 * (n - 2)), 2.0 / (n - 6)));
  return t;
}

namespace {

void check_point(const ReducedPoint& p) {
  if (p.t.size() != static_cast<std::size_t>(p.k) || p.z.size() != static_cast<std::size_t>(p.k - 1) ||
      p.xi.size() != p.n || p.signs.size() != static_cast<std::size_t>(p.k))
    throw DomainError("reduced system: point has inconsistent sizes");
}

// -kappa_{l-1} kappa_l: +1 for alternating signs.
double interaction_sign(const ReducedPoint& p, int l) {
  return -static_cast<double>(p.signs[static_cast<std::size_t>(l - 2)] * p.signs[static_cast<std::size_t>(l - 1)]);
}

}  // namespace

Eigen::VectorXd reduced_F(const ReducedPoint& p, const ReducedCoefficients& c, const RobinResult& robin) {
  check_point(p);
  const int n = p.n, k = p.k;
  Eigen::VectorXd F(k * (n + 1));
  const double t1 = p.t[0];
  F(0) = -4.0 * c.D1 / (n - 2) * t1 * t1 + 2.0 * c.D2 * std::pow(t1, n - 2) * robin.value;
  for (int j = 0; j < n; ++j) F(1 + j) = n * c.D2 * std::pow(t1, n - 1) * robin.gradient(j);
  for (int l = 2; l <= k; ++l) {
    const int row = (l - 1) * (n + 1);
    const double tl = p.t[static_cast<std::size_t>(l - 1)], tp = p.t[static_cast<std::size_t>(l - 2)];
    const Eigen::VectorXd& z = p.z[static_cast<std::size_t>(l - 2)];
    const double s = interaction_sign(p, l);
    F(row) = -4.0 * c.D1 / (n - 2) * tl * tl + s * c.D3 * std::pow(tl / tp, 0.5 * (n - 2)) * U0(n, z.norm());
    Eigen::VectorXd g = U0_gradient(n, z);
    for (int j = 0; j < n; ++j) F(row + 1 + j) = s * n * c.D3 * std::pow(tl / tp, 0.5 * n) * g(j);
  }
  return F;
}

Eigen::MatrixXd reduced_jacobian(const ReducedPoint& p, const ReducedCoefficients& c, const RobinResult& robin) {
  check_point(p);
  const int n = p.n, k = p.k;
  const int dim = k * (n + 1);
  const int xi0 = k;                 // column of xi_1
  auto zcol = [&](int l) { return k + n + (l - 2) * n; };
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(dim, dim);
  const double t1 = p.t[0];
  J(0, 0) = -8.0 * c.D1 / (n - 2) * t1 + 2.0 * (n - 2) * c.D2 * std::pow(t1, n - 3) * robin.value;
  for (int i = 0; i < n; ++i) J(0, xi0 + i) = 2.0 * c.D2 * std::pow(t1, n - 2) * robin.gradient(i);
  for (int j = 0; j < n; ++j) {
    J(1 + j, 0) = n * (n - 1) * c.D2 * std::pow(t1, n - 2) * robin.gradient(j);
    for (int i = 0; i < n; ++i) J(1 + j, xi0 + i) = n * c.D2 * std::pow(t1, n - 1) * robin.hessian(j, i);
  }
  for (int l = 2; l <= k; ++l) {
    const int row = (l - 1) * (n + 1);
    const double tl = p.t[static_cast<std::size_t>(l - 1)], tp = p.t[static_cast<std::size_t>(l - 2)];
    const Eigen::VectorXd& z = p.z[static_cast<std::size_t>(l - 2)];
    const double s = interaction_sign(p, l);
    const double q0 = std::pow(tl / tp, 0.5 * (n - 2)), q1 = std::pow(tl / tp, 0.5 * n);
    const double u = U0(n, z.norm());
    const Eigen::VectorXd g = U0_gradient(n, z);
    const Eigen::MatrixXd h = U0_hessian(n, z);
    J(row, l - 1) = -8.0 * c.D1 / (n - 2) * tl + s * c.D3 * 0.5 * (n - 2) * q0 / tl * u;
    J(row, l - 2) = -s * c.D3 * 0.5 * (n - 2) * q0 / tp * u;
    for (int i = 0; i < n; ++i) J(row, zcol(l) + i) = s * c.D3 * q0 * g(i);
    for (int j = 0; j < n; ++j) {
      J(row + 1 + j, l - 1) = s * n * c.D3 * 0.5 * n * q1 / tl * g(j);
      J(row + 1 + j, l - 2) = -s * n * c.D3 * 0.5 * n * q1 / tp * g(j);
      for (int i = 0; i < n; ++i) J(row + 1 + j, zcol(l) + i) = s * n * c.D3 * q1 * h(j, i);
    }
  }
  return J;
}

Eigen::VectorXd reduced_row_scale(const ReducedPoint& p, const ReducedCoefficients& c, const RobinResult& robin) {
  check_point(p);
  const int n = p.n, k = p.k;
  Eigen::VectorXd s(k * (n + 1));
  const double t1 = p.t[0];
  s(0) = 4.0 * c.D1 / (n - 2) * t1 * t1;
  for (int j = 0; j < n; ++j) s(1 + j) = n * c.D2 * std::pow(t1, n - 1) * robin.value;
  for (int l = 2; l <= k; ++l) {
    const int row = (l - 1) * (n + 1);
    const double tl = p.t[static_cast<std::size_t>(l - 1)], tp = p.t[static_cast<std::size_t>(l - 2)];
    s(row) = 4.0 * c.D1 / (n - 2) * tl * tl;
    for (int j = 0; j < n; ++j) s(row + 1 + j) = c.D3 * std::pow(tl / tp, 0.5 * n);
  }
  return s;
}

namespace {

bool inside(const ReducedPoint& p, const DomainSpec& dom, const ReducedNewtonOptions& opt) {
  for (double t : p.t)
    if (!(t >= 1.0 / opt.A && t <= opt.A)) return false;
  for (const auto& z : p.z)
    if (z.norm() > 1.0) return false;
  return dom.margin(p.xi) >= opt.margin;
}

}  // namespace

namespace {

// Rows are divided by t-monomials so the j = 0 rows become monotone in log t_l:
// row (l, 0) by t_l^2, row (1, j) by t_1^{n-1}, row (l, j) by (t_l/t_{l-1})^{n/2}.
Eigen::MatrixXd row_weight_exponents(int n, int k) {
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(k * (n + 1), k);
  for (int l = 1; l <= k; ++l) {
    const int row = (l - 1) * (n + 1);
    E(row, l - 1) = 2.0;
    for (int j = 1; j <= n; ++j) {
      if (l == 1) {
        E(row + j, 0) = n - 1;
      } else {
        E(row + j, l - 1) = 0.5 * n;
        E(row + j, l - 2) = -0.5 * n;
      }
    }
  }
  return E;
}

Eigen::VectorXd log_t(const ReducedPoint& p) {
  Eigen::VectorXd v(p.k);
  for (int l = 0; l < p.k; ++l) v(l) = std::log(p.t[static_cast<std::size_t>(l)]);
  return v;
}

}  // namespace

ReducedPoint newton_reduced(const ReducedPoint& seed, const ReducedCoefficients& c, const DomainSpec& dom,
                            const ReducedNewtonOptions& opt, const CollocationGreen* solver) {
  check_point(seed);
  if (!inside(seed, dom, opt)) throw DomainError("newton_reduced: seed outside the admissible parameter set");
  const int n = seed.n, k = seed.k;
  ReducedPoint p = seed;
  RobinResult R = robin_diag(dom, p.xi, solver);
  const Eigen::MatrixXd E = row_weight_exponents(n, k);
  // G = S F / w(t), normalized so that G = S F at the seed.
  const Eigen::VectorXd S =
      reduced_row_scale(seed, c, R).cwiseInverse().cwiseProduct((E * log_t(seed)).array().exp().matrix());
  auto weighted = [&](const ReducedPoint& q, const RobinResult& Rq) -> Eigen::VectorXd {
    return S.cwiseProduct(reduced_F(q, c, Rq)).cwiseProduct((-(E * log_t(q)).array()).exp().matrix());
  };
  // Line search on the Euclidean norm, stopping test on the sup norm.
  Eigen::VectorXd G = weighted(p, R);
  double m = G.cwiseAbs().maxCoeff(), m2 = G.norm();
  int it = 0;
  while (m > opt.tol) {
    if (it >= opt.max_iterations) throw NumericalError("newton_reduced: maximum iterations reached");
    // Newton in (log t, xi, z).
    const Eigen::VectorXd winv = (-(E * log_t(p)).array()).exp().matrix();
    Eigen::MatrixXd J = (S.cwiseProduct(winv)).asDiagonal() * reduced_jacobian(p, c, R);
    for (int l = 0; l < k; ++l) J.col(l) = J.col(l) * p.t[static_cast<std::size_t>(l)] - G.cwiseProduct(E.col(l));
    Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (!lu.isInvertible()) throw NumericalError("newton_reduced: singular Jacobian (degenerate critical point)");
    Eigen::VectorXd d = lu.solve(-G);
    double lam = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h, lam *= 0.5) {
      ReducedPoint q = p;
      for (int l = 0; l < k; ++l) q.t[static_cast<std::size_t>(l)] *= std::exp(lam * d(l));
      q.xi += lam * d.segment(k, n);
      for (int l = 2; l <= k; ++l) q.z[static_cast<std::size_t>(l - 2)] += lam * d.segment(k + n + (l - 2) * n, n);
      if (!inside(q, dom, opt)) continue;
      RobinResult Rq = robin_diag(dom, q.xi, solver);
      const Eigen::VectorXd Gq = weighted(q, Rq);
      if (Gq.norm() < m2) {
        p = q;
        R = Rq;
        G = Gq;
        m = Gq.cwiseAbs().maxCoeff();
        m2 = Gq.norm();
        accepted = true;
        break;
      }
    }
    if (!accepted) throw NumericalError("newton_reduced: step halving failed to reduce the residual");
    ++it;
  }
  p.residual = reduced_F(p, c, R);
  p.scaled_residual = m;
  p.iterations = it;
  Eigen::MatrixXd J = reduced_row_scale(p, c, R).cwiseInverse().asDiagonal() * reduced_jacobian(p, c, R);
  for (int l = 0; l < k; ++l) J.col(l) *= p.t[static_cast<std::size_t>(l)];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
  const auto& sv = svd.singularValues();
  p.jacobian_condition = sv(sv.size() - 1) > 0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
  return p;
}

}  // namespace bt
