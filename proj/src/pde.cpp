#include "bubbletower/pde.hpp"

#include "bubbletower/gamma.hpp"

#include <boost/multiprecision/float128.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace bt {

using Quad = boost::multiprecision::float128;

namespace {

// Finite-volume metrics in quad precision; the sphere area cancels and is dropped.
struct QuadMesh {
  int n = 7;
  std::vector<Quad> r, vol, face;
  Quad expo;  // 4/(n-2)

  explicit QuadMesh(const RadialGrid& g) : n(g.dim) {
    const std::size_t N = g.size();
    r.resize(N);
    for (std::size_t i = 0; i < N; ++i) r[i] = g.r[i];
    std::vector<Quad> m(N + 1);
    m[0] = 0;
    for (std::size_t i = 1; i < N; ++i) m[i] = (r[i - 1] + r[i]) / 2;
    m[N] = 1;
    vol.resize(N);
    face.resize(N - 1);
    for (std::size_t i = 0; i < N; ++i) vol[i] = (pow(m[i + 1], n) - pow(m[i], n)) / n;
    for (std::size_t i = 0; i + 1 < N; ++i) face[i] = pow(m[i + 1], n - 1) / (r[i + 1] - r[i]);
    expo = Quad(4) / Quad(n - 2);
  }
  std::size_t size() const { return r.size(); }
  Quad f(const Quad& u) const { return u == 0 ? Quad(0) : pow(abs(u), expo) * u; }
  Quad fp(const Quad& u) const { return u == 0 ? Quad(0) : (1 + expo) * pow(abs(u), expo); }
};

using QVec = std::vector<Quad>;

// G_i = vol_i F_i for i < N-1; u[N-1] is held at 0.
QVec residual_G(const QuadMesh& M, const QVec& u, const Quad& eps) {
  const std::size_t N = M.size();
  QVec G(N - 1);
  for (std::size_t i = 0; i + 1 < N; ++i) {
    Quad g = -M.face[i] * (u[i + 1] - u[i]);
    if (i > 0) g += M.face[i - 1] * (u[i] - u[i - 1]);
    G[i] = g - M.vol[i] * (eps * u[i] + M.f(u[i]));
  }
  return G;
}

// sup |F| / sup |u|^p.
double scaled_residual(const QuadMesh& M, const QVec& u, const QVec& G) {
  Quad rs = 0, us = 0;
  for (std::size_t i = 0; i < G.size(); ++i) rs = std::max(rs, Quad(abs(G[i] / M.vol[i])));
  for (const Quad& v : u) us = std::max(us, Quad(abs(v)));
  if (us == 0) return static_cast<double>(rs);
  return static_cast<double>(rs / pow(us, 1 + M.expo));
}

// Tridiagonal solve with partial pivoting (row interchanges as in LAPACK gtsv).
bool tridiagonal_solve(QVec dl, QVec d, QVec du, QVec& b) {
  const std::size_t n = d.size();
  if (n == 1) {
    if (d[0] == 0) return false;
    b[0] /= d[0];
    return true;
  }
  QVec du2(n, Quad(0));
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (abs(d[i]) >= abs(dl[i])) {
      if (d[i] == 0) return false;
      const Quad fact = dl[i] / d[i];
      d[i + 1] -= fact * du[i];
      b[i + 1] -= fact * b[i];
    } else {
      const Quad fact = d[i] / dl[i];
      d[i] = dl[i];
      const Quad temp = d[i + 1];
      d[i + 1] = du[i] - fact * temp;
      if (i + 2 < n) {
        du2[i] = du[i + 1];
        du[i + 1] = -fact * du2[i];
      }
      du[i] = temp;
      const Quad tb = b[i];
      b[i] = b[i + 1];
      b[i + 1] = tb - fact * b[i + 1];
    }
  }
  if (d[n - 1] == 0) return false;
  b[n - 1] /= d[n - 1];
  b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
  for (std::size_t i = n - 2; i-- > 0;) b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
  for (const Quad& v : b)
    if (!isfinite(v)) return false;
  return true;
}

// Solves (J + shift * diag(vol)) delta = -G.
bool newton_direction(const QuadMesh& M, const QVec& u, const Quad& eps, const QVec& G, const Quad& shift,
                      QVec& delta) {
  const std::size_t m = G.size();
  QVec dl(m - 1), d(m), du(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    const Quad fin = i ? M.face[i - 1] : Quad(0);
    d[i] = fin + M.face[i] - M.vol[i] * (eps + M.fp(u[i])) + shift * M.vol[i];
    if (i + 1 < m) {
      du[i] = -M.face[i];
      dl[i] = -M.face[i];
    }
  }
  delta.resize(m);
  for (std::size_t i = 0; i < m; ++i) delta[i] = -G[i];
  return tridiagonal_solve(dl, d, du, delta);
}

struct NewtonOutcome {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

NewtonOutcome damped_newton(const QuadMesh& M, QVec& u, const Quad& eps, const PdeOptions& opt,
                            std::vector<double>& history) {
  NewtonOutcome out;
  QVec G = residual_G(M, u, eps);
  double res = scaled_residual(M, u, G);
  history.push_back(res);
  for (int it = 0; it < opt.max_newton; ++it) {
    if (res <= opt.tol) {
      out.converged = true;
      out.residual = res;
      return out;
    }
    QVec delta;
    if (!newton_direction(M, u, eps, G, Quad(0), delta)) break;
    Quad lam = 1;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h, lam /= 2) {
      QVec v = u;
      for (std::size_t i = 0; i < delta.size(); ++i) v[i] += lam * delta[i];
      QVec Gv = residual_G(M, v, eps);
      const double rv = scaled_residual(M, v, Gv);
      if (std::isfinite(rv) && rv < res) {
        u = std::move(v);
        G = std::move(Gv);
        res = rv;
        accepted = true;
        break;
      }
    }
    ++out.iterations;
    history.push_back(res);
    if (!accepted) break;
  }
  out.residual = res;
  out.converged = res <= opt.tol;
  return out;
}

NewtonOutcome pseudo_transient(const QuadMesh& M, QVec& u, const Quad& eps, const PdeOptions& opt,
                               std::vector<double>& history) {
  NewtonOutcome out;
  QVec G = residual_G(M, u, eps);
  double res = scaled_residual(M, u, G);
  Quad shift = 0;
  for (std::size_t i = 0; i < G.size(); ++i) {
    const Quad fin = i ? M.face[i - 1] : Quad(0);
    shift = std::max(shift, Quad((fin + M.face[i]) / M.vol[i]));
  }
  for (int step = 0; step < opt.max_pseudo_steps; ++step) {
    if (res <= opt.tol) {
      out.converged = true;
      break;
    }
    QVec delta;
    if (!newton_direction(M, u, eps, G, shift, delta)) {
      shift *= 4;
      continue;
    }
    QVec v = u;
    for (std::size_t i = 0; i < delta.size(); ++i) v[i] += delta[i];
    QVec Gv = residual_G(M, v, eps);
    const double rv = scaled_residual(M, v, Gv);
    ++out.iterations;
    if (std::isfinite(rv) && rv < res) {
      u = std::move(v);
      G = std::move(Gv);
      res = rv;
      shift /= 2;
      history.push_back(res);
    } else {
      shift *= 4;
      if (shift > Quad(1e300)) break;
    }
  }
  out.residual = res;
  out.converged = res <= opt.tol;
  return out;
}

// Marches the interior equations outward from u_0 = a; returns sign changes over all nodes.
int march(const QuadMesh& M, const Quad& a, const Quad& eps, QVec& u) {
  const std::size_t N = M.size();
  u.assign(N, Quad(0));
  u[0] = a;
  int z = 0;
  for (std::size_t i = 0; i + 1 < N; ++i) {
    const Quad back = i ? M.face[i - 1] * (u[i] - u[i - 1]) : Quad(0);
    u[i + 1] = u[i] + (back - M.vol[i] * (eps * u[i] + M.f(u[i]))) / M.face[i];
    if (!isfinite(u[i + 1])) {
      u.resize(i + 1);
      return z + 1000;
    }
    if ((u[i + 1] > 0) != (u[i] > 0)) ++z;
  }
  return z;
}

// Bisection on log u(0) between k-1 and k sign changes, starting from the seed height.
bool shoot(const QuadMesh& M, const Quad& eps, int k, int sign, double seed_height, int steps, QVec& u) {
  Quad la = log(Quad(std::max(seed_height, 1e-6)));
  const Quad step = Quad(0.05);
  QVec w;
  int z = march(M, exp(la), eps, w);
  Quad lo, hi;
  bool found = false;
  const bool up = z < k;
  for (int s = 0; s < 8000; ++s) {
    const Quad next = up ? la + step : la - step;
    const int zn = march(M, exp(next), eps, w);
    if (up && zn >= k) {
      lo = la;
      hi = next;
      found = true;
      break;
    }
    if (!up && zn < k) {
      lo = next;
      hi = la;
      found = true;
      break;
    }
    la = next;
  }
  if (!found) return false;
  for (int it = 0; it < steps; ++it) {
    const Quad mid = (lo + hi) / 2;
    if (march(M, exp(mid), eps, w) >= k)
      hi = mid;
    else
      lo = mid;
  }
  march(M, exp(lo), eps, u);
  if (u.size() != M.size()) return false;
  for (Quad& v : u) v *= sign;
  u.back() = 0;
  return true;
}

}  // namespace

RadialGrid pde_grid(const TowerConfig& cfg, const PdeOptions& opt) {
  cfg.validate();
  return RadialGrid::log_uniform(cfg.n, cfg.mu(cfg.k) * opt.rmin_factor, opt.per_decade);
}

const char* to_string(SolveStage s) {
  switch (s) {
    case SolveStage::none: return "none";
    case SolveStage::newton: return "newton";
    case SolveStage::pseudo_transient: return "pseudo_transient";
    case SolveStage::shooting: return "shooting";
  }
  return "none";
}

int count_sign_changes(const std::vector<double>& u) {
  int z = 0, last = 0;
  for (std::size_t i = 0; i + 1 < u.size(); ++i) {
    const int s = (u[i] > 0) - (u[i] < 0);
    if (s == 0) continue;
    if (last != 0 && s != last) ++z;
    last = s;
  }
  return z;
}

SolveReport solve_bvp(const TowerConfig& cfg, const RadialGrid& grid, const RadialField& seed, const PdeOptions& opt) {
  if (seed.size() != grid.size()) throw DomainError("solve_bvp: seed is not on the grid");
  if (grid.dim != cfg.n) throw DomainError("solve_bvp: grid dimension differs from n");
  const QuadMesh M(grid);
  const Quad eps = cfg.eps;
  const std::size_t N = grid.size();
  SolveReport rep;
  rep.eps = cfg.eps;

  auto finish = [&](const QVec& u, SolveStage stage, const NewtonOutcome& o) {
    std::vector<double> v(N);
    for (std::size_t i = 0; i < N; ++i) v[i] = static_cast<double>(u[i]);
    rep.solution = RadialField(grid, v);
    rep.final_residual = o.residual;
    rep.sign_changes = count_sign_changes(v);
    rep.stage = stage;
    rep.converged = true;
  };
  auto accept = [&](const QVec& u, const NewtonOutcome& o) {
    if (!o.converged) return false;
    std::vector<double> v(N);
    for (std::size_t i = 0; i < N; ++i) v[i] = static_cast<double>(u[i]);
    bool zero = std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
    return zero || count_sign_changes(v) == cfg.k - 1;
  };

  QVec u0(N);
  for (std::size_t i = 0; i < N; ++i) u0[i] = seed[i];
  u0.back() = 0;

  QVec u = u0;
  NewtonOutcome o = damped_newton(M, u, eps, opt, rep.residual_history);
  rep.newton_iterations += o.iterations;
  if (accept(u, o)) {
    finish(u, SolveStage::newton, o);
    return rep;
  }
  u = u0;
  o = pseudo_transient(M, u, eps, opt, rep.residual_history);
  rep.newton_iterations += o.iterations;
  if (o.converged || o.residual < 1e-3) {
    NewtonOutcome p = damped_newton(M, u, eps, opt, rep.residual_history);
    rep.newton_iterations += p.iterations;
    if (accept(u, p)) {
      finish(u, SolveStage::pseudo_transient, p);
      return rep;
    }
  }
  if (opt.allow_shooting && std::abs(seed[0]) > 0.0) {
    const int sign = seed[0] > 0 ? 1 : -1;
    if (shoot(M, eps, cfg.k, sign, std::abs(seed[0]), opt.bisection_steps, u)) {
      o = damped_newton(M, u, eps, opt, rep.residual_history);
      rep.newton_iterations += o.iterations;
      if (accept(u, o)) {
        finish(u, SolveStage::shooting, o);
        return rep;
      }
    }
  }
  std::vector<double> v(N);
  for (std::size_t i = 0; i < N; ++i) v[i] = static_cast<double>(u[i]);
  rep.solution = RadialField(grid, v);
  rep.final_residual = o.residual;
  rep.sign_changes = count_sign_changes(v);
  rep.message = "solve_bvp: no stage reached the tolerance with " + std::to_string(cfg.k - 1) +
                " sign changes (last residual " + short_num(o.residual) + ")";
  return rep;
}

std::vector<SolveReport> continue_in_eps(const TowerConfig& tmpl, const std::vector<double>& eps_list, SeedMode mode,
                                         const PdeOptions& opt) {
  for (std::size_t i = 1; i < eps_list.size(); ++i)
    if (!(eps_list[i] < eps_list[i - 1])) throw DomainError("continue_in_eps: eps list must be strictly descending");
  std::vector<SolveReport> out;
  for (double eps : eps_list) {
    TowerConfig cfg = tmpl;
    cfg.eps = eps;
    SolveReport rep;
    try {
      const RadialGrid grid = pde_grid(cfg, opt);
      RadialField seed = tower_ansatz(cfg, grid);
      if (mode == SeedMode::previous && !out.empty()) {
        const RadialField& prev = out.back().solution;
        seed = RadialField::sample(grid, [&](double r) { return prev.interpolate(r); });
        seed.values.back() = 0.0;
      }
      rep = solve_bvp(cfg, grid, seed, opt);
      if (rep.converged && cfg.k >= 1) rep.extracted_mu = extract_scales(rep.solution, cfg.k);
    } catch (const std::exception& e) {
      rep.eps = eps;
      rep.converged = false;
      rep.message = e.what();
    }
    out.push_back(rep);
    if (!rep.converged) break;
  }
  return out;
}

namespace {

double projected_bubble(int n, double mu, double r) {
  const Bubble b{mu, 0.0, n};
  return bubble_value(b, r) - bubble_value(b, 1.0);
}

}  // namespace

std::vector<ScaleEstimate> extract_scales(const RadialField& u, int k) {
  const auto& r = u.grid.r;
  const int n = u.grid.dim;
  const std::size_t N = u.size();
  if (k < 1) throw DomainError("extract_scales: k must be at least 1");
  // Sign-consistent segments and their extrema.
  struct Peak {
    std::size_t idx;
    int sign;
  };
  std::vector<Peak> peaks;
  for (std::size_t i = 0; i + 1 < N; ++i) {
    const int s = (u[i] > 0) - (u[i] < 0);
    if (s == 0) continue;
    if (peaks.empty() || peaks.back().sign != s) {
      peaks.push_back({i, s});
    } else if (std::abs(u[i]) > std::abs(u[peaks.back().idx])) {
      peaks.back().idx = i;
    }
  }
  if (peaks.empty()) throw DomainError("extract_scales: u has no extrema");
  if (static_cast<int>(peaks.size()) != k)
    throw DomainError("extract_scales: found " + std::to_string(peaks.size()) + " alternating extrema, expected " +
                      std::to_string(k));

  // peaks[0] is the innermost bubble (l = k).
  std::vector<ScaleEstimate> est(static_cast<std::size_t>(k));
  std::vector<int> kappa(static_cast<std::size_t>(k));
  for (int l = 1; l <= k; ++l) {
    const Peak& pk = peaks[static_cast<std::size_t>(k - l)];
    ScaleEstimate& e = est[static_cast<std::size_t>(l - 1)];
    kappa[static_cast<std::size_t>(l - 1)] = pk.sign;
    const std::size_t i = pk.idx;
    double rp = r[i], vp = std::abs(u[i]);
    if (i > 0 && i + 1 < N) {
      // Parabola through the three bracketing nodes.
      const double x0 = r[i - 1], x1 = r[i], x2 = r[i + 1];
      const double y0 = std::abs(u[i - 1]), y1 = std::abs(u[i]), y2 = std::abs(u[i + 1]);
      const double d0 = (y1 - y0) / (x1 - x0), d1 = (y2 - y1) / (x2 - x1);
      const double a = (d1 - d0) / (x2 - x0);
      if (a < 0.0) {
        const double b = d0 - a * (x0 + x1);
        const double xv = -b / (2.0 * a);
        if (xv > x0 && xv < x2) {
          rp = xv;
          vp = y1 + d0 * (xv - x1) + a * (xv - x0) * (xv - x1);
        }
      }
    }
    if (i == 0) rp = 0.0;
    e.peak_radius = rp;
    e.peak_value = pk.sign * vp;
    e.mu_height = std::pow(vp, -2.0 / (n - 2));
  }

  // Fit windows around each extremum.
  std::vector<std::size_t> rows;
  for (int l = 1; l <= k; ++l) {
    const ScaleEstimate& e = est[static_cast<std::size_t>(l - 1)];
    const double lo = e.peak_radius > 0 ? e.peak_radius / 3.0 : 0.0;
    const double hi = e.peak_radius > 0 ? 3.0 * e.peak_radius : 3.0 * e.mu_height;
    for (std::size_t i = 0; i + 1 < N; ++i)
      if (r[i] >= lo && r[i] <= hi) rows.push_back(i);
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  const int m = static_cast<int>(rows.size());

  Eigen::VectorXd x(k);
  for (int l = 0; l < k; ++l) x(l) = std::log(est[static_cast<std::size_t>(l)].mu_height);
  auto resid = [&](const Eigen::VectorXd& lx) {
    Eigen::VectorXd res(m);
    for (int j = 0; j < m; ++j) {
      const std::size_t i = rows[static_cast<std::size_t>(j)];
      double model = 0.0;
      for (int l = 0; l < k; ++l) model += kappa[static_cast<std::size_t>(l)] * projected_bubble(n, std::exp(lx(l)), r[i]);
      res(j) = (model - u[i]) / std::abs(u[i]);
    }
    return res;
  };
  Eigen::VectorXd res = resid(x);
  double lambda = 1e-3;
  for (int it = 0; it < 100; ++it) {
    Eigen::MatrixXd J(m, k);
    for (int l = 0; l < k; ++l) {
      Eigen::VectorXd xp = x, xm = x;
      xp(l) += 1e-6;
      xm(l) -= 1e-6;
      J.col(l) = (resid(xp) - resid(xm)) / 2e-6;
    }
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * res;
    bool improved = false;
    for (int t = 0; t < 20; ++t) {
      Eigen::MatrixXd Aug = JtJ;
      Aug.diagonal() += lambda * JtJ.diagonal();
      const Eigen::VectorXd step = Aug.ldlt().solve(-g);
      const Eigen::VectorXd xn = x + step;
      const Eigen::VectorXd rn = resid(xn);
      if (rn.allFinite() && rn.squaredNorm() < res.squaredNorm()) {
        const double gain = res.squaredNorm() - rn.squaredNorm();
        x = xn;
        res = rn;
        lambda = std::max(lambda / 10.0, 1e-12);
        improved = gain > 1e-14 * res.squaredNorm();
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  const double rms = std::sqrt(res.squaredNorm() / std::max(1, m));
  for (int l = 0; l < k; ++l) {
    est[static_cast<std::size_t>(l)].mu = std::exp(x(l));
    est[static_cast<std::size_t>(l)].fit_residual = rms;
  }
  return est;
}

ScalingReport scaling_regression(const std::vector<SolveReport>& reports, int n, int k) {
  std::vector<const SolveReport*> ok;
  for (const auto& r : reports)
    if (r.converged && static_cast<int>(r.extracted_mu.size()) == k) ok.push_back(&r);
  if (ok.size() < 4) throw DomainError("scaling_regression: need at least 4 converged reports, have " +
                                       std::to_string(ok.size()));
  double emin = ok.front()->eps, emax = emin;
  for (const auto* r : ok) {
    emin = std::min(emin, r->eps);
    emax = std::max(emax, r->eps);
  }
  if (emax / emin < 8.0 * (1.0 - 1e-12)) throw DomainError("scaling_regression: eps samples must span a factor 8");
  ScalingReport out;
  for (int l = 1; l <= k; ++l) {
    ScalingReport::Bubble b;
    b.l = l;
    for (const auto* r : ok) {
      b.eps.push_back(r->eps);
      b.mu.push_back(r->extracted_mu[static_cast<std::size_t>(l - 1)].mu);
    }
    b.slope = loglog_slope(b.eps, b.mu);
    b.predicted = to_double(gamma(n, l));
    b.rel_error = std::abs(b.slope - b.predicted) / b.predicted;
    out.bubbles.push_back(b);
  }
  return out;
}

double energy_identity_defect(const RadialField& u, double eps) {
  const RadialGrid& g = u.grid;
  const int n = g.dim;
  const double q = crit_exponent(n);
  long double lhs = 0.0L, rhs = 0.0L;
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    const long double d = static_cast<long double>(u[i + 1]) - u[i];
    lhs += g.face[i] * d * d;
  }
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    lhs -= static_cast<long double>(g.vol[i]) * eps * u[i] * u[i];
    rhs += static_cast<long double>(g.vol[i]) * std::pow(std::abs(u[i]), q);
  }
  if (rhs == 0.0L) return static_cast<double>(std::abs(lhs));
  return static_cast<double>(std::abs(lhs - rhs) / rhs);
}

double jacobian_asymmetry(const RadialField& u, double eps) {
  const RadialGrid& g = u.grid;
  const std::size_t m = g.size() - 1;
  // Rows of the Jacobian of F = G / vol, weighted back by vol.
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double fin = i ? g.face[i - 1] : 0.0;
    const double diag = (fin + g.face[i]) / g.vol[i] - eps - f_nl_prime(g.dim, u[i]);
    scale = std::max(scale, std::abs(diag * g.vol[i]));
    if (i + 1 < m) {
      const double up = -g.face[i] / g.vol[i];          // J(i, i+1)
      const double down = -g.face[i] / g.vol[i + 1];    // J(i+1, i)
      worst = std::max(worst, std::abs(up * g.vol[i] - down * g.vol[i + 1]));
    }
  }
  return scale > 0 ? worst / scale : 0.0;
}

double discrete_residual(const RadialField& u, double eps) {
  const QuadMesh M(u.grid);
  QVec q(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) q[i] = u[i];
  return scaled_residual(M, q, residual_G(M, q, Quad(eps)));
}

}  // namespace bt
