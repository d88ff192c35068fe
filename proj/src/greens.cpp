#include "bubbletower/greens.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace bt {

DomainSpec DomainSpec::unit_ball(int n) {
  DomainSpec d;
  d.kind = Kind::unit_ball;
  d.dim = n;
  return d;
}

DomainSpec DomainSpec::star_shaped(int n, std::function<double(const Eigen::VectorXd&)> rho) {
  DomainSpec d;
  d.kind = Kind::star_shaped;
  d.dim = n;
  d.rho = std::move(rho);
  return d;
}

double DomainSpec::radius(const Eigen::VectorXd& dir) const {
  if (kind == Kind::unit_ball || !rho) return 1.0;
  double r = rho(dir);
  if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("DomainSpec: boundary radius must be positive");
  return r;
}

double DomainSpec::margin(const Eigen::VectorXd& x) const {
  const double nx = x.norm();
  if (nx == 0.0) return 1.0;
  return 1.0 - nx / radius(x / nx);
}

DomainSpec load_boundary_table(const std::string& path, int n) {
  std::ifstream in(path);
  if (!in) throw DomainError("load_boundary_table: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::vector<double> v;
    double x;
    while (ss >> x) v.push_back(x);
    if (v.empty()) continue;
    if (v.size() != static_cast<std::size_t>(n + 1))
      throw DomainError("load_boundary_table: expected " + std::to_string(n + 1) + " numbers per line");
    rows.push_back(v);
  }
  if (rows.size() < static_cast<std::size_t>(2 * n)) throw DomainError("load_boundary_table: too few directions");
  DomainSpec d;
  d.kind = DomainSpec::Kind::star_shaped;
  d.dim = n;
  d.table_dirs.resize(static_cast<Eigen::Index>(rows.size()), n);
  d.table_rho.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Eigen::VectorXd u(n);
    for (int j = 0; j < n; ++j) u(j) = rows[i][static_cast<std::size_t>(j)];
    if (!(u.norm() > 0)) throw DomainError("load_boundary_table: zero direction");
    d.table_dirs.row(static_cast<Eigen::Index>(i)) = (u / u.norm()).transpose();
    double rho = rows[i][static_cast<std::size_t>(n)];
    if (!(rho > 0)) throw DomainError("load_boundary_table: radius must be positive");
    d.table_rho(static_cast<Eigen::Index>(i)) = rho;
  }
  Eigen::MatrixXd dirs = d.table_dirs;
  Eigen::VectorXd rho = d.table_rho;
  d.rho = [dirs, rho](const Eigen::VectorXd& u) {
    Eigen::VectorXd dist = (dirs.rowwise() - u.transpose()).rowwise().norm();
    const int K = std::min<int>(8, static_cast<int>(dist.size()));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(dist.size()));
    for (Eigen::Index i = 0; i < dist.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
    std::partial_sort(idx.begin(), idx.begin() + K, idx.end(),
                      [&](Eigen::Index a, Eigen::Index b) { return dist(a) < dist(b); });
    double wsum = 0, vsum = 0;
    for (int k = 0; k < K; ++k) {
      double dk = dist(idx[static_cast<std::size_t>(k)]);
      if (dk < 1e-14) return rho(idx[static_cast<std::size_t>(k)]);
      double w = 1.0 / (dk * dk);
      wsum += w;
      vsum += w * rho(idx[static_cast<std::size_t>(k)]);
    }
    return vsum / wsum;
  };
  return d;
}

double fundamental_solution(int n, double dist) {
  return std::pow(dist, 2 - n) / ((n - 2) * sphere_area(n));
}

namespace {

void check_in_ball(const Eigen::VectorXd& x, const char* what) {
  if (!(x.norm() < 1.0)) throw DomainError(std::string("ball_green: ") + what + " not in the open unit ball");
}

}  // namespace

double ball_regular_part(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int n) {
  const double q = 1.0 - 2.0 * x.dot(y) + x.squaredNorm() * y.squaredNorm();
  return std::pow(q, 0.5 * (2 - n)) / ((n - 2) * sphere_area(n));
}

double ball_green(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int n) {
  if (x.size() != n || y.size() != n) throw DomainError("ball_green: points have wrong dimension");
  check_in_ball(x, "x");
  check_in_ball(y, "y");
  const double d = (x - y).norm();
  if (d == 0.0) throw DomainError("ball_green: x = y");
  return fundamental_solution(n, d) - ball_regular_part(x, y, n);
}

Eigen::MatrixXd sphere_directions(int n, int count, unsigned seed, int repulsion_steps) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N01(0.0, 1.0);
  Eigen::MatrixXd X(count, n);
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < n; ++j) X(i, j) = N01(rng);
    X.row(i).normalize();
  }
  for (int step = 0; step < repulsion_steps; ++step) {
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(count, n);
    double dmin = 2.0;
    for (int i = 0; i < count; ++i) {
      for (int j = i + 1; j < count; ++j) {
        Eigen::VectorXd d = (X.row(i) - X.row(j)).transpose();
        double r = d.norm();
        dmin = std::min(dmin, r);
        Eigen::VectorXd f = d / std::pow(r, n + 1);
        F.row(i) += f.transpose();
        F.row(j) -= f.transpose();
      }
    }
    double fmax = 0.0;
    for (int i = 0; i < count; ++i) {
      F.row(i) -= F.row(i).dot(X.row(i)) * X.row(i);
      fmax = std::max(fmax, F.row(i).norm());
    }
    if (!(fmax > 0.0)) break;
    const double h = 0.2 * dmin / fmax;
    for (int i = 0; i < count; ++i) {
      X.row(i) += h * F.row(i);
      X.row(i).normalize();
    }
  }
  return X;
}

CollocationGreen::CollocationGreen(const DomainSpec& dom, const CollocationOptions& opt) : dom_(dom), opt_(opt) {
  const int n = dom.dim;
  if (n < 3) throw DomainError("CollocationGreen: dimension must be at least 3");
  auto place = [&](const Eigen::MatrixXd& U, double scale) {
    Eigen::MatrixXd P(U.rows(), n);
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
      Eigen::VectorXd u = U.row(i).transpose();
      P.row(i) = (scale * dom_.radius(u) * u).transpose();
    }
    return P;
  };
  sources_ = place(sphere_directions(n, opt.sources, opt.seed, opt.repulsion_steps), opt.dilation);
  if (dom.table_dirs.rows() > 0) {
    collocation_.resize(dom.table_dirs.rows(), n);
    for (Eigen::Index i = 0; i < dom.table_dirs.rows(); ++i)
      collocation_.row(i) = dom.table_rho(i) * dom.table_dirs.row(i);
  } else {
    collocation_ = place(sphere_directions(n, opt.collocation, opt.seed + 1, opt.repulsion_steps), 1.0);
  }
  check_ = place(sphere_directions(n, opt.check_points, opt.seed + 2, 0), 1.0);

  const Eigen::Index m = basis_row(Eigen::VectorXd::Zero(n)).size();
  if (collocation_.rows() < m) throw DomainError("CollocationGreen: fewer collocation points than unknowns");
  Eigen::MatrixXd A(collocation_.rows(), m);
  for (Eigen::Index i = 0; i < collocation_.rows(); ++i) A.row(i) = basis_row(collocation_.row(i).transpose()).transpose();
  col_scale_.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    double s = A.col(j).cwiseAbs().maxCoeff();
    col_scale_(j) = s > 0 ? 1.0 / s : 1.0;
  }
  A = A * col_scale_.asDiagonal();
  qr_.compute(A);
  Eigen::VectorXd diag = qr_.matrixQR().diagonal().cwiseAbs();
  const double dmax = diag.maxCoeff(), dmin = diag.minCoeff();
  cond_ = dmin > 0 ? dmax / dmin : std::numeric_limits<double>::infinity();
  if (!(cond_ < opt.condition_limit))
    throw NumericalError("CollocationGreen: collocation system ill-conditioned (condition estimate " +
                         short_num(cond_) + ")");
}

Eigen::VectorXd CollocationGreen::basis_row(const Eigen::VectorXd& x) const {
  const int n = dom_.dim;
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(sources_.rows()) + 64);
  for (Eigen::Index j = 0; j < sources_.rows(); ++j)
    v.push_back(fundamental_solution(n, (x - sources_.row(j).transpose()).norm()));
  if (opt_.poly_degree >= 0) v.push_back(1.0);
  if (opt_.poly_degree >= 1)
    for (int i = 0; i < n; ++i) v.push_back(x(i));
  if (opt_.poly_degree >= 2) {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) v.push_back(x(i) * x(j));
    for (int i = 1; i < n; ++i) v.push_back(x(i) * x(i) - x(0) * x(0));
  }
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd CollocationGreen::basis_gradient(const Eigen::VectorXd& x) const {
  const int n = dom_.dim;
  const double om = sphere_area(n);
  std::vector<Eigen::VectorXd> cols;
  for (Eigen::Index j = 0; j < sources_.rows(); ++j) {
    Eigen::VectorXd d = x - sources_.row(j).transpose();
    cols.push_back(-d / (om * std::pow(d.norm(), n)));
  }
  if (opt_.poly_degree >= 0) cols.push_back(Eigen::VectorXd::Zero(n));
  if (opt_.poly_degree >= 1)
    for (int i = 0; i < n; ++i) cols.push_back(Eigen::VectorXd::Unit(n, i));
  if (opt_.poly_degree >= 2) {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
        g(i) = x(j);
        g(j) = x(i);
        cols.push_back(g);
      }
    for (int i = 1; i < n; ++i) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
      g(i) = 2 * x(i);
      g(0) = -2 * x(0);
      cols.push_back(g);
    }
  }
  Eigen::MatrixXd G(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) G.col(static_cast<Eigen::Index>(j)) = cols[j];
  return G;
}

Eigen::VectorXd CollocationGreen::coefficients(const Eigen::VectorXd& y) const {
  const int n = dom_.dim;
  Eigen::VectorXd b(collocation_.rows());
  for (Eigen::Index i = 0; i < collocation_.rows(); ++i)
    b(i) = fundamental_solution(n, (collocation_.row(i).transpose() - y).norm());
  return col_scale_.cwiseProduct(qr_.solve(b));
}

double CollocationGreen::regular_part(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  return basis_row(x).dot(coefficients(y));
}

double CollocationGreen::green(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  const double d = (x - y).norm();
  if (d == 0.0) throw DomainError("green: x = y");
  return fundamental_solution(dom_.dim, d) - regular_part(x, y);
}

double CollocationGreen::boundary_accuracy(const Eigen::VectorXd& y) const {
  Eigen::VectorXd c = coefficients(y);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < check_.rows(); ++i) {
    Eigen::VectorXd x = check_.row(i).transpose();
    worst = std::max(worst, std::abs(fundamental_solution(dom_.dim, (x - y).norm()) - basis_row(x).dot(c)));
  }
  return 2.0 * worst;
}

RobinResult CollocationGreen::robin(const Eigen::VectorXd& xi) const {
  const int n = dom_.dim;
  auto grad_at = [&](const Eigen::VectorXd& p, double* value) {
    Eigen::VectorXd c = coefficients(p);
    if (value) *value = basis_row(p).dot(c);
    // d/dp [row(p) . A^+ b(p)] = grad row(p) c + row(p) A^+ db/dp.
    Eigen::VectorXd g = basis_gradient(p) * c;
    const double om = sphere_area(n);
    Eigen::MatrixXd db(collocation_.rows(), n);
    for (Eigen::Index i = 0; i < collocation_.rows(); ++i) {
      Eigen::VectorXd d = collocation_.row(i).transpose() - p;
      db.row(i) = (d / (om * std::pow(d.norm(), n))).transpose();
    }
    Eigen::MatrixXd dc = col_scale_.asDiagonal() * qr_.solve(db);
    g += (basis_row(p).transpose() * dc).transpose();
    return g;
  };
  RobinResult res;
  res.gradient = grad_at(xi, &res.value);
  const double h = 1e-4;
  res.hessian.resize(n, n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Unit(n, j) * h;
    res.hessian.col(j) = (grad_at(xi + e, nullptr) - grad_at(xi - e, nullptr)) / (2 * h);
  }
  res.hessian = 0.5 * (res.hessian + res.hessian.transpose()).eval();
  res.condition = boundary_accuracy(xi);
  return res;
}

RobinResult robin_diag(const DomainSpec& dom, const Eigen::VectorXd& xi, const CollocationGreen* solver) {
  const int n = dom.dim;
  if (xi.size() != n) throw DomainError("robin_diag: point has wrong dimension");
  if (!(dom.margin(xi) > 0.0)) throw DomainError("robin_diag: point not interior");
  if (dom.kind == DomainSpec::Kind::unit_ball) {
    const double q = xi.squaredNorm();
    const double c = 1.0 / ((n - 2) * sphere_area(n));
    RobinResult r;
    r.value = c * std::pow(1.0 - q, 2 - n);
    r.gradient = c * (n - 2) * std::pow(1.0 - q, 1 - n) * 2.0 * xi;
    r.hessian = c * (n - 2) *
                (2.0 * std::pow(1.0 - q, 1 - n) * Eigen::MatrixXd::Identity(n, n) +
                 4.0 * (n - 1) * std::pow(1.0 - q, -n) * (xi * xi.transpose()));
    r.condition = 0.0;
    return r;
  }
  if (solver) return solver->robin(xi);
  CollocationGreen local(dom);
  return local.robin(xi);
}

RobinCriticalPoint find_robin_critical_point(const DomainSpec& dom, const Eigen::VectorXd& seed,
                                             const CriticalPointOptions& opt, const CollocationGreen* solver) {
  std::unique_ptr<CollocationGreen> owned;
  if (dom.kind == DomainSpec::Kind::star_shaped && !solver) {
    owned = std::make_unique<CollocationGreen>(dom);
    solver = owned.get();
  }
  if (!(dom.margin(seed) > opt.margin)) throw DomainError("find_robin_critical_point: seed not interior");
  RobinCriticalPoint out;
  Eigen::VectorXd xi = seed;
  RobinResult R = robin_diag(dom, xi, solver);
  int it = 0;
  while (R.gradient.norm() > opt.tol) {
    if (it >= opt.max_iterations) throw NumericalError("find_robin_critical_point: no convergence");
    Eigen::VectorXd step = R.hessian.ldlt().solve(-R.gradient);
    double lam = 1.0;
    Eigen::VectorXd cand;
    for (int h = 0; h < 30; ++h) {
      cand = xi + lam * step;
      if (dom.margin(cand) > opt.margin) break;
      lam *= 0.5;
    }
    if (!(dom.margin(cand) > opt.margin)) throw NumericalError("find_robin_critical_point: iterate escapes the interior");
    xi = cand;
    R = robin_diag(dom, xi, solver);
    ++it;
  }
  out.xi = xi;
  out.hessian = R.hessian;
  out.iterations = it;
  out.gradient_norm = R.gradient.norm();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R.hessian);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseAbs();
  out.nondegenerate = ev.minCoeff() >= opt.nondegeneracy * ev.maxCoeff();
  return out;
}

}  // namespace bt
