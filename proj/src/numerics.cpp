#include "bubbletower/numerics.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <queue>

namespace bt {

std::string short_num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

double sphere_area(int n) {
  if (n < 1) throw DomainError("sphere_area: dimension must be positive");
  return 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
}

namespace {

void build_metrics(RadialGrid& g) {
  const std::size_t N = g.r.size();
  if (N < 3) throw DomainError("RadialGrid: need at least 3 nodes");
  for (std::size_t i = 0; i < N; ++i) {
    if (!(g.r[i] > 0.0) || (i > 0 && !(g.r[i] > g.r[i - 1])))
      throw DomainError("RadialGrid: nodes must be positive and strictly increasing");
  }
  if (g.r.back() != 1.0) throw DomainError("RadialGrid: last node must be r = 1");
  const int n = g.dim;
  const double om = sphere_area(n);
  std::vector<double> m(N + 1);
  m[0] = 0.0;
  for (std::size_t i = 1; i < N; ++i) m[i] = 0.5 * (g.r[i - 1] + g.r[i]);
  m[N] = 1.0;
  g.vol.resize(N);
  g.face.resize(N - 1);
  for (std::size_t i = 0; i < N; ++i)
    g.vol[i] = om * (std::pow(m[i + 1], n) - std::pow(m[i], n)) / n;
  for (std::size_t i = 0; i + 1 < N; ++i)
    g.face[i] = om * std::pow(m[i + 1], n - 1) / (g.r[i + 1] - g.r[i]);
}

}  // namespace

RadialGrid RadialGrid::graded(int n, double rmin, double pivot, int per_decade, int tail_points) {
  if (!(rmin > 0.0) || !(rmin < 1.0)) throw DomainError("graded grid: need 0 < rmin < 1");
  if (per_decade < 1) throw DomainError("graded grid: per_decade must be positive");
  pivot = std::min(pivot, 1.0);
  if (pivot <= rmin) pivot = std::min(1.0, 10.0 * rmin);
  if (pivot >= 1.0) tail_points = 0;
  if (pivot < 1.0 && tail_points < 1) throw DomainError("graded grid: tail needs points");
  RadialGrid g;
  g.dim = n;
  g.kind = Kind::graded;
  g.rmin = rmin;
  g.per_decade = per_decade;
  g.pivot = pivot;
  g.tail_points = tail_points;
  const int m = std::max(2, static_cast<int>(std::ceil(per_decade * std::log10(pivot / rmin))));
  const double lr = std::log(rmin), lp = std::log(pivot);
  for (int i = 0; i <= m; ++i) g.r.push_back(std::exp(lr + (lp - lr) * i / m));
  g.r.front() = rmin;
  g.r.back() = pivot;
  for (int j = 1; j <= tail_points; ++j) g.r.push_back(pivot + (1.0 - pivot) * j / tail_points);
  g.r.back() = 1.0;
  build_metrics(g);
  return g;
}

RadialGrid RadialGrid::log_uniform(int n, double rmin, int per_decade) {
  RadialGrid g = graded(n, rmin, 1.0, per_decade, 0);
  g.kind = Kind::log_uniform;
  return g;
}

RadialGrid RadialGrid::from_nodes(int n, std::vector<double> nodes) {
  RadialGrid g;
  g.dim = n;
  g.kind = Kind::custom;
  g.r = std::move(nodes);
  if (!g.r.empty()) g.rmin = g.r.front();
  build_metrics(g);
  return g;
}

RadialGrid RadialGrid::refined(double factor) const {
  auto scale = [factor](int v) { return std::max(1, static_cast<int>(std::lround(v * factor))); };
  switch (kind) {
    case Kind::graded: return graded(dim, rmin, pivot, scale(per_decade), scale(tail_points));
    case Kind::log_uniform: return log_uniform(dim, rmin, scale(per_decade));
    case Kind::custom: break;
  }
  throw DomainError("RadialGrid::refined: custom grids cannot be refined");
}

RadialField::RadialField(RadialGrid g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
  if (values.size() != grid.size()) throw DomainError("RadialField: value count does not match grid");
}

RadialField RadialField::sample(const RadialGrid& g, const std::function<double(double)>& f) {
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = f(g.r[i]);
  return RadialField(g, std::move(v));
}

double RadialField::sup_abs() const {
  double s = 0.0;
  for (double v : values) s = std::max(s, std::abs(v));
  return s;
}

double RadialField::interpolate(double x) const {
  const auto& r = grid.r;
  if (x <= r.front()) return values.front();
  if (x >= r.back()) return values.back();
  auto it = std::upper_bound(r.begin(), r.end(), x);
  std::size_t j = static_cast<std::size_t>(it - r.begin());
  std::size_t i = j - 1;
  double w = std::log(x / r[i]) / std::log(r[j] / r[i]);
  return (1.0 - w) * values[i] + w * values[j];
}

namespace {

struct Piece {
  double a = 0.0, b = 0.0, value = 0.0, error = 0.0, l1 = 0.0;
  bool operator<(const Piece& o) const { return error < o.error; }
};

// Non-adaptive Gauss-Kronrod 31 on [a, b], evaluated on [0, 1] after an affine map.
Piece gk_piece(const std::function<double(double)>& g, double a, double b) {
  const double h = b - a;
  auto u = [&](double t) { return g(a + h * t) * h; };
  Piece p{a, b, 0.0, 0.0, 0.0};
  p.value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(u, 0.0, 1.0, 0, 0.0, &p.error, &p.l1);
  if (!std::isfinite(p.value)) throw NumericalError("quadrature: non-finite integrand");
  return p;
}

// Globally adaptive bisection of the panel with the largest error estimate. The target
// is max(abs_tol, rel_tol |I|), floored at a multiple of the round-off level of the
// integrand so that cancelling integrals terminate.
QuadResult adaptive_gk(const std::function<double(double)>& g, const std::vector<double>& breaks,
                       const QuadOptions& opt) {
  std::priority_queue<Piece> heap;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i)
    if (breaks[i + 1] > breaks[i]) heap.push(gk_piece(g, breaks[i], breaks[i + 1]));
  const std::size_t budget = heap.size() * 64 + 2000;
  auto totals = [&](double* value, double* error, double* l1) {
    auto copy = heap;
    *value = *error = *l1 = 0.0;
    while (!copy.empty()) {
      *value += copy.top().value;
      *error += copy.top().error;
      *l1 += copy.top().l1;
      copy.pop();
    }
  };
  double value, error, l1;
  totals(&value, &error, &l1);
  for (std::size_t it = 0; it < budget && !heap.empty(); ++it) {
    const double target =
        std::max({opt.abs_tol, opt.rel_tol * std::abs(value), 50.0 * std::numeric_limits<double>::epsilon() * l1});
    if (error <= target) break;
    const Piece worst = heap.top();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) break;
    heap.pop();
    const Piece left = gk_piece(g, worst.a, mid), right = gk_piece(g, mid, worst.b);
    value += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    l1 += left.l1 + right.l1 - worst.l1;
    heap.push(left);
    heap.push(right);
    // Running sums drift; resum occasionally.
    if (it % 256 == 255) totals(&value, &error, &l1);
  }
  totals(&value, &error, &l1);
  return {value, error};
}

std::vector<double> log_breaks(double a, double b, int per_decade) {
  const int panels = std::max(1, static_cast<int>(std::ceil(per_decade * std::log10(b / a))));
  const double la = std::log(a), lb = std::log(b);
  std::vector<double> br{a};
  for (int p = 1; p < panels; ++p) br.push_back(std::exp(la + (lb - la) * p / panels));
  br.push_back(b);
  return br;
}

}  // namespace

QuadResult integrate_log_panels(const std::function<double(double)>& g, double a, double b,
                                const QuadOptions& opt) {
  if (!(b > a)) return {};
  if (!(a > 0.0)) throw DomainError("integrate_log_panels: lower limit must be positive");
  return adaptive_gk(g, log_breaks(a, b, opt.per_decade), opt);
}

namespace {

QuadResult integrate_from_zero(const std::function<double(double)>& g, double b, const QuadOptions& opt) {
  if (!(b > 0.0)) return {};
  const double lo = std::min(opt.lo_scale, b);
  std::vector<double> br{0.0};
  if (b > lo) {
    const std::vector<double> rest = log_breaks(lo, b, opt.per_decade);
    br.insert(br.end(), rest.begin(), rest.end());
  } else {
    br.push_back(b);
  }
  return adaptive_gk(g, br, opt);
}

}  // namespace

QuadResult integrate_segment(const std::function<double(double)>& g, double a, double b, const QuadOptions& opt) {
  if (!(b > a)) return {};
  if (a <= 0.0) return integrate_from_zero(g, b, opt);
  return integrate_log_panels(g, a, b, opt);
}

QuadResult radial_integral(const std::function<double(double)>& f, int n, double R, const QuadOptions& opt) {
  const double om = sphere_area(n);
  auto g = [&](double r) { return r == 0.0 ? 0.0 : f(r) * std::pow(r, n - 1); };
  if (std::isfinite(R)) {
    QuadResult res = integrate_from_zero(g, R, opt);
    res.value *= om;
    res.error *= om;
    return res;
  }
  const double hi = std::max(1e6, 1e4 / opt.lo_scale);
  QuadResult res = integrate_from_zero(g, hi, opt);
  // Tail beyond hi through r = 1/s.
  auto tail = [&](double s) { return s == 0.0 ? 0.0 : f(1.0 / s) * std::pow(s, -n - 1); };
  const QuadResult tq = adaptive_gk(tail, {0.0, 1.0 / hi}, opt);
  const double tv = tq.value, terr = tq.error;
  if (!std::isfinite(tv) || !std::isfinite(terr))
    throw NumericalError("radial_integral: non-convergent tail");
  const double scale = std::max(std::abs(res.value), std::abs(tv));
  if (terr > std::max(opt.abs_tol, opt.rel_tol * scale))
    throw NumericalError("radial_integral: tail integral did not converge");
  res.value = om * (res.value + tv);
  res.error = om * (res.error + terr);
  return res;
}

double newtonian_potential_at(const std::function<double(double)>& g, int n, double R, double r,
                              const QuadOptions& opt) {
  const double om = sphere_area(n);
  const double rc = std::min(r, R);
  auto inner_f = [&](double s) { return g(s) * std::pow(s, n - 1); };
  auto outer_f = [&](double s) { return g(s) * s; };
  double inner = 0.0;
  if (r > 0.0) inner = integrate_from_zero(inner_f, rc, opt).value * std::pow(r, 2 - n);
  double outer = 0.0;
  if (r < R) {
    outer = (r > 0.0) ? integrate_log_panels(outer_f, r, R, opt).value
                      : integrate_from_zero(outer_f, R, opt).value;
  }
  double v = om * (inner + outer);
  if (!std::isfinite(v)) throw NumericalError("newtonian_potential: divergent integral");
  return v;
}

RadialField newtonian_potential(const RadialField& gf) {
  const auto& G = gf.grid;
  const int n = G.dim;
  const std::size_t N = G.size();
  const double om = sphere_area(n);
  std::vector<double> inner(N), outer(N);
  // Segment [0, r_0] with g taken constant.
  inner[0] = gf[0] * std::pow(G.r[0], n) / n;
  for (std::size_t i = 1; i < N; ++i) {
    double a = gf[i - 1] * std::pow(G.r[i - 1], n - 1), b = gf[i] * std::pow(G.r[i], n - 1);
    inner[i] = inner[i - 1] + 0.5 * (a + b) * (G.r[i] - G.r[i - 1]);
  }
  outer[N - 1] = 0.0;
  for (std::size_t i = N - 1; i-- > 0;) {
    double a = gf[i] * G.r[i], b = gf[i + 1] * G.r[i + 1];
    outer[i] = outer[i + 1] + 0.5 * (a + b) * (G.r[i + 1] - G.r[i]);
  }
  std::vector<double> v(N);
  for (std::size_t i = 0; i < N; ++i) v[i] = om * (std::pow(G.r[i], 2 - n) * inner[i] + outer[i]);
  return RadialField(G, std::move(v));
}

RadialField radial_laplacian(const RadialField& u) {
  const auto& G = u.grid;
  const std::size_t N = G.size();
  if (N < 3) throw DomainError("radial_laplacian: fewer than 3 nodes");
  std::vector<double> L(N);
  for (std::size_t i = 0; i + 1 < N; ++i) {
    double out = G.face[i] * (u[i + 1] - u[i]);
    double in = i ? G.face[i - 1] * (u[i] - u[i - 1]) : 0.0;
    L[i] = -(out - in) / G.vol[i];
  }
  // One-sided quadratic derivative at r = 1.
  const double x0 = G.r[N - 3], x1 = G.r[N - 2], x2 = G.r[N - 1];
  const double d = (u[N - 3] * (x2 - x1)) / ((x0 - x1) * (x0 - x2)) +
                   (u[N - 2] * (x2 - x0)) / ((x1 - x0) * (x1 - x2)) +
                   (u[N - 1] * (2 * x2 - x0 - x1)) / ((x2 - x0) * (x2 - x1));
  const double om = sphere_area(G.dim);
  L[N - 1] = -(om * d - G.face[N - 2] * (u[N - 1] - u[N - 2])) / G.vol[N - 1];
  return RadialField(G, std::move(L));
}

double l2_inner(const RadialGrid& g, const std::vector<double>& u, const std::vector<double>& v) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < g.size(); ++i) s += static_cast<long double>(g.vol[i]) * u[i] * v[i];
  return static_cast<double>(s);
}

double h1_inner(const RadialGrid& g, const std::vector<double>& u, const std::vector<double>& v) {
  long double s = 0.0L;
  for (std::size_t i = 0; i + 1 < g.size(); ++i)
    s += static_cast<long double>(g.face[i]) * (u[i + 1] - u[i]) * (v[i + 1] - v[i]);
  return static_cast<double>(s);
}

BorderedSystem::BorderedSystem(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C, const Eigen::MatrixXd& B)
    : A_(A), C_(C), B_(B) {
  const Eigen::Index N = A.rows(), m = B.rows();
  if (A.cols() != N) throw DomainError("bordered_solve: A must be square");
  if (C.rows() != N || C.cols() != m || (m > 0 && B.cols() != N))
    throw DomainError("bordered_solve: constraint dimensions do not match");
  if (m > 0) {
    Eigen::MatrixXd Bn = B;
    for (Eigen::Index j = 0; j < m; ++j) {
      double nrm = Bn.row(j).norm();
      if (!(nrm > 0.0)) throw NumericalError("bordered_solve: constraint row " + std::to_string(j) + " is zero");
      Bn.row(j) /= nrm;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Bn.transpose());
    qr.setThreshold(1e-12);
    if (qr.rank() < m) {
      Eigen::Index bad = qr.colsPermutation().indices()(m - 1);
      throw NumericalError("bordered_solve: constraint row " + std::to_string(bad) + " is degenerate");
    }
  }
  Eigen::MatrixXd K(N + m, N + m);
  K.setZero();
  K.topLeftCorner(N, N) = A;
  if (m > 0) {
    K.topRightCorner(N, m) = C;
    K.bottomLeftCorner(m, N) = B;
  }
  // Ruiz equilibration.
  row_scale_ = Eigen::VectorXd::Ones(N + m);
  col_scale_ = Eigen::VectorXd::Ones(N + m);
  for (int sweep = 0; sweep < 20; ++sweep) {
    Eigen::VectorXd rs(N + m), cs(N + m);
    for (Eigen::Index i = 0; i < N + m; ++i) {
      double rm = K.row(i).cwiseAbs().maxCoeff();
      rs(i) = rm > 0 ? 1.0 / std::sqrt(rm) : 1.0;
    }
    for (Eigen::Index j = 0; j < N + m; ++j) {
      double cm = K.col(j).cwiseAbs().maxCoeff();
      cs(j) = cm > 0 ? 1.0 / std::sqrt(cm) : 1.0;
    }
    K = rs.asDiagonal() * K * cs.asDiagonal();
    row_scale_ = row_scale_.cwiseProduct(rs);
    col_scale_ = col_scale_.cwiseProduct(cs);
    if ((rs.array() - 1.0).abs().maxCoeff() < 1e-3 && (cs.array() - 1.0).abs().maxCoeff() < 1e-3) break;
  }
  lu_.compute(K);
  const double rc = lu_.rcond();
  if (!(rc > 1e-300) || !std::isfinite(rc)) throw NumericalError("bordered_solve: singular saddle system");
}

BorderedSolution BorderedSystem::solve(const Eigen::VectorXd& rhs) const {
  const Eigen::Index N = A_.rows(), m = B_.rows();
  if (rhs.size() != N) throw DomainError("bordered_solve: rhs size mismatch");
  Eigen::VectorXd full = Eigen::VectorXd::Zero(N + m);
  full.head(N) = rhs;
  auto apply = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd y(N + m);
    // Residual accumulated in long double.
    for (Eigen::Index i = 0; i < N; ++i) {
      long double s = 0.0L;
      for (Eigen::Index j = 0; j < N; ++j) s += static_cast<long double>(A_(i, j)) * z(j);
      for (Eigen::Index j = 0; j < m; ++j) s += static_cast<long double>(C_(i, j)) * z(N + j);
      y(i) = static_cast<double>(s);
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      long double s = 0.0L;
      for (Eigen::Index j = 0; j < N; ++j) s += static_cast<long double>(B_(i, j)) * z(j);
      y(N + i) = static_cast<double>(s);
    }
    return y;
  };
  auto lusolve = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd y = lu_.solve(row_scale_.cwiseProduct(b));
    return Eigen::VectorXd(col_scale_.cwiseProduct(y));
  };
  Eigen::VectorXd z = lusolve(full);
  for (int it = 0; it < 3; ++it) {
    Eigen::VectorXd res = full - apply(z);
    z += lusolve(res);
  }
  BorderedSolution out;
  out.x = z.head(N);
  out.lambda = z.tail(m);
  Eigen::VectorXd res = apply(z) - full;
  double scale = A_.cwiseAbs().rowwise().sum().maxCoeff() * out.x.cwiseAbs().maxCoeff() + rhs.cwiseAbs().maxCoeff();
  if (m > 0) scale += (C_.cwiseAbs() * out.lambda.cwiseAbs()).maxCoeff();
  out.residual = scale > 0 ? res.head(N).cwiseAbs().maxCoeff() / scale : 0.0;
  if (m > 0) {
    double bs = (B_.cwiseAbs() * out.x.cwiseAbs()).maxCoeff();
    out.constraint_residual = bs > 0 ? res.tail(m).cwiseAbs().maxCoeff() / bs : 0.0;
  }
  if (!out.x.allFinite() || !out.lambda.allFinite()) throw NumericalError("bordered_solve: non-finite solution");
  return out;
}

BorderedSolution bordered_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::VectorXd& rhs) {
  return BorderedSystem(A, B.transpose(), B).solve(rhs);
}

BorderedSolution bordered_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C, const Eigen::MatrixXd& B,
                                const Eigen::VectorXd& rhs) {
  return BorderedSystem(A, C, B).solve(rhs);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("loglog_slope: need at least two points");
  double mx = 0, my = 0;
  const double m = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw DomainError("loglog_slope: values must be positive");
    mx += std::log(x[i]) / m;
    my += std::log(y[i]) / m;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = std::log(x[i]) - mx, dy = std::log(y[i]) - my;
    sxy += dx * dy;
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace bt
