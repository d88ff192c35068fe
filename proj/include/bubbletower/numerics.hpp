#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bt {

// Thrown when input parameters are outside the documented domain.
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when a numerical procedure fails (singular system, divergence, ...).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// %.6g formatting for error messages.
std::string short_num(double x);

// Surface area of the unit sphere S^{n-1} in R^n.
double sphere_area(int n);

// Radial mesh on (0,1] with finite-volume metrics for the radial Laplacian.
//
// Cell i is [m_i, m_{i+1}] with m_0 = 0 and m_i the midpoint of r_{i-1}, r_i;
// the last node (r = 1) owns the half cell [m_{N-1}, 1]. Volumes and face
// areas include the sphere area, so sum(vol) is the volume of the unit ball.
struct RadialGrid {
  enum class Kind { graded, log_uniform, custom };

  int dim = 7;
  Kind kind = Kind::custom;
  double rmin = 0.0;
  int per_decade = 0;
  double pivot = 1.0;
  int tail_points = 0;

  std::vector<double> r;
  std::vector<double> vol;   // size N
  std::vector<double> face;  // face[i] sits between r[i] and r[i+1], size N-1

  std::size_t size() const { return r.size(); }

  // Log-uniform below the pivot, uniform above it, ending at 1.
  static RadialGrid graded(int n, double rmin, double pivot, int per_decade, int tail_points);
  // Log-uniform from rmin to 1.
  static RadialGrid log_uniform(int n, double rmin, int per_decade);
  static RadialGrid from_nodes(int n, std::vector<double> nodes);

  // Same layout with per_decade and tail_points scaled by `factor`.
  RadialGrid refined(double factor) const;
};

struct RadialField {
  RadialGrid grid;
  std::vector<double> values;

  RadialField() = default;
  RadialField(RadialGrid g, std::vector<double> v);
  static RadialField sample(const RadialGrid& g, const std::function<double(double)>& f);

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  std::size_t size() const { return values.size(); }
  double sup_abs() const;
  // Linear interpolation in log r; constant extrapolation below the first node.
  double interpolate(double r) const;
};

struct QuadOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-9;
  // Log-graded panel breakpoints: `per_decade` panels per decade between
  // lo_scale and the outer limit.
  int per_decade = 4;
  double lo_scale = 1e-6;
};

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
};

// Adaptive Gauss-Kronrod on [a,b] split into log-graded panels (a > 0).
QuadResult integrate_log_panels(const std::function<double(double)>& g, double a, double b,
                                const QuadOptions& opt = {});

// int_a^b g(r) dr; a = 0 adds one adaptive panel on [0, lo_scale].
QuadResult integrate_segment(const std::function<double(double)>& g, double a, double b,
                             const QuadOptions& opt = {});

// omega_{n-1} * int_0^R f(r) r^{n-1} dr. R = infinity uses the substitution
// r = 1/s on the tail beyond the last panel and checks the tail estimate.
QuadResult radial_integral(const std::function<double(double)>& f, int n, double R,
                           const QuadOptions& opt = {});

// r -> int_{R^n} |x-y|^{2-n} g(|y|) dy for g supported in [0, R]; evaluated
// with omega_{n-1} [ r^{2-n} int_0^r g s^{n-1} ds + int_r^R g s ds ].
double newtonian_potential_at(const std::function<double(double)>& g, int n, double R, double r,
                              const QuadOptions& opt = {});

// Same potential for a mesh function (g taken as zero beyond r = 1),
// using trapezoidal cumulative sums on the mesh.
RadialField newtonian_potential(const RadialField& g);

// Finite-volume radial Laplacian in the positive convention -u'' - (n-1)u'/r.
// The boundary node uses a one-sided quadratic derivative at r = 1.
RadialField radial_laplacian(const RadialField& u);

// Discrete inner products matching the finite-volume scheme.
double l2_inner(const RadialGrid& g, const std::vector<double>& u, const std::vector<double>& v);
double h1_inner(const RadialGrid& g, const std::vector<double>& u, const std::vector<double>& v);

struct BorderedSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;
  double residual = 0.0;             // ||A x + C lambda - rhs|| / (||A|| ||x|| + ||rhs||)
  double constraint_residual = 0.0;  // ||B x|| / (||B|| ||x||)
};

// Factorization of the saddle system [A C; B 0]; reusable for many right-hand sides.
class BorderedSystem {
 public:
  BorderedSystem(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C, const Eigen::MatrixXd& B);
  BorderedSolution solve(const Eigen::VectorXd& rhs) const;
  int rows() const { return static_cast<int>(A_.rows()); }
  int constraints() const { return static_cast<int>(B_.rows()); }

 private:
  Eigen::MatrixXd A_, C_, B_;
  Eigen::VectorXd row_scale_, col_scale_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

// Solves A x + B^T lambda = rhs, B x = 0.
BorderedSolution bordered_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                const Eigen::VectorXd& rhs);
// Solves A x + C lambda = rhs, B x = 0.
BorderedSolution bordered_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C,
                                const Eigen::MatrixXd& B, const Eigen::VectorXd& rhs);

// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace bt
