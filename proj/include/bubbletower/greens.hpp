#pragma once

#include "bubbletower/numerics.hpp"

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace bt {

struct DomainSpec {
  enum class Kind { unit_ball, star_shaped };

  Kind kind = Kind::unit_ball;
  int dim = 7;
  // Boundary radius along a unit direction (star_shaped only).
  std::function<double(const Eigen::VectorXd&)> rho;
  // Optional tabulated boundary: unit directions and radii (rows of `table_dirs`).
  Eigen::MatrixXd table_dirs;
  Eigen::VectorXd table_rho;

  static DomainSpec unit_ball(int n);
  static DomainSpec star_shaped(int n, std::function<double(const Eigen::VectorXd&)> rho);

  double radius(const Eigen::VectorXd& dir) const;
  // Distance-like margin 1 - |x|/rho(x/|x|); positive inside.
  double margin(const Eigen::VectorXd& x) const;
};

// Reads lines "u_1 ... u_n rho" (directions are normalized on input);
// radii between tabulated directions use inverse-distance weighting over
// the nearest tabulated directions.
DomainSpec load_boundary_table(const std::string& path, int n);

struct RobinResult {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
  double condition = 0.0;  // estimated absolute accuracy of `value`
};

// Fundamental solution |x|^{2-n}/((n-2) omega_{n-1}).
double fundamental_solution(int n, double dist);

// Dirichlet Green function of the unit ball (image charge).
double ball_green(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int n);
// Regular part H(x,y) = Gamma(x-y) - G(x,y) on the unit ball.
double ball_regular_part(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int n);

struct CollocationOptions {
  int sources = 600;
  int collocation = 1800;
  int check_points = 400;
  double dilation = 2.0;
  int poly_degree = 2;
  unsigned seed = 1;
  int repulsion_steps = 30;
  double condition_limit = 1e14;
};

// Method of fundamental solutions for the regular part of the Green function
// on a star-shaped domain; the least-squares system is factored once.
class CollocationGreen {
 public:
  CollocationGreen(const DomainSpec& dom, const CollocationOptions& opt = {});

  double regular_part(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  double green(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  // H(xi,xi) with exact gradient of the discrete model and a difference Hessian.
  RobinResult robin(const Eigen::VectorXd& xi) const;
  // Sup of |G(x, y)| over independent boundary check points, times 2.
  double boundary_accuracy(const Eigen::VectorXd& y) const;
  double condition_estimate() const { return cond_; }
  const DomainSpec& domain() const { return dom_; }

 private:
  Eigen::VectorXd coefficients(const Eigen::VectorXd& y) const;
  Eigen::VectorXd basis_row(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd basis_gradient(const Eigen::VectorXd& x) const;  // n x m

  DomainSpec dom_;
  CollocationOptions opt_;
  Eigen::MatrixXd sources_;      // rows
  Eigen::MatrixXd collocation_;  // rows
  Eigen::MatrixXd check_;        // rows
  Eigen::VectorXd col_scale_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
  double cond_ = 0.0;
};

// Quasi-uniform directions on S^{n-1}: seeded Gaussian draws relaxed by
// a short Riesz-energy repulsion.
Eigen::MatrixXd sphere_directions(int n, int count, unsigned seed, int repulsion_steps);

RobinResult robin_diag(const DomainSpec& dom, const Eigen::VectorXd& xi,
                       const CollocationGreen* solver = nullptr);

struct RobinCriticalPoint {
  Eigen::VectorXd xi;
  Eigen::MatrixXd hessian;
  bool nondegenerate = false;
  int iterations = 0;
  double gradient_norm = 0.0;
};

struct CriticalPointOptions {
  double tol = 1e-10;
  int max_iterations = 50;
  double margin = 0.05;
  double nondegeneracy = 1e-6;  // smallest |eig| >= this * largest |eig|
};

RobinCriticalPoint find_robin_critical_point(const DomainSpec& dom, const Eigen::VectorXd& seed,
                                             const CriticalPointOptions& opt = {},
                                             const CollocationGreen* solver = nullptr);

}  // namespace bt
