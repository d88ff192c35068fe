#pragma once

#include "bubbletower/numerics.hpp"
#include "bubbletower/profiles.hpp"

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <vector>

namespace bt {

// Graded mesh for a tower: log-uniform from mu_k/4 to sqrt(mu_1), then uniform to 1.
RadialGrid tower_grid(const TowerConfig& cfg, int per_decade = 12, int tail_points = 200);

// Tridiagonal finite-volume form of phi -> Delta phi - eps phi - p |W|^{p-1} phi on the
// unknowns phi_0 .. phi_{N-2} (phi_{N-1} = 0 at r = 1). cfg.k = 0 gives W = 0.
struct LinearOperator {
  RadialGrid grid;
  int n = 7;
  double eps = 0.0;
  std::vector<double> W;  // tower at all N nodes
  std::vector<double> lower, diag, upper;

  int unknowns() const { return static_cast<int>(diag.size()); }
  Eigen::MatrixXd dense() const;
  // Applies the operator to a field of size N (last value ignored); returns N-1 values.
  std::vector<double> apply(const std::vector<double>& phi) const;
};

LinearOperator assemble_linearized(const TowerConfig& cfg, const RadialGrid& grid);

struct LinearSolveResult {
  RadialField phi;
  std::vector<double> lambda;             // lambda_{l,0}, l = 1..k
  double weighted_norm = 0.0;             // max |phi| / Psi over nodes
  std::vector<double> annulus_ratios;     // a_l
  std::vector<double> multiplier_ratios;  // |lambda_l| / (eps mu_l^2)
  std::vector<double> orthogonality;      // |<phi, Z_l>| / (|phi| |Z_l|) in the H^1_0 form
  double residual = 0.0;
};

// Bordered system for Delta phi - eps phi - f'(W) phi = k + sum_l lambda_l (Delta - eps) Z_l,
// <phi, Z_l> = 0, factored once.
class ProjectedSolver {
 public:
  ProjectedSolver(const TowerConfig& cfg, const RadialGrid& grid);

  LinearSolveResult solve(const std::vector<double>& k_rhs) const;
  LinearSolveResult solve(const RadialField& k_rhs) const { return solve(k_rhs.values); }

  const TowerConfig& config() const { return cfg_; }
  const RadialGrid& grid() const { return op_.grid; }
  const LinearOperator& op() const { return op_; }
  const std::vector<std::vector<double>>& Z() const { return Z_; }
  const std::vector<double>& psi() const { return psi_; }
  double weighted_norm(const std::vector<double>& phi) const;

 private:
  TowerConfig cfg_;
  LinearOperator op_;
  std::vector<std::vector<double>> Z_;   // Z_l at nodes
  std::vector<std::vector<double>> LZ_;  // (Delta - eps) Z_l at nodes
  std::vector<double> psi_;
  std::unique_ptr<BorderedSystem> sys_;
};

LinearSolveResult solve_projected(const TowerConfig& cfg, const RadialGrid& grid, const RadialField& k_rhs);

// a_l = max over C_l of |phi| / U_l.
std::vector<double> annulus_ratios(const TowerConfig& cfg, const RadialField& phi);

// Pointwise admissibility bound: sum_i mu_i^{(n+2)/2} theta_i^{-4} plus the shell interaction
// term W_l^{2*-2} (W_{l+1} + W_{l-1}).
double admissibility_bound(const TowerConfig& cfg, double r);

struct AdmissibilityReport {
  bool admissible = true;
  double worst_ratio = 0.0;
  double location = 0.0;
};

AdmissibilityReport check_rhs_admissible(const TowerConfig& cfg, const RadialField& k_rhs,
                                         double max_ratio = 100.0);

// Radial test function with first and second radial derivatives.
struct RadialTestFunction {
  std::function<double(double)> value, d1, d2;
  double support = 1.0;  // vanishes for r >= support

  double laplacian(int n, double r) const;
};

// Smooth cutoff equal to 1 on [0, R/2] and 0 beyond R (C^3 septic blend).
RadialTestFunction truncated_V0(int n, double R);
RadialTestFunction gaussian_bump(double center, double width, double R);

struct RepresentationCheck {
  std::vector<double> r;
  std::vector<double> lhs;  // |phi - Pi phi|
  std::vector<double> rhs;  // Newtonian potential of |Delta phi - p U_0^{p-1} phi|
  double max_ratio = 0.0;
  double projection_coefficient = 0.0;
};

// Samples at `points` radii; Pi is the L^2(U_0^{p-1}) projection onto V_0.
RepresentationCheck representation_check(int n, const RadialTestFunction& phi, const std::vector<double>& points);

// int_{shell} |x-y|^{2-n} W_i^{2*-2} (mu_i/theta_i)^p dy at |x| = r, W_i = P U_i.
double tech1_integral(const TowerConfig& cfg, int i, double p, double r);
double tech1_bound(const TowerConfig& cfg, int i, double p, double r);
// int_{B_i \ B_{i+1}} W_i^{2*-2} W_j |x-y|^{2-n} dy at |x| = r, i < j.
double tech2_integral(const TowerConfig& cfg, int i, int j, double r);
double tech2_bound(const TowerConfig& cfg, int i, int j, double r);

// Gram entries <Z_i, Z_j> = int_B grad Z_i . grad Z_j for scales mu_i, mu_j.
double gram_h1(int n, double mu_i, double mu_j);
// ||grad V_0||^2 on R^n.
double grad_V0_norm_sq(int n);

}  // namespace bt
