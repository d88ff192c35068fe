#pragma once

#include "bubbletower/numerics.hpp"

#include <Eigen/Dense>

#include <vector>

namespace bt {

// Standard bubble U_0(r) = (1 + r^2/(n(n-2)))^{-(n-2)/2}; solves Delta U = U^{(n+2)/(n-2)}
// with the positive Laplacian -sum d_i^2.
double U0(int n, double r);
double U0_dr(int n, double r);
double U0_laplacian(int n, double r);  // from analytic second derivatives
Eigen::VectorXd U0_gradient(int n, const Eigen::VectorXd& x);
Eigen::MatrixXd U0_hessian(int n, const Eigen::VectorXd& x);

// Critical exponents: 2* = 2n/(n-2) and p = 2* - 1.
double crit_exponent(int n);
double crit_power(int n);

// f(u) = |u|^{p-1} u and f'(u) = p |u|^{p-1}.
double f_nl(int n, double u);
double f_nl_prime(int n, double u);
// f(a+b) - f(a), accurate when |b| << |a|.
double f_nl_increment(int n, double a, double b);

struct Bubble {
  double mu = 1.0;
  double center_offset = 0.0;
  int dim = 7;
};

void validate(const Bubble& b);
double bubble_value(const Bubble& b, double r);
double bubble_dr(const Bubble& b, double r);
double bubble_laplacian(const Bubble& b, double r);

// Delta U - U^{(n+2)/(n-2)} on the mesh. `under_resolved` is set when fewer
// than 8 nodes lie below r = mu; the residual itself is analytic either way.
RadialField bubble_pde_residual(const Bubble& b, const RadialGrid& grid, bool* under_resolved = nullptr);

// Kernel functions V_0 .. V_n of the linearization at U_0.
double kernel_value(int j, int n, const Eigen::VectorXd& x);
double V0(int n, double r);
double V0_dr(int n, double r);
double V0_laplacian(int n, double r);

// Projection onto H^1_0 of the unit ball for a bubble centered at 0:
// PU = U - U(1).
double projected_bubble_value(const Bubble& b, double r);
RadialField projected_bubble_ball(const Bubble& b, const RadialGrid& grid);

// Projected dilation kernel element Z(r) = mu^{-(n-2)/2} (V_0(r/mu) - V_0(1/mu)).
double Z_value(int n, double mu, double r);
double Z_dr(int n, double mu, double r);
double Z_laplacian(int n, double mu, double r);

// A point of the parameter set: n, k, eps, t_l, z_l, xi and the sign pattern.
struct TowerConfig {
  int n = 7;
  int k = 1;
  double eps = 1e-2;
  std::vector<double> t;
  std::vector<Eigen::VectorXd> z;  // k-1 offsets
  Eigen::VectorXd xi;              // anchor point, size n
  std::vector<int> signs;          // k values in {+1,-1}
  double A = 10.0;                 // t_l in [1/A, A]
  double d = 0.1;                  // distance of xi from the boundary

  // Alternating signs (-1)^l, z = 0, xi = 0.
  static TowerConfig make(int n, int k, double eps, std::vector<double> t);

  void validate() const;
  double mu(int l) const;  // l = 1..k, t_l eps^{gamma_l}
  std::vector<double> mus() const;
  int sign(int l) const { return signs.at(static_cast<std::size_t>(l - 1)); }
  Eigen::VectorXd center(int l) const;  // xi_l = xi_{l-1} + mu_{l-1} z_l
};

// Sum of signs_l P U_{mu_l} at radius r (all centers at the origin).
double tower_value(const TowerConfig& cfg, double r);
RadialField tower_ansatz(const TowerConfig& cfg, const RadialGrid& grid);

// Nested balls B_1 = unit ball, B_l of radius sqrt(mu_l mu_{l-1}), B_{k+1} empty.
struct AnnulusSet {
  std::vector<double> radii;  // radii[l-1] is the radius of B_l, l = 1..k+1
  std::vector<double> mu;

  int k() const { return static_cast<int>(mu.size()); }
  // l such that r lies in the half-open shell [radius(B_{l+1}), radius(B_l)).
  int shell(double r) const;
  double theta(int l, double r) const { return mu.at(static_cast<std::size_t>(l - 1)) + r; }
};

AnnulusSet annuli(const TowerConfig& cfg);

// Weight Psi of the weighted sup norm, evaluated through logarithms.
double log_weight_psi(const TowerConfig& cfg, double r);
double weight_psi(const TowerConfig& cfg, double r);

}  // namespace bt
