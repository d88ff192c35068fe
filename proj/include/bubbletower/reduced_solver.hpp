#pragma once

#include "bubbletower/gamma.hpp"
#include "bubbletower/greens.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace bt {

struct ReducedCoefficients {
  double D1 = 0.0;
  double D2 = 0.0;
  double D3 = 0.0;
  std::vector<double> gradV_norms;  // ||grad V_j||^2 in L^2(R^n), j = 0..n
  std::string provenance = "fit";

  double gradV0_sq() const { return gradV_norms.at(0); }
};

// A point (t, xi, z) of the reduced system, with the diagnostics of the last evaluation.
struct ReducedPoint {
  int n = 7;
  int k = 1;
  std::vector<double> t;
  Eigen::VectorXd xi;
  std::vector<Eigen::VectorXd> z;  // k-1 offsets
  std::vector<int> signs;          // default alternating (-1)^l
  Eigen::VectorXd residual;
  double scaled_residual = 0.0;
  double jacobian_condition = 0.0;
  int iterations = 0;

  static ReducedPoint make(int n, int k, std::vector<double> t);
};

// Closed-form zeros t_{l,0} of the j = 0 rows at a critical point of the Robin function.
std::vector<double> explicit_t0(int n, const ReducedCoefficients& c, double H00, int k);

// Stacked rows (l = 1..k, j = 0..n) of the reduced system.
Eigen::VectorXd reduced_F(const ReducedPoint& p, const ReducedCoefficients& c, const RobinResult& robin);
// Jacobian with respect to (t_1..t_k, xi, z_2..z_k); uses the Robin Hessian.
Eigen::MatrixXd reduced_jacobian(const ReducedPoint& p, const ReducedCoefficients& c, const RobinResult& robin);
// Natural magnitude of each row at p (used to scale residuals).
Eigen::VectorXd reduced_row_scale(const ReducedPoint& p, const ReducedCoefficients& c, const RobinResult& robin);

struct ReducedNewtonOptions {
  double tol = 1e-10;  // on the scaled residual
  int max_iterations = 60;
  int max_halvings = 20;
  double A = 10.0;      // t_l in [1/A, A]
  double margin = 0.1;  // distance of xi from the boundary
};

ReducedPoint newton_reduced(const ReducedPoint& seed, const ReducedCoefficients& c, const DomainSpec& dom,
                            const ReducedNewtonOptions& opt = {}, const CollocationGreen* solver = nullptr);

}  // namespace bt
