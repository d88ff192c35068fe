#pragma once

#include "bubbletower/linear_theory.hpp"
#include "bubbletower/numerics.hpp"
#include "bubbletower/profiles.hpp"
#include "bubbletower/reduced_solver.hpp"

#include <functional>
#include <limits>
#include <vector>

namespace bt {

// R = (Delta - eps) W - f(W) for the tower W. Uses Delta P U_l = U_l^p and
// subtracts f of the locally dominant bubble in closed form.
double residual_R_at(const TowerConfig& cfg, double r);
RadialField residual_R(const TowerConfig& cfg, const RadialGrid& grid);

// N(phi) = f(W + phi) - f(W) - f'(W) phi, series-expanded for |phi| << |W|.
double nonlinear_N_at(int n, double W, double phi);
std::vector<double> nonlinear_N(int n, const std::vector<double>& W, const std::vector<double>& phi);

struct PicardOptions {
  double tol = 1e-10;        // on ||phi_{m+1} - phi_m||_* / ||phi_{m+1}||_*
  int max_iterations = 40;
  int divergence_streak = 3;
  double eps_max = 5e-2;     // refuse larger eps
};

struct PicardReport {
  RadialField phi;
  int iterations = 0;
  std::vector<double> contraction_estimates;
  std::vector<double> step_norms;  // ||phi_{m+1} - phi_m||_*
  double final_weighted_norm = 0.0;
  std::vector<std::vector<double>> multipliers;  // lambda per iteration
  std::vector<double> orthogonality;             // at the fixed point
  double reapplication_defect = 0.0;  // ||T(phi) - phi||_* / ||phi||_*
  bool converged = false;
};

// phi_{m+1} = T(phi_m), T(phi) = projected solve of (-R + N(phi)), phi_0 = 0.
PicardReport picard_solve(const TowerConfig& cfg, const RadialGrid& grid, const PicardOptions& opt = {});
PicardReport picard_solve(const ProjectedSolver& solver, const PicardOptions& opt = {});

// Extra terms subtracted from b_m: a continuous part (integrated by quadrature)
// and a mesh part (finite-volume sums on the first N-1 nodes).
struct NuForcing {
  std::function<double(double)> continuous;
  std::vector<double> discrete;
};

struct NuExtraction {
  std::vector<double> nu;           // nu_{l,0}
  std::vector<double> nu_analytic;  // leading term
  std::vector<double> ratios;       // nu / nu_analytic
  std::vector<double> b;
  Eigen::MatrixXd pairing;          // int ((Delta - eps) Z_l) Z_m
};

// b_m = int [(Delta - eps)(W + phi) - f(W + phi)] Z_m, then pairing * nu = b.
// The W part is integrated by adaptive quadrature; the phi part is the mesh sum of
// phi L Z_m - N(phi) Z_m with L Z_m evaluated in closed form.
NuExtraction extract_nu(const TowerConfig& cfg, const RadialField& phi, const ReducedCoefficients& coeffs,
                        double robin_value, const NuForcing* forcing = nullptr);

// Leading-order nu_{l,j} (rows l = 1..k, j = 0..n) for a tower with signs kappa_l
// and offsets z_l, Robin data taken at xi.
std::vector<std::vector<double>> analytic_nu(const TowerConfig& cfg, const ReducedCoefficients& coeffs,
                                             const RobinResult& robin);
// eps exponents of the leading terms: 1 + 2 gamma_l for j = 0, the translation rows otherwise.
double analytic_nu_exponent(int n, int l, int j);

// J(PU_mu) - J_0(U_0) on the unit ball, evaluated term by term in rescaled variables.
double energy_deviation(int n, double mu, double eps);
// (1/n) int U_0^{2*}.
double energy_limit(int n);

struct FitGrid {
  std::vector<double> mu;
  std::vector<double> eps;

  static FitGrid primary();
  static FitGrid secondary();
};

struct FitReport {
  ReducedCoefficients coeffs;
  double c0 = 0.0;          // fitted limit of J
  double delta0 = 0.0;      // fitted constant offset from energy_limit
  double c_a = 0.0;         // coefficient of eps mu^2
  double c_b = 0.0;         // coefficient of mu^{n-2}
  double max_rel_residual = 0.0;
  double condition = 0.0;
  int samples = 0;
};

// D3 and ||grad V_j||^2 by quadrature; D1, D2 from the energy fit.
FitReport fit_constants(int n, const FitGrid& grid = FitGrid::primary(), double max_rel_residual = 1e-3);

double D3_quadrature(int n);
double D3_closed_form(int n);
// ||grad V_j||^2 on R^n, j = 0..n.
std::vector<double> grad_V_norms(int n);

}  // namespace bt
