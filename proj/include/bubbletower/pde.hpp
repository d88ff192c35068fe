#pragma once

#include "bubbletower/numerics.hpp"
#include "bubbletower/profiles.hpp"

#include <string>
#include <vector>

namespace bt {

struct PdeOptions {
  int per_decade = 24;
  double rmin_factor = 1.0 / 400.0;  // first node at mu_k * rmin_factor
  double tol = 1e-9;                 // sup |F| <= tol * sup |u|^p
  int max_newton = 60;
  int max_halvings = 30;
  int max_pseudo_steps = 400;
  bool allow_shooting = true;
  int bisection_steps = 200;
};

// Log-uniform mesh from mu_k * rmin_factor to 1.
RadialGrid pde_grid(const TowerConfig& cfg, const PdeOptions& opt = {});

enum class SolveStage { none, newton, pseudo_transient, shooting };
const char* to_string(SolveStage s);

struct ScaleEstimate {
  double mu = 0.0;            // refined by the profile fit
  double mu_height = 0.0;     // from the extremum height alone
  double peak_radius = 0.0;
  double peak_value = 0.0;
  double fit_residual = 0.0;  // rms relative misfit over the fit windows
};

struct SolveReport {
  RadialField solution;
  double eps = 0.0;
  int newton_iterations = 0;
  double final_residual = 0.0;  // sup |F| / sup |u|^p
  int sign_changes = 0;
  std::vector<ScaleEstimate> extracted_mu;  // l = 1..k
  std::vector<double> residual_history;
  SolveStage stage = SolveStage::none;
  bool converged = false;
  std::string message;
};

// Discrete radial problem Delta u - eps u - |u|^{p-1} u = 0, u(1) = 0, in float128.
// Stages: damped Newton from the seed, pseudo-transient continuation, a shooting
// bracket on u(0) for k-1 interior sign changes, then a Newton polish.
SolveReport solve_bvp(const TowerConfig& cfg, const RadialGrid& grid, const RadialField& seed,
                      const PdeOptions& opt = {});

enum class SeedMode { ansatz, previous };

// Solves along a descending eps list with the template's t, z, xi and signs.
// A failure stops the sweep; the failed entry is returned with converged = false.
std::vector<SolveReport> continue_in_eps(const TowerConfig& tmpl, const std::vector<double>& eps_list,
                                         SeedMode mode, const PdeOptions& opt = {});

// Interior sign changes over nodes 0..N-2 (zeros skipped).
int count_sign_changes(const std::vector<double>& u);

// Alternating extrema of |u|, height inversion, then a joint least-squares fit
// of sum_l kappa_l P U_{mu_l} over windows [r*/3, 3 r*] around each extremum.
std::vector<ScaleEstimate> extract_scales(const RadialField& u, int k);

struct ScalingReport {
  struct Bubble {
    int l = 1;
    std::vector<double> eps;
    std::vector<double> mu;
    double slope = 0.0;
    double predicted = 0.0;
    double rel_error = 0.0;
  };
  std::vector<Bubble> bubbles;
};

// log mu_l against log eps, compared with gamma(n, l). Needs >= 4 converged reports
// spanning a factor >= 8 in eps.
ScalingReport scaling_regression(const std::vector<SolveReport>& reports, int n, int k);

// |int(|grad u|^2 - eps u^2) - int |u|^{2*}| / int |u|^{2*} with the mesh forms.
double energy_identity_defect(const RadialField& u, double eps);
// max |J_ij vol_i - J_ji vol_j| / max |J_ij vol_i| for the Jacobian of F.
double jacobian_asymmetry(const RadialField& u, double eps);
// sup |F(u)| / sup |u|^p on the interior nodes.
double discrete_residual(const RadialField& u, double eps);

}  // namespace bt
