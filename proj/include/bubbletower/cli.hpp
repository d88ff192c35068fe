#pragma once

#include "bubbletower/pde.hpp"
#include "bubbletower/table.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace bt {

// Parameters of one run. Config keys are "section.key" (top-level keys have no section);
// command-line flags use the same names and override the file.
struct RunConfig {
  std::string command;
  int n = 7;
  int k = 1;
  std::vector<double> eps = {1e-2};
  std::vector<double> t;   // empty: explicit_t0 from the fitted constants
  std::vector<double> xi;  // empty: origin
  double A = 0.0;          // 0: 10 max(t, 1/t)
  std::string seed_mode = "ansatz";

  std::string boundary_table;  // domain.boundary_table; empty: unit ball
  int collocation_sources = 600;
  unsigned collocation_seed = 1;

  int grid_per_decade = 12;
  int grid_tail_points = 200;
  double picard_tol = 1e-10;
  int picard_max_iterations = 40;
  double picard_eps_max = 5e-2;
  double nu_t_scale = 2.0;
  double reduced_perturbation = 1.2;
  double fit_max_rel_residual = 1e-3;
  PdeOptions pde;
  int profile_stride = 1;

  double envelope_min_mu = 1e-14;
  double envelope_max_eps = 1.0;
  bool sweep_extend = true;

  double summary_gamma1_tol = 0.10;
  double summary_gamma2_tol = 0.15;
  double summary_nu1_tol = 0.20;
  double summary_nu2_tol = 0.30;

  // Not part of the hash.
  std::string out_dir;
  std::string config_path;
  bool dry_run = false;
};

// key=value lines over every hashed field, in a fixed order.
std::string canonical_config(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

// Checks that need no computation: n, k, eps ordering and signs, option ranges, domain file.
void validate_static(const RunConfig& cfg);

struct RunResult {
  std::vector<OutputTable> tables;
  std::vector<std::pair<std::string, std::string>> summary;
  int exit_code = 0;
};

// Runs cfg.command. Domain errors map to exit code 2, numerical failures to 3;
// pipeline stage failures keep the tables of earlier stages.
RunResult run_command(const RunConfig& cfg);
std::vector<std::string> stage_plan(const RunConfig& cfg);

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bt
