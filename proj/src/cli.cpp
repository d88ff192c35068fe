#include "bubbletower/cli.hpp"

#include "bubbletower/gamma.hpp"
#include "bubbletower/greens.hpp"
#include "bubbletower/linear_theory.hpp"
#include "bubbletower/reduced_solver.hpp"
#include "bubbletower/reduction.hpp"

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <variant>

namespace bt {

namespace {

using FieldPtr = std::variant<int*, unsigned*, double*, bool*, std::string*, std::vector<double>*>;

struct Binding {
  std::string key;
  FieldPtr field;
  std::string help;
};

std::vector<Binding> bindings(RunConfig& c) {
  return {
      {"n", &c.n, "dimension (>= 7)"},
      {"k", &c.k, "number of bubbles"},
      {"eps", &c.eps, "comma-separated eps list, descending"},
      {"t", &c.t, "t_1..t_k (default: zeros of the reduced system)"},
      {"xi", &c.xi, "concentration point (default: origin)"},
      {"A", &c.A, "bound on t_l in [1/A, A] (0: 10 max(t, 1/t))"},
      {"seed_mode", &c.seed_mode, "ansatz or previous"},
      {"domain.boundary_table", &c.boundary_table, "star-shaped boundary table (default: unit ball)"},
      {"collocation.sources", &c.collocation_sources, "fundamental-solution sources"},
      {"collocation.seed", &c.collocation_seed, "seed of the collocation point draws"},
      {"grid.per_decade", &c.grid_per_decade, "linear-theory mesh points per decade"},
      {"grid.tail_points", &c.grid_tail_points, "linear-theory uniform tail points"},
      {"picard.tol", &c.picard_tol, "relative step tolerance"},
      {"picard.max_iterations", &c.picard_max_iterations, "iteration cap"},
      {"picard.eps_max", &c.picard_eps_max, "largest eps accepted by the fixed-point stages"},
      {"nu.t_scale", &c.nu_t_scale, "nu is evaluated at t_scale * t"},
      {"reduced.perturbation", &c.reduced_perturbation, "reduced Newton seed = perturbation * t"},
      {"fit.max_rel_residual", &c.fit_max_rel_residual, "refuse energy fits above this residual"},
      {"pde.per_decade", &c.pde.per_decade, "PDE mesh points per decade"},
      {"pde.rmin_factor", &c.pde.rmin_factor, "first PDE node at mu_k * rmin_factor"},
      {"pde.tol", &c.pde.tol, "scaled residual tolerance"},
      {"pde.max_newton", &c.pde.max_newton, "Newton iteration cap"},
      {"pde.profile_stride", &c.profile_stride, "write every stride-th node of solution profiles"},
      {"envelope.min_mu", &c.envelope_min_mu, "smallest admissible mu_k"},
      {"envelope.max_eps", &c.envelope_max_eps, "largest admissible eps"},
      {"sweep.extend", &c.sweep_extend, "halve eps until the regression has 4 points over a factor 8"},
      {"summary.gamma1_tol", &c.summary_gamma1_tol, "relative slope tolerance for gamma_1"},
      {"summary.gamma2_tol", &c.summary_gamma2_tol, "relative slope tolerance for gamma_2"},
      {"summary.nu1_tol", &c.summary_nu1_tol, "nu_1 ratio tolerance at the smallest eps"},
      {"summary.nu2_tol", &c.summary_nu2_tol, "nu_2 ratio tolerance at the smallest eps"},
  };
}

std::string cli_flag(const std::string& key) {
  std::string s = "--" + key;
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

double parse_double(const std::string& key, const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(trim(s), &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != trim(s).size()) throw DomainError(key + ": cannot read '" + s + "' as a number");
  return v;
}

long parse_integer(const std::string& key, const std::string& s) {
  const double v = parse_double(key, s);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw DomainError(key + ": '" + s + "' is not an integer");
  return static_cast<long>(v);
}

void assign(const Binding& b, const std::string& text) {
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, int>) {
          *p = static_cast<int>(parse_integer(b.key, text));
        } else if constexpr (std::is_same_v<T, unsigned>) {
          const long v = parse_integer(b.key, text);
          if (v < 0) throw DomainError(b.key + ": must be non-negative");
          *p = static_cast<unsigned>(v);
        } else if constexpr (std::is_same_v<T, double>) {
          *p = parse_double(b.key, text);
        } else if constexpr (std::is_same_v<T, bool>) {
          const std::string v = trim(text);
          if (v == "true" || v == "1") *p = true;
          else if (v == "false" || v == "0") *p = false;
          else throw DomainError(b.key + ": expected true or false, got '" + text + "'");
        } else if constexpr (std::is_same_v<T, std::string>) {
          *p = trim(text);
        } else {
          p->clear();
          std::stringstream ss(text);
          std::string item;
          while (std::getline(ss, item, ',')) {
            if (trim(item).empty()) continue;
            p->push_back(parse_double(b.key, item));
          }
        }
      },
      b.field);
}

std::string render(const FieldPtr& f) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, double>) {
          return format_number(*p);
        } else if constexpr (std::is_same_v<T, bool>) {
          return *p ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return *p;
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          std::string s;
          for (std::size_t i = 0; i < p->size(); ++i) s += (i ? "," : "") + format_number((*p)[i]);
          return s;
        } else {
          return std::to_string(*p);
        }
      },
      f);
}

const std::vector<std::string> kCommands = {"constants", "robin", "tparams", "ansatz", "linsolve", "picard",
                                            "nu",        "reduced", "solve", "sweep",  "pipeline"};

bool radial_only(const std::string& cmd) {
  return cmd != "constants" && cmd != "robin" && cmd != "tparams" && cmd != "reduced";
}

// Shared state of a run: domain, constants, Robin data and t.
struct Context {
  const RunConfig& cfg;
  DomainSpec dom;
  std::unique_ptr<CollocationGreen> solver;
  Eigen::VectorXd xi;
  std::optional<FitReport> fit;
  std::optional<RobinResult> robin;
  std::vector<double> t;

  explicit Context(const RunConfig& c) : cfg(c) {
    dom = cfg.boundary_table.empty() ? DomainSpec::unit_ball(cfg.n) : load_boundary_table(cfg.boundary_table, cfg.n);
    xi = Eigen::VectorXd::Zero(cfg.n);
    for (std::size_t i = 0; i < cfg.xi.size(); ++i) xi(static_cast<Eigen::Index>(i)) = cfg.xi[i];
  }

  const CollocationGreen* green() {
    if (dom.kind == DomainSpec::Kind::unit_ball) return nullptr;
    if (!solver) {
      CollocationOptions opt;
      opt.sources = cfg.collocation_sources;
      opt.collocation = 3 * cfg.collocation_sources;
      opt.seed = cfg.collocation_seed;
      solver = std::make_unique<CollocationGreen>(dom, opt);
    }
    return solver.get();
  }
  const FitReport& constants() {
    if (!fit) fit = fit_constants(cfg.n, FitGrid::primary(), cfg.fit_max_rel_residual);
    return *fit;
  }
  const RobinResult& robin_at_xi() {
    if (!robin) robin = robin_diag(dom, xi, green());
    return *robin;
  }
  const std::vector<double>& tvalues() {
    if (t.empty()) t = cfg.t.empty() ? explicit_t0(cfg.n, constants().coeffs, robin_at_xi().value, cfg.k) : cfg.t;
    return t;
  }
  double A(const std::vector<double>& tt) const {
    if (cfg.A > 0.0) return cfg.A;
    double a = 1.0;
    for (double x : tt) a = std::max({a, x, 1.0 / x});
    return 10.0 * a;
  }
  TowerConfig tower(double eps, double scale = 1.0) {
    std::vector<double> tt = tvalues();
    for (double& x : tt) x *= scale;
    TowerConfig c = TowerConfig::make(cfg.n, cfg.k, eps, tt);
    c.xi = xi;
    c.A = A(tt);
    c.validate();
    return c;
  }
};

// mu_k >= envelope.min_mu and eps <= envelope.max_eps for every eps.
void check_envelope(Context& ctx, const std::vector<double>& eps) {
  const RunConfig& c = ctx.cfg;
  for (double e : eps) {
    if (e > c.envelope_max_eps)
      throw DomainError("eps = " + short_num(e) + " is above the feasibility envelope bound envelope.max_eps = " +
                        short_num(c.envelope_max_eps));
    const TowerConfig tc = ctx.tower(e);
    const double muk = tc.mu(c.k);
    if (muk < c.envelope_min_mu)
      throw DomainError("eps = " + short_num(e) + " gives mu_" + std::to_string(c.k) + " = " + short_num(muk) +
                        " below the feasibility envelope bound envelope.min_mu = " + short_num(c.envelope_min_mu));
  }
}

std::vector<double> picard_eps(const RunConfig& c) {
  std::vector<double> out;
  for (double e : c.eps)
    if (e <= c.picard_eps_max) out.push_back(e);
  return out;
}

PicardOptions picard_options(const RunConfig& c) {
  PicardOptions o;
  o.tol = c.picard_tol;
  o.max_iterations = c.picard_max_iterations;
  o.eps_max = c.picard_eps_max;
  return o;
}

OutputTable table_constants(Context& ctx) {
  const FitReport& f = ctx.constants();
  const int n = ctx.cfg.n;
  OutputTable t("constants", {"quantity", "value"});
  t.add_row({"D1", f.coeffs.D1});
  t.add_row({"D2", f.coeffs.D2});
  t.add_row({"D3", f.coeffs.D3});
  t.add_row({"D3_closed_form", D3_closed_form(n)});
  t.add_row({"c0", f.c0});
  t.add_row({"energy_limit", energy_limit(n)});
  t.add_row({"fit_max_rel_residual", f.max_rel_residual});
  t.add_row({"fit_condition", f.condition});
  t.add_row({"fit_samples", f.samples});
  for (std::size_t j = 0; j < f.coeffs.gradV_norms.size(); ++j)
    t.add_row({"gradV_sq_" + std::to_string(j), f.coeffs.gradV_norms[j]});
  return t;
}

OutputTable table_robin(Context& ctx) {
  const RobinResult& r = ctx.robin_at_xi();
  OutputTable t("robin", {"quantity", "value"});
  t.add_row({"H_xi_xi", r.value});
  t.add_row({"gradient_norm", r.gradient.norm()});
  t.add_row({"accuracy", r.condition});
  const RobinCriticalPoint cp = find_robin_critical_point(ctx.dom, ctx.xi, {}, ctx.green());
  for (Eigen::Index i = 0; i < cp.xi.size(); ++i) t.add_row({"critical_xi_" + std::to_string(i + 1), cp.xi(i)});
  t.add_row({"critical_gradient_norm", cp.gradient_norm});
  t.add_row({"critical_nondegenerate", cp.nondegenerate});
  t.add_row({"critical_iterations", cp.iterations});
  return t;
}

OutputTable table_tparams(Context& ctx) {
  const auto& tt = ctx.tvalues();
  OutputTable t("tparams", {"eps", "l", "gamma", "t", "mu"});
  for (double e : ctx.cfg.eps) {
    const TowerConfig tc = ctx.tower(e);
    for (int l = 1; l <= ctx.cfg.k; ++l)
      t.add_row({e, l, to_string(gamma(ctx.cfg.n, l)), tt[static_cast<std::size_t>(l - 1)], tc.mu(l)});
  }
  return t;
}

OutputTable table_ansatz(Context& ctx) {
  OutputTable t("ansatz", {"eps", "r", "W", "R"});
  for (double e : ctx.cfg.eps) {
    const TowerConfig tc = ctx.tower(e);
    const RadialGrid g = tower_grid(tc, ctx.cfg.grid_per_decade, ctx.cfg.grid_tail_points);
    const RadialField W = tower_ansatz(tc, g);
    for (std::size_t i = 0; i < g.size(); ++i) t.add_row({e, g.r[i], W[i], residual_R_at(tc, g.r[i])});
  }
  return t;
}

OutputTable table_linsolve(Context& ctx) {
  OutputTable t("linsolve", {"eps", "l", "lambda", "multiplier_ratio", "annulus_ratio", "weighted_norm",
                             "orthogonality"});
  for (double e : ctx.cfg.eps) {
    const TowerConfig tc = ctx.tower(e);
    const RadialGrid g = tower_grid(tc, ctx.cfg.grid_per_decade, ctx.cfg.grid_tail_points);
    RadialField rhs = residual_R(tc, g);
    for (double& v : rhs.values) v = -v;
    const LinearSolveResult r = solve_projected(tc, g, rhs);
    for (int l = 0; l < ctx.cfg.k; ++l) {
      const auto u = static_cast<std::size_t>(l);
      t.add_row({e, l + 1, r.lambda[u], r.multiplier_ratios[u], r.annulus_ratios[u], r.weighted_norm,
                 r.orthogonality[u]});
    }
  }
  return t;
}

OutputTable table_picard(Context& ctx, const std::vector<double>& eps) {
  OutputTable t("picard", {"eps", "iterations", "max_contraction", "last_contraction", "final_weighted_norm",
                           "reapplication_defect", "converged"});
  for (double e : eps) {
    const TowerConfig tc = ctx.tower(e);
    const RadialGrid g = tower_grid(tc, ctx.cfg.grid_per_decade, ctx.cfg.grid_tail_points);
    const PicardReport r = picard_solve(tc, g, picard_options(ctx.cfg));
    const auto& c = r.contraction_estimates;
    const double cmax = c.empty() ? 0.0 : *std::max_element(c.begin(), c.end());
    t.add_row({e, r.iterations, cmax, c.empty() ? 0.0 : c.back(), r.final_weighted_norm, r.reapplication_defect,
               r.converged});
  }
  return t;
}

OutputTable table_nu(Context& ctx, const std::vector<double>& eps) {
  OutputTable t("nu", {"eps", "t_scale", "l", "nu", "nu_analytic", "ratio"});
  const double s = ctx.cfg.nu_t_scale;
  for (double e : eps) {
    const TowerConfig tc = ctx.tower(e, s);
    const RadialGrid g = tower_grid(tc, ctx.cfg.grid_per_decade, ctx.cfg.grid_tail_points);
    const PicardReport r = picard_solve(tc, g, picard_options(ctx.cfg));
    const NuExtraction x = extract_nu(tc, r.phi, ctx.constants().coeffs, ctx.robin_at_xi().value);
    for (int l = 0; l < ctx.cfg.k; ++l) {
      const auto u = static_cast<std::size_t>(l);
      t.add_row({e, s, l + 1, x.nu[u], x.nu_analytic[u], x.ratios[u]});
    }
  }
  return t;
}

std::vector<OutputTable> tables_reduced(Context& ctx) {
  const auto& t0 = ctx.tvalues();
  std::vector<double> seed_t = t0;
  for (double& x : seed_t) x *= ctx.cfg.reduced_perturbation;
  ReducedPoint seed = ReducedPoint::make(ctx.cfg.n, ctx.cfg.k, seed_t);
  seed.xi = ctx.xi;
  ReducedNewtonOptions opt;
  opt.A = ctx.A(seed_t);
  const ReducedPoint p = newton_reduced(seed, ctx.constants().coeffs, ctx.dom, opt, ctx.green());
  OutputTable t("reduced", {"l", "t_seed", "t_solution", "t_reference"});
  for (int l = 0; l < ctx.cfg.k; ++l) {
    const auto u = static_cast<std::size_t>(l);
    t.add_row({l + 1, seed_t[u], p.t[u], t0[u]});
  }
  OutputTable d("reduced_diagnostics", {"quantity", "value"});
  d.add_row({"iterations", p.iterations});
  d.add_row({"scaled_residual", p.scaled_residual});
  d.add_row({"jacobian_condition", p.jacobian_condition});
  d.add_row({"xi_norm", p.xi.norm()});
  return {t, d};
}

void add_solve_rows(OutputTable& t, OutputTable& prof, const SolveReport& r, int k, int stride) {
  for (int l = 1; l <= std::max(k, 1); ++l) {
    const bool has = static_cast<int>(r.extracted_mu.size()) >= l;
    const ScaleEstimate e = has ? r.extracted_mu[static_cast<std::size_t>(l - 1)] : ScaleEstimate{};
    t.add_row({r.eps, r.converged, to_string(r.stage), r.newton_iterations, r.final_residual, r.sign_changes,
               r.solution.size() ? r.solution[0] : 0.0, l, e.mu, e.mu_height, e.fit_residual, r.message});
  }
  if (!r.converged) return;
  for (std::size_t i = 0; i < r.solution.size(); i += static_cast<std::size_t>(stride))
    prof.add_row({r.eps, r.solution.grid.r[i], r.solution[i]});
}

OutputTable solve_table(const std::string& name) {
  return OutputTable(name, {"eps", "converged", "stage", "newton_iterations", "final_residual", "sign_changes",
                            "u0", "l", "mu", "mu_height", "fit_residual", "message"});
}

SeedMode seed_mode(const RunConfig& c) { return c.seed_mode == "previous" ? SeedMode::previous : SeedMode::ansatz; }

// Halves the smallest eps until there are 4 values spanning a factor 8.
std::vector<double> regression_eps(const RunConfig& c) {
  std::vector<double> e = c.eps;
  if (!c.sweep_extend) return e;
  while (e.size() < 4 || e.front() / e.back() < 8.0 * (1.0 - 1e-12)) e.push_back(0.5 * e.back());
  return e;
}

struct SweepOutcome {
  std::vector<OutputTable> tables;
  std::optional<ScalingReport> scaling;
  std::vector<SolveReport> reports;
  std::string failure;
};

SweepOutcome run_sweep(Context& ctx, const std::vector<double>& eps, bool regress) {
  check_envelope(ctx, eps);
  TowerConfig tmpl = ctx.tower(eps.front());
  SweepOutcome out;
  out.reports = continue_in_eps(tmpl, eps, seed_mode(ctx.cfg), ctx.cfg.pde);
  OutputTable t = solve_table(regress ? "sweep" : "solve");
  OutputTable prof(regress ? "sweep_profile" : "solve_profile", {"eps", "r", "u"});
  for (const auto& r : out.reports) add_solve_rows(t, prof, r, ctx.cfg.k, std::max(1, ctx.cfg.profile_stride));
  out.tables = {t, prof};
  if (!out.reports.empty() && !out.reports.back().converged) {
    out.failure = out.reports.back().message;
    return out;
  }
  if (regress) {
    out.scaling = scaling_regression(out.reports, ctx.cfg.n, ctx.cfg.k);
    OutputTable s("scaling", {"l", "slope", "predicted", "rel_error", "samples"});
    for (const auto& b : out.scaling->bubbles) s.add_row({b.l, b.slope, b.predicted, b.rel_error, b.eps.size()});
    out.tables.push_back(s);
  }
  return out;
}

int exit_code_of(const std::exception& e) { return dynamic_cast<const DomainError*>(&e) ? 2 : 3; }

void run_pipeline(Context& ctx, RunResult& res) {
  const RunConfig& c = ctx.cfg;
  auto& S = res.summary;
  auto stage = [&](const std::string& name, const std::function<void()>& body) {
    if (res.exit_code) return;
    try {
      body();
      S.emplace_back("stage." + name, "ok");
    } catch (const std::exception& e) {
      S.emplace_back("stage." + name, std::string("failed: ") + e.what());
      res.exit_code = exit_code_of(e);
    }
  };
  auto pass = [](bool ok) { return std::string(ok ? "pass" : "fail"); };

  stage("greens", [&] { res.tables.push_back(table_robin(ctx)); });
  stage("constants", [&] { res.tables.push_back(table_constants(ctx)); });
  stage("tparams", [&] {
    check_envelope(ctx, regression_eps(c));
    res.tables.push_back(table_tparams(ctx));
  });
  stage("ansatz", [&] { res.tables.push_back(table_ansatz(ctx)); });
  const std::vector<double> pe = picard_eps(c);
  if (pe.empty()) {
    S.emplace_back("stage.picard", "skipped: no eps <= picard.eps_max");
    S.emplace_back("stage.nu", "skipped: no eps <= picard.eps_max");
  } else {
    stage("picard", [&] { res.tables.push_back(table_picard(ctx, pe)); });
    stage("nu", [&] {
      res.tables.push_back(table_nu(ctx, pe));
      const OutputTable& t = res.tables.back();
      // Rows of the smallest eps come last.
      for (int l = 1; l <= c.k && l <= 2; ++l) {
        const auto& row = t.rows[t.rows.size() - static_cast<std::size_t>(c.k - l + 1)];
        const double ratio = std::stod(row[5]);
        const double tol = l == 1 ? c.summary_nu1_tol : c.summary_nu2_tol;
        S.emplace_back("nu" + std::to_string(l) + ".ratio_at_smallest_eps", row[5]);
        S.emplace_back("nu" + std::to_string(l) + ".tolerance", format_number(tol));
        S.emplace_back("nu" + std::to_string(l) + ".result", pass(std::abs(ratio - 1.0) <= tol));
      }
    });
  }
  stage("reduced", [&] {
    for (auto& t : tables_reduced(ctx)) res.tables.push_back(std::move(t));
  });
  stage("solve", [&] {
    SweepOutcome o = run_sweep(ctx, regression_eps(c), true);
    for (auto& t : o.tables) res.tables.push_back(std::move(t));
    if (!o.failure.empty()) throw NumericalError(o.failure);
    if (c.k >= 2) {
      bool ok = true;
      for (const auto& r : o.reports) ok = ok && r.sign_changes == c.k - 1;
      S.emplace_back("sign_changes.result", pass(ok));
    }
    for (const auto& b : o.scaling->bubbles) {
      const std::string key = "gamma" + std::to_string(b.l);
      const double tol = b.l == 1 ? c.summary_gamma1_tol : c.summary_gamma2_tol;
      S.emplace_back(key + ".slope", format_number(b.slope));
      S.emplace_back(key + ".predicted", format_number(b.predicted));
      S.emplace_back(key + ".rel_error", format_number(b.rel_error));
      S.emplace_back(key + ".tolerance", format_number(tol));
      S.emplace_back(key + ".result", pass(b.rel_error <= tol));
    }
  });
}

}  // namespace

std::string canonical_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string s = "command=" + cfg.command + "\n";
  for (const auto& b : bindings(copy)) s += b.key + "=" + render(b.field) + "\n";
  return s;
}

std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a(canonical_config(cfg))); }

void validate_static(const RunConfig& c) {
  if (std::find(kCommands.begin(), kCommands.end(), c.command) == kCommands.end())
    throw DomainError("unknown command '" + c.command + "'");
  if (c.n < 7) throw DomainError("n = " + std::to_string(c.n) + ": the construction needs n >= 7");
  if (c.n > 40) throw DomainError("n = " + std::to_string(c.n) + " is outside the supported range 7..40");
  if (c.command != "constants" && c.command != "robin") {
    if (c.k < 1) throw DomainError("k must be at least 1");
    const int kmax = c.n >= 9 ? 3 : 2;
    if (c.k > kmax)
      throw DomainError("k = " + std::to_string(c.k) + " is outside the feasibility envelope (k <= " +
                        std::to_string(kmax) + " at n = " + std::to_string(c.n) + ")");
    if (c.eps.empty()) throw DomainError("eps list is empty");
    for (std::size_t i = 0; i < c.eps.size(); ++i) {
      if (!(c.eps[i] > 0.0)) throw DomainError("eps values must be positive");
      if (i && !(c.eps[i] < c.eps[i - 1])) throw DomainError("eps list must be strictly descending");
    }
  }
  if (!c.t.empty() && c.t.size() != static_cast<std::size_t>(c.k))
    throw DomainError("t needs k = " + std::to_string(c.k) + " values");
  for (double x : c.t)
    if (!(x > 0.0)) throw DomainError("t values must be positive");
  if (c.xi.size() > static_cast<std::size_t>(c.n)) throw DomainError("xi has more than n coordinates");
  if (c.A != 0.0 && !(c.A > 1.0)) throw DomainError("A must exceed 1");
  if (c.seed_mode != "ansatz" && c.seed_mode != "previous")
    throw DomainError("seed_mode must be ansatz or previous, got '" + c.seed_mode + "'");
  if (c.grid_per_decade < 2 || c.pde.per_decade < 2) throw DomainError("per_decade must be at least 2");
  if (c.profile_stride < 1) throw DomainError("pde.profile_stride must be at least 1");
  if (!(c.picard_tol > 0.0) || !(c.pde.tol > 0.0)) throw DomainError("tolerances must be positive");
  if (!(c.nu_t_scale > 0.0) || !(c.reduced_perturbation > 0.0)) throw DomainError("scale factors must be positive");
  if (!(c.envelope_min_mu > 0.0) || !(c.envelope_max_eps > 0.0)) throw DomainError("envelope bounds must be positive");
  if (!c.boundary_table.empty()) {
    if (!std::filesystem::exists(c.boundary_table))
      throw DomainError("boundary table '" + c.boundary_table + "' not found");
    if (radial_only(c.command))
      throw DomainError("command '" + c.command + "' needs the unit ball (radial stages); drop domain.boundary_table");
  }
}

std::vector<std::string> stage_plan(const RunConfig& c) {
  std::vector<std::string> stages;
  if (c.command == "pipeline")
    stages = {"greens", "constants", "tparams", "ansatz", "picard", "nu", "reduced", "solve", "scaling"};
  else if (c.command == "sweep")
    stages = {"constants", "tparams", "solve", "scaling"};
  else
    stages = {c.command};
  return stages;
}

RunResult run_command(const RunConfig& cfg) {
  RunResult res;
  try {
    validate_static(cfg);
    Context ctx(cfg);
    const std::string& cmd = cfg.command;
    if (cmd == "pipeline") {
      run_pipeline(ctx, res);
      return res;
    }
    if (cmd == "constants") {
      res.tables.push_back(table_constants(ctx));
    } else if (cmd == "robin") {
      res.tables.push_back(table_robin(ctx));
    } else if (cmd == "reduced") {
      res.tables = tables_reduced(ctx);
    } else {
      check_envelope(ctx, cmd == "sweep" ? regression_eps(cfg) : cfg.eps);
      if (cmd == "tparams") res.tables.push_back(table_tparams(ctx));
      if (cmd == "ansatz") res.tables.push_back(table_ansatz(ctx));
      if (cmd == "linsolve") res.tables.push_back(table_linsolve(ctx));
      if (cmd == "picard") res.tables.push_back(table_picard(ctx, cfg.eps));
      if (cmd == "nu") res.tables.push_back(table_nu(ctx, cfg.eps));
      if (cmd == "solve" || cmd == "sweep") {
        SweepOutcome o = run_sweep(ctx, cmd == "sweep" ? regression_eps(cfg) : cfg.eps, cmd == "sweep");
        res.tables = std::move(o.tables);
        if (!o.failure.empty()) {
          res.summary.emplace_back("failure", o.failure);
          res.exit_code = 3;
        }
        if (o.scaling)
          for (const auto& b : o.scaling->bubbles)
            res.summary.emplace_back("gamma" + std::to_string(b.l) + ".slope", format_number(b.slope));
      }
    }
  } catch (const std::exception& e) {
    res.summary.emplace_back("error", e.what());
    res.exit_code = exit_code_of(e);
  }
  return res;
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Bubble-tower solver for the radial Brezis-Nirenberg problem", "bubbletower"};
  std::map<std::string, std::string> given;
  std::vector<Binding> binds = bindings(cfg);
  for (const auto& b : binds) app.add_option(cli_flag(b.key), given[b.key], b.help);
  app.add_option("--config", cfg.config_path, "INI file; sections map to key prefixes");
  app.add_option("--out", cfg.out_dir, "output directory (default: stdout)");
  app.add_flag("--dry-run", cfg.dry_run, "print the resolved stage plan and exit");
  for (const auto& c : kCommands) app.add_subcommand(c, "run the " + c + " stage")->fallthrough();
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }
  cfg.command = app.get_subcommands().front()->get_name();

  try {
    if (!cfg.config_path.empty()) {
      boost::property_tree::ptree tree;
      try {
        boost::property_tree::ini_parser::read_ini(cfg.config_path, tree);
      } catch (const boost::property_tree::ini_parser_error& e) {
        throw DomainError(std::string("config: ") + e.what());
      }
      std::map<std::string, std::string> file;
      for (const auto& [k1, v1] : tree) {
        if (v1.empty()) {
          file[k1] = v1.data();
          continue;
        }
        for (const auto& [k2, v2] : v1) file[k1 + "." + k2] = v2.data();
      }
      for (const auto& [key, value] : file) {
        auto it = std::find_if(binds.begin(), binds.end(), [&](const Binding& b) { return b.key == key; });
        if (it == binds.end()) throw DomainError("config: unknown key '" + key + "'");
        assign(*it, value);
      }
    }
    for (const auto& b : binds)
      if (app.count(cli_flag(b.key))) assign(b, given[b.key]);
    validate_static(cfg);
  } catch (const DomainError& e) {
    err << "validation error: " << e.what() << "\n";
    return 2;
  }

  const std::string hash = config_hash(cfg);
  if (cfg.dry_run) {
    out << "command: " << cfg.command << "\nconfig_hash: " << hash << "\nstages:";
    for (const auto& s : stage_plan(cfg)) out << " " << s;
    out << "\n" << canonical_config(cfg);
    return 0;
  }

  const RunResult res = run_command(cfg);
  std::ostringstream summary;
  summary << "command: " << cfg.command << "\nconfig_hash: " << hash << "\nexit_code: " << res.exit_code << "\n";
  for (const auto& [k, v] : res.summary) summary << k << ": " << v << "\n";

  if (cfg.out_dir.empty()) {
    for (const auto& t : res.tables) out << t.to_csv(hash) << "\n";
    out << summary.str();
  } else {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    for (const auto& t : res.tables) {
      std::ofstream f(std::filesystem::path(cfg.out_dir) / (t.name + ".csv"), std::ios::binary);
      f << t.to_csv(hash);
      if (!f) {
        err << "cannot write " << t.name << ".csv in " << cfg.out_dir << "\n";
        return 3;
      }
    }
    std::ofstream f(std::filesystem::path(cfg.out_dir) / "summary.txt", std::ios::binary);
    f << summary.str();
    out << summary.str();
  }
  for (const auto& [k, v] : res.summary)
    if (k == "error") err << v << "\n";
  return res.exit_code;
}

}  // namespace bt
