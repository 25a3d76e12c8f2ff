// Command-line harness: sample, convergence, compare, diagnose, oracle-check.
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "evodiff/diagnostics.hpp"
#include "evodiff/errors.hpp"
#include "evodiff/harness.hpp"

using namespace evodiff;

namespace {

struct CommonOpts {
  std::string schedule = "vp_linear";
  double beta0 = 0.1, beta1 = 20.0;
  double sigma_min = 0.002, sigma_max = 80.0;
  std::string grid = "logsnr";
  double rho = 7.0;
  double t_start = 1.0, t_end = 1e-3;
  std::string dist = "gaussian";
  int dim = 2;
  int components = 4;
  bool custom_times = false;
};

void add_common(CLI::App* app, CommonOpts& o) {
  app->add_option("--schedule", o.schedule, "vp_linear | vp_cosine | ve_edm");
  app->add_option("--beta0", o.beta0, "VP linear beta(0)");
  app->add_option("--beta1", o.beta1, "VP linear beta(1)");
  app->add_option("--sigma-min", o.sigma_min, "VE minimum noise level");
  app->add_option("--sigma-max", o.sigma_max, "VE maximum noise level");
  app->add_option("--grid", o.grid, "uniform | logsnr | karras");
  app->add_option("--rho", o.rho, "Karras exponent");
  app->add_option("--t-start", o.t_start, "start time (noisiest)")->each([&o](const std::string&) {
    o.custom_times = true;
  });
  app->add_option("--t-end", o.t_end, "end time")->each([&o](const std::string&) {
    o.custom_times = true;
  });
  app->add_option("--dist", o.dist, "gaussian | gmm");
  app->add_option("--dim", o.dim, "data dimension");
  app->add_option("--components", o.components, "mixture components");
}

std::string common_config_text(const CommonOpts& o) {
  std::ostringstream os;
  os << "schedule = " << o.schedule << "\n";
  os << "beta0 = " << format_double(o.beta0) << "\n";
  os << "beta1 = " << format_double(o.beta1) << "\n";
  os << "sigma_min = " << format_double(o.sigma_min) << "\n";
  os << "sigma_max = " << format_double(o.sigma_max) << "\n";
  os << "grid = " << o.grid << "\n";
  os << "rho = " << format_double(o.rho) << "\n";
  if (o.schedule != "ve_edm" || o.custom_times) {
    os << "t_start = " << format_double(o.t_start) << "\n";
    os << "t_end = " << format_double(o.t_end) << "\n";
  }
  os << "dist = " << o.dist << "\n";
  os << "dim = " << o.dim << "\n";
  os << "components = " << o.components << "\n";
  return os.str();
}

int run_sample(const CommonOpts& common, const std::string& solver, int steps, double mu,
               const std::string& r_strategy, bool reuse_probe, const std::string& zeta_map,
               const std::string& eta_formula, std::uint64_t seed, const std::string& out,
               const std::string& trajectory_out) {
  std::ostringstream cfg_text;
  cfg_text << common_config_text(common);
  cfg_text << "solver = " << solver << "\n";
  cfg_text << "steps = " << steps << "\n";
  cfg_text << "seed = " << seed << "\n";
  cfg_text << "mu = " << format_double(mu) << "\n";
  cfg_text << "r_strategy = " << r_strategy << "\n";
  cfg_text << "reuse_probe = " << (reuse_probe ? "true" : "false") << "\n";
  cfg_text << "zeta_map = " << zeta_map << "\n";
  cfg_text << "eta_formula = " << eta_formula << "\n";
  const ExperimentConfig cfg = parse_config(cfg_text.str());

  const NoiseSchedule schedule = cfg.make_schedule();
  const DataDistribution dist = cfg.make_distribution();
  const TimeGrid grid = make_grid(schedule, cfg.grid_policy, steps, cfg.t_start, cfg.t_end, cfg.rho);
  RandomStream rng(seed, StreamTag::InitNoise);
  const Vec xT = draw_start_state(schedule, cfg.t_start, static_cast<std::size_t>(cfg.dim), rng);

  DenoiserOracle oracle(dist, schedule, cfg.solvers[0].param);
  const bool want_traj = !trajectory_out.empty();
  const RunResult res = run(cfg.solvers[0], oracle, grid, schedule, xT, want_traj);

  std::ofstream f(out, std::ios::binary);
  f << step_records_csv(res.records);
  std::cout << "solver=" << cfg.solvers[0].name() << " steps=" << steps << " nfe=" << res.nfe
            << "\nx0 =";
  for (double v : res.x0) std::cout << " " << format_double(v);
  std::cout << "\nstep records -> " << out << "\n";

  if (want_traj) {
    if (cfg.dist_kind != "gaussian") {
      std::cerr << "trajectory output needs the gaussian oracle\n";
      return 2;
    }
    std::ofstream tf(trajectory_out, std::ios::binary);
    tf << trajectory_csv(entropy_trajectory(res, xT, grid, dist, schedule));
    std::cout << "trajectory -> " << trajectory_out << "\n";
  }
  return 0;
}

int run_convergence(const CommonOpts& common, const std::string& solvers_csv,
                    const std::string& ns_csv, int n_ref, int trials, std::uint64_t seed,
                    const std::string& out) {
  std::vector<int> Ns;
  {
    std::istringstream is(ns_csv);
    std::string tok;
    while (std::getline(is, tok, ',')) Ns.push_back(std::stoi(tok));
  }
  std::ostringstream base;
  base << common_config_text(common) << "solver = " << solvers_csv << "\nseed = " << seed << "\n";
  const ExperimentConfig cfg = parse_config(base.str());
  const NoiseSchedule schedule = cfg.make_schedule();
  const DataDistribution dist = cfg.make_distribution();

  std::ostringstream csv;
  csv << "solver,N,mean_error,slope,exact\n";
  for (const SolverConfig& sc : cfg.solvers) {
    const ConvergenceResult r = convergence_order(sc, dist, schedule, cfg.grid_policy, Ns, n_ref,
                                                  trials, seed, cfg.t_start, cfg.t_end,
                                                  static_cast<std::size_t>(cfg.dim));
    for (std::size_t j = 0; j < r.steps.size(); ++j)
      csv << sc.name() << "," << r.steps[j] << "," << format_double(r.mean_error[j]) << ","
          << format_double(r.slope) << "," << (r.exact ? 1 : 0) << "\n";
    std::cout << sc.name() << ": slope = " << format_double(r.slope)
              << (r.exact ? " (exact integrator; fit skipped)" : "") << "\n";
  }
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    f << csv.str();
    std::cout << "refinement table -> " << out << "\n";
  }
  return 0;
}

int run_compare(const CommonOpts& common, const std::string& config_path,
                const std::string& solvers_csv, const std::string& steps_csv,
                const std::string& seeds_csv, int n_samples, int jobs, const std::string& out) {
  ExperimentConfig cfg;
  if (!config_path.empty()) {
    std::ifstream f(config_path, std::ios::binary);
    if (!f) {
      std::cerr << "cannot read config file " << config_path << "\n";
      return 2;
    }
    std::ostringstream os;
    os << f.rdbuf();
    cfg = parse_config(os.str());
  } else {
    std::ostringstream text;
    text << common_config_text(common);
    text << "solver = " << solvers_csv << "\n";
    text << "steps = " << steps_csv << "\n";
    text << "seeds = " << seeds_csv << "\n";
    text << "n_samples = " << n_samples << "\n";
    text << "out = " << out << "\n";
    cfg = parse_config(text.str());
  }
  const RunManifest m = run_experiment(cfg, jobs);
  std::cout << "config " << m.config_hash << ": " << m.cells.size() << " cells, " << m.n_failed
            << " failed\nmetrics -> " << m.csv_path << "\n";
  if (m.n_failed == 0) return 0;
  return m.n_failed == static_cast<int>(m.cells.size()) ? 2 : 1;
}

int run_diagnose(const CommonOpts& common, const std::string& check, int n_samples,
                 std::uint64_t seed, const std::string& out) {
  const ExperimentConfig cfg = parse_config(common_config_text(common) + "seed = 1\n");
  const NoiseSchedule schedule = cfg.make_schedule();
  std::ostringstream csv;

  if (check == "prop1") {
    const DataDistribution dist = cfg.make_distribution();
    csv << "t_lo,t_hi,n,mse,variance_term,bias_term,residual,standard_error\n";
    RandomStream rng(seed, StreamTag::Metrics);
    for (int n : {n_samples, 4 * n_samples}) {
      const auto r = reconstruction_decomposition_check(dist, schedule, 0.3, 0.5, n, rng);
      csv << "0.3,0.5," << n << "," << format_double(r.mse) << ","
          << format_double(r.variance_term) << "," << format_double(r.bias_term) << ","
          << format_double(r.residual) << "," << format_double(r.standard_error) << "\n";
    }
  } else if (check == "prop2") {
    csv << "ratio,var_ratio,delta_h,interval_lo,interval_hi\n";
    RandomStream rng(seed, StreamTag::Metrics);
    for (int i = 0; i < 1000; ++i) {
      const double vr = rng.uniform(0.25, 4.0);
      const double hi = 4.0 / (1.0 + vr);
      if (hi <= 1.0) continue;
      const double rho = 1.0 + (hi - 1.0) * rng.uniform(1e-3, 1.0 - 1e-3);
      const auto r = delta_entropy_gradient_vs_ddim(rho, 1.0, 1.0, vr, cfg.dim);
      csv << format_double(rho) << "," << format_double(vr) << "," << format_double(r.delta_h)
          << "," << format_double(r.interval_lo) << "," << format_double(r.interval_hi) << "\n";
    }
  } else if (check == "thm1") {
    const DataDistribution dist = cfg.make_distribution();
    const TimeGrid grid = make_grid(schedule, cfg.grid_policy, 20, cfg.t_start, cfg.t_end, cfg.rho);
    RandomStream rng(seed, StreamTag::Metrics);
    const auto rows = data_vs_noise_variance(dist, schedule, grid, n_samples, rng);
    csv << "t_cur,t_next,var_data,var_noise,coefficient_ordering_ok\n";
    for (const auto& r : rows)
      csv << format_double(r.t_cur) << "," << format_double(r.t_next) << ","
          << format_double(r.var_data) << "," << format_double(r.var_noise) << ","
          << (r.coefficient_ordering_ok ? 1 : 0) << "\n";
  } else if (check == "entropy") {
    const DataDistribution dist = cfg.make_distribution();
    if (cfg.dist_kind != "gaussian") {
      std::cerr << "entropy check needs the gaussian oracle\n";
      return 2;
    }
    const TimeGrid grid = make_grid(schedule, cfg.grid_policy, 16, cfg.t_start, cfg.t_end, cfg.rho);
    RandomStream rng(seed, StreamTag::InitNoise);
    const Vec xT = draw_start_state(schedule, cfg.t_start, static_cast<std::size_t>(cfg.dim), rng);
    DenoiserOracle o1(dist, schedule, Parameterization::DataPrediction);
    DenoiserOracle o2(dist, schedule, Parameterization::DataPrediction);
    const RunResult ra = run(solver_config_from_name("ddim"), o1, grid, schedule, xT, true);
    const RunResult rb = run(solver_config_from_name("evodiff"), o2, grid, schedule, xT, true);
    const auto ta = entropy_trajectory(ra, xT, grid, dist, schedule);
    const auto tb = entropy_trajectory(rb, xT, grid, dist, schedule);
    csv << "i,t_i,var_ddim,var_evodiff,entropy_ddim,entropy_evodiff\n";
    for (std::size_t i = 0; i < ta.size(); ++i)
      csv << ta[i].index << "," << format_double(ta[i].t) << ","
          << format_double(ta[i].var_estimate) << "," << format_double(tb[i].var_estimate) << ","
          << format_double(ta[i].entropy_estimate) << ","
          << format_double(tb[i].entropy_estimate) << "\n";
  } else {
    std::cerr << "unknown check '" << check << "' (prop1|prop2|thm1|entropy)\n";
    return 2;
  }

  if (out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream f(out, std::ios::binary);
    f << csv.str();
    std::cout << check << " -> " << out << "\n";
  }
  return 0;
}

int run_oracle_check(int instances, std::uint64_t seed, const std::string& report) {
  std::ostringstream csv;
  csv << "instance,kind,closed_form,grid_argmin,delta\n";
  RandomStream rng(seed, StreamTag::Instances);
  double max_delta = 0.0;
  for (int i = 0; i < instances; ++i) {
    ZetaInputs zin;
    zin.P = rng.normal_vec(8);
    zin.D = rng.normal_vec(8);
    zin.m_t = rng.normal_vec(8);
    zin.sigma_h = 0.2 + std::fabs(rng.normal());
    const double zc = zeta_star(zin, OptFormula::AnalyticMin);
    if (std::fabs(zc) <= 4.5) {
      const GridSearchResult zg = grid_search_min(zin, -5.0, 5.0, 1e-4);
      const double delta = std::fabs(zc - zg.argmin);
      max_delta = std::max(max_delta, delta);
      csv << i << ",zeta," << format_double(zc) << "," << format_double(zg.argmin) << ","
          << format_double(delta) << "\n";
    }
    EtaInputs ein{rng.normal_vec(8), rng.normal_vec(8)};
    const double ec = eta_star(ein, OptFormula::AnalyticMin);
    if (std::fabs(ec) <= 4.5) {
      const GridSearchResult eg = grid_search_min(ein, -5.0, 5.0, 1e-4);
      const double delta = std::fabs(ec - eg.argmin);
      max_delta = std::max(max_delta, delta);
      csv << i << ",eta," << format_double(ec) << "," << format_double(eg.argmin) << ","
          << format_double(delta) << "\n";
    }
  }
  std::cout << "max |closed form - grid argmin| = " << format_double(max_delta) << "\n";
  if (!report.empty()) {
    std::ofstream f(report, std::ios::binary);
    f << csv.str();
    std::cout << "report -> " << report << "\n";
  }
  return max_delta <= 2e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion-inference solvers with entropy-aware variance control"};
  app.require_subcommand(1);

  auto* sample = app.add_subcommand("sample", "run one trajectory and write step records");
  CommonOpts sc;
  add_common(sample, sc);
  std::string solver = "evodiff", r_strategy = "logsnr", zeta_map = "plain";
  std::string eta_formula = "analytic", out = "run.csv", trajectory_out;
  int steps = 10;
  double mu = 0.5;
  bool reuse_probe = true, no_reuse = false;
  std::uint64_t seed = 7;
  sample->add_option("--solver", solver, "solver name");
  sample->add_option("--steps", steps, "grid steps N");
  sample->add_option("--mu", mu, "sigmoid shift parameter");
  sample->add_option("--r-strategy", r_strategy, "logsnr|normvar|arctan|refined|confidence");
  sample->add_flag("--reuse-probe", reuse_probe, "reuse the probe evaluation (default)");
  sample->add_flag("--no-reuse-probe", no_reuse, "fresh evaluation each step");
  sample->add_option("--zeta-map", zeta_map, "plain | scaled");
  sample->add_option("--eta-formula", eta_formula, "analytic | paper");
  sample->add_option("--seed", seed, "root seed");
  sample->add_option("--out", out, "step-record CSV path");
  sample->add_option("--trajectory-out", trajectory_out, "per-step variance/entropy CSV");

  auto* conv = app.add_subcommand("convergence", "refinement study of terminal errors");
  CommonOpts cc;
  add_common(conv, cc);
  std::string conv_solvers = "ddim,dpmpp_2m,evodiff", conv_ns = "20,40,80", conv_out;
  int conv_ref = 5120, conv_trials = 64;
  std::uint64_t conv_seed = 7;
  conv->add_option("--solvers", conv_solvers, "comma-separated solver names");
  conv->add_option("--Ns", conv_ns, "comma-separated step counts");
  conv->add_option("--ref", conv_ref, "reference step count");
  conv->add_option("--trials", conv_trials, "seeded trials");
  conv->add_option("--seed", conv_seed, "root seed");
  conv->add_option("--out", conv_out, "CSV path");

  auto* cmp = app.add_subcommand("compare", "solver x steps x seed metric matrix");
  CommonOpts mc;
  add_common(cmp, mc);
  std::string cmp_config, cmp_solvers = "ddim,dpmpp_2m,evodiff", cmp_steps = "10";
  std::string cmp_seeds = "1,2,3,4", cmp_out = "results";
  int cmp_samples = 1024, cmp_jobs = 0;
  cmp->add_option("--config", cmp_config, "config file (overrides the flags)");
  cmp->add_option("--solvers", cmp_solvers, "comma-separated solver names");
  cmp->add_option("--steps", cmp_steps, "comma-separated step counts");
  cmp->add_option("--seeds", cmp_seeds, "comma-separated seeds");
  cmp->add_option("--samples", cmp_samples, "trajectories per cell");
  cmp->add_option("--jobs", cmp_jobs, "worker threads (0 = hardware)");
  cmp->add_option("--out", cmp_out, "output directory");

  auto* diag = app.add_subcommand("diagnose", "verify the information-theoretic claims");
  CommonOpts dc;
  add_common(diag, dc);
  std::string check = "prop1", diag_out;
  int diag_samples = 10000;
  std::uint64_t diag_seed = 3;
  diag->add_option("--check", check, "prop1 | prop2 | thm1 | entropy");
  diag->add_option("--samples", diag_samples, "Monte-Carlo sample count");
  diag->add_option("--seed", diag_seed, "root seed");
  diag->add_option("--out", diag_out, "CSV path (stdout when omitted)");

  auto* oc = app.add_subcommand("oracle-check", "closed forms vs grid-search argmins");
  int oc_instances = 1000;
  std::uint64_t oc_seed = 3;
  std::string oc_report;
  oc->add_option("--instances", oc_instances, "random instances");
  oc->add_option("--seed", oc_seed, "root seed");
  oc->add_option("--report", oc_report, "per-instance CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sample)
      return run_sample(sc, solver, steps, mu, r_strategy, reuse_probe && !no_reuse, zeta_map,
                        eta_formula, seed, out, trajectory_out);
    if (*conv)
      return run_convergence(cc, conv_solvers, conv_ns, conv_ref, conv_trials, conv_seed, conv_out);
    if (*cmp)
      return run_compare(mc, cmp_config, cmp_solvers, cmp_steps, cmp_seeds, cmp_samples, cmp_jobs,
                         cmp_out);
    if (*diag) return run_diagnose(dc, check, diag_samples, diag_seed, diag_out);
    if (*oc) return run_oracle_check(oc_instances, oc_seed, oc_report);
  } catch (const ParseError& e) {
    std::cerr << "config parse error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "config validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
