#include "evodiff/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "evodiff/errors.hpp"

namespace evodiff {

namespace {

constexpr const char* kArtifactVersion = "1.0.0";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct Collector {
  std::vector<std::pair<std::string, std::string>> issues;  // (field, reason)
  void add(const std::string& field, const std::string& reason) { issues.emplace_back(field, reason); }
  void raise_if_any() const {
    if (issues.empty()) return;
    std::ostringstream os;
    for (std::size_t i = 0; i < issues.size(); ++i) {
      if (i) os << "; ";
      os << issues[i].first << ": " << issues[i].second;
    }
    throw ValidationError(issues[0].first, os.str());
  }
};

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

NoiseSchedule ExperimentConfig::make_schedule() const {
  switch (schedule_kind) {
    case ScheduleKind::VpLinear: return NoiseSchedule::vp_linear(beta0, beta1);
    case ScheduleKind::VpCosine: return NoiseSchedule::vp_cosine();
    case ScheduleKind::VeEdm: return NoiseSchedule::ve_edm(sigma_min, sigma_max);
  }
  throw DomainError("unknown schedule kind");
}

DataDistribution make_gmm(int dim, int components, double radius, double var) {
  if (dim < 1 || components < 1) throw ValidationError("components", "dim and components must be >= 1");
  std::vector<GaussianComponent> comps;
  for (int k = 0; k < components; ++k) {
    GaussianComponent c;
    c.weight = 1.0 / components;
    c.mean.assign(static_cast<std::size_t>(dim), 0.0);
    const double angle = 2.0 * M_PI * k / components;
    c.mean[0] = radius * std::cos(angle);
    if (dim > 1) c.mean[1] = radius * std::sin(angle);
    c.var.assign(static_cast<std::size_t>(dim), var);
    comps.push_back(std::move(c));
  }
  return DataDistribution::mixture(std::move(comps));
}

DataDistribution ExperimentConfig::make_distribution() const {
  if (dist_kind == "gaussian") {
    Vec mean(static_cast<std::size_t>(dim), 0.0);
    Vec var(static_cast<std::size_t>(dim), 1.0);
    return DataDistribution::gaussian(std::move(mean), std::move(var));
  }
  return make_gmm(dim, components);
}

SolverConfig solver_config_from_name(const std::string& name) {
  SolverConfig cfg;
  if (name == "ddim") {
    cfg.family = SolverFamily::Ddim;
  } else if (name == "fd_single") {
    cfg.family = SolverFamily::FdSingle;
  } else if (name == "re_single") {
    cfg.family = SolverFamily::ReSingle;
  } else if (name == "heun_edm" || name == "heun") {
    cfg.family = SolverFamily::HeunEdm;
  } else if (name == "dpm_solver_2s" || name == "dpm2s") {
    cfg.family = SolverFamily::DpmSolver2s;
    cfg.param = Parameterization::NoisePrediction;
  } else if (name == "plain_kappa") {
    cfg.family = SolverFamily::Multistep;
    cfg.variant = MultistepVariant::PlainKappa;
  } else if (name == "dpmpp_2m" || name == "dpmpp2m") {
    cfg.family = SolverFamily::Multistep;
    cfg.variant = MultistepVariant::Dpmpp2m;
  } else if (name == "re_multi" || name == "remulti") {
    cfg.family = SolverFamily::Multistep;
    cfg.variant = MultistepVariant::ReMulti;
  } else if (name == "evodiff") {
    cfg.family = SolverFamily::EvoDiff;
  } else {
    throw ValidationError("solver", "unknown solver name '" + name + "'");
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::map<std::string, int> kv_line;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(lineno, "empty key");
    if (value.empty()) throw ParseError(lineno, "empty value for key '" + key + "'");
    if (kv.count(key)) throw ParseError(lineno, "duplicate key '" + key + "'");
    kv[key] = value;
    kv_line[key] = lineno;
  }

  ExperimentConfig cfg;
  Collector errors;
  auto take = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    if (it == kv.end()) return nullptr;
    return &it->second;
  };
  auto parse_num = [&](const char* key, double& out) {
    if (const std::string* v = take(key)) {
      try {
        std::size_t used = 0;
        out = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        errors.add(key, "not a number: '" + *v + "'");
      }
    }
  };
  auto parse_bool = [&](const char* key, bool& out) {
    if (const std::string* v = take(key)) {
      if (*v == "true" || *v == "1")
        out = true;
      else if (*v == "false" || *v == "0")
        out = false;
      else
        errors.add(key, "expected true/false");
    }
  };

  if (const std::string* v = take("schedule")) {
    if (*v == "vp_linear")
      cfg.schedule_kind = ScheduleKind::VpLinear;
    else if (*v == "vp_cosine")
      cfg.schedule_kind = ScheduleKind::VpCosine;
    else if (*v == "ve_edm")
      cfg.schedule_kind = ScheduleKind::VeEdm;
    else
      errors.add("schedule", "unknown schedule '" + *v + "'");
  }
  parse_num("beta0", cfg.beta0);
  parse_num("beta1", cfg.beta1);
  parse_num("sigma_min", cfg.sigma_min);
  parse_num("sigma_max", cfg.sigma_max);
  if (const std::string* v = take("grid")) {
    if (*v == "uniform")
      cfg.grid_policy = GridPolicy::Uniform;
    else if (*v == "logsnr")
      cfg.grid_policy = GridPolicy::LogSnrUniform;
    else if (*v == "karras")
      cfg.grid_policy = GridPolicy::EdmKarras;
    else
      errors.add("grid", "unknown grid policy '" + *v + "'");
  }
  parse_num("rho", cfg.rho);
  parse_num("t_start", cfg.t_start);
  parse_num("t_end", cfg.t_end);
  if (cfg.schedule_kind == ScheduleKind::VeEdm && take("t_start") == nullptr) {
    cfg.t_start = cfg.sigma_max;
    cfg.t_end = cfg.sigma_min;
  }

  if (const std::string* v = take("steps")) {
    cfg.steps.clear();
    for (const std::string& tok : split_list(*v)) {
      try {
        const int n = std::stoi(tok);
        if (n < 1) throw std::invalid_argument("n");
        cfg.steps.push_back(n);
      } catch (const std::exception&) {
        errors.add("steps", "N >= 1 required, got '" + tok + "'");
      }
    }
  }

  if (const std::string* v = take("dist")) {
    if (*v == "gaussian" || *v == "gmm")
      cfg.dist_kind = *v;
    else
      errors.add("dist", "expected gaussian or gmm");
  }
  double dim = cfg.dim, comps = cfg.components, nsamp = cfg.n_samples, nproj = cfg.n_projections;
  parse_num("dim", dim);
  parse_num("components", comps);
  parse_num("n_samples", nsamp);
  parse_num("projections", nproj);
  cfg.dim = static_cast<int>(dim);
  cfg.components = static_cast<int>(comps);
  cfg.n_samples = static_cast<int>(nsamp);
  cfg.n_projections = static_cast<int>(nproj);
  if (cfg.dim < 1) errors.add("dim", "d must be >= 1");
  if (cfg.n_samples < 2) errors.add("n_samples", "need at least 2 trajectories");

  if (const std::string* v = take("seed")) kv["seeds"] = *v;
  if (const std::string* v = take("seeds")) {
    cfg.seeds.clear();
    for (const std::string& tok : split_list(*v)) {
      try {
        cfg.seeds.push_back(std::stoull(tok));
      } catch (const std::exception&) {
        errors.add("seeds", "not an integer: '" + tok + "'");
      }
    }
  }
  if (cfg.seeds.empty()) errors.add("seeds", "at least one seed required");

  if (const std::string* v = take("metrics")) {
    cfg.metrics.clear();
    for (const std::string& tok : split_list(*v)) {
      if (tok == "fgd" || tok == "sw")
        cfg.metrics.push_back(tok);
      else
        errors.add("metrics", "unknown metric '" + tok + "' (fgd, sw)");
    }
  }
  if (const std::string* v = take("out")) cfg.out_dir = *v;

  // shared solver knobs, dotted keys override per solver after construction
  double mu = 0.5, fd_r = 2.0, gamma = 0.5, r1 = 0.5, fixed_zeta = 1.0;
  bool reuse_probe = true;
  parse_num("mu", mu);
  parse_num("fd_r", fd_r);
  parse_num("gamma", gamma);
  parse_num("r1", r1);
  parse_num("zeta", fixed_zeta);
  parse_bool("reuse_probe", reuse_probe);
  RStrategy rstrat{RKind::LogSnr};
  if (const std::string* v = take("r_strategy")) {
    if (*v == "logsnr")
      rstrat.kind = RKind::LogSnr;
    else if (*v == "normvar")
      rstrat.kind = RKind::NormVar;
    else if (*v == "arctan")
      rstrat.kind = RKind::ArcTan;
    else if (*v == "refined")
      rstrat.kind = RKind::Refined;
    else if (*v == "confidence")
      rstrat.kind = RKind::Confidence;
    else
      errors.add("r_strategy", "unknown strategy '" + *v + "'");
  }
  ZetaMap zeta_map = ZetaMap::Plain;
  if (const std::string* v = take("zeta_map")) {
    if (*v == "plain")
      zeta_map = ZetaMap::Plain;
    else if (*v == "scaled")
      zeta_map = ZetaMap::SigmaScaled;
    else
      errors.add("zeta_map", "expected plain or scaled");
  }
  OptFormula eta_formula = OptFormula::AnalyticMin;
  if (const std::string* v = take("eta_formula")) {
    if (*v == "analytic")
      eta_formula = OptFormula::AnalyticMin;
    else if (*v == "paper")
      eta_formula = OptFormula::PaperLiteral;
    else
      errors.add("eta_formula", "expected analytic or paper");
  }
  ZetaPolicyKind zeta_policy = ZetaPolicyKind::RemarkVar;
  if (const std::string* v = take("zeta_policy")) {
    if (*v == "remarkvar")
      zeta_policy = ZetaPolicyKind::RemarkVar;
    else if (*v == "fixed")
      zeta_policy = ZetaPolicyKind::Fixed;
    else
      errors.add("zeta_policy", "expected remarkvar or fixed");
  }

  if (const std::string* v = take("solver")) {
    cfg.solvers.clear();
    for (const std::string& tok : split_list(*v)) {
      try {
        cfg.solvers.push_back(solver_config_from_name(tok));
      } catch (const ValidationError& e) {
        errors.add("solver", e.what());
      }
    }
  } else {
    cfg.solvers = {solver_config_from_name("ddim")};
  }
  for (SolverConfig& s : cfg.solvers) {
    s.mu = mu;
    s.fd_r = fd_r;
    s.gamma = gamma;
    s.r1 = r1;
    s.fixed_zeta = fixed_zeta;
    s.reuse_probe = reuse_probe;
    s.r_strategy = rstrat;
    s.zeta_map = zeta_map;
    s.eta_formula = eta_formula;
    s.zeta_policy = zeta_policy;
  }

  if (!(mu >= 0.0 && mu <= 1.0)) errors.add("mu", "shift parameter must lie in [0, 1]");
  if (!(cfg.t_start > cfg.t_end)) errors.add("t_start", "t_start must exceed t_end");

  // unknown keys are validation errors, not silently ignored
  static const char* known[] = {
      "schedule", "beta0", "beta1", "sigma_min", "sigma_max", "grid", "rho", "t_start",
      "t_end", "steps", "dist", "dim", "components", "n_samples", "projections", "seed",
      "seeds", "metrics", "out", "mu", "fd_r", "gamma", "r1", "zeta", "reuse_probe",
      "r_strategy", "zeta_map", "eta_formula", "zeta_policy", "solver"};
  for (const auto& [key, value] : kv) {
    bool found = false;
    for (const char* k : known)
      if (key == k) found = true;
    if (!found)
      errors.add(key, "unknown key (line " + std::to_string(kv_line[key]) + ")");
  }

  errors.raise_if_any();

  // construction-level validation (domain errors become field errors)
  try {
    cfg.make_schedule().at(cfg.t_start);
    cfg.make_schedule().at(cfg.t_end);
  } catch (const std::exception& e) {
    throw ValidationError("t_start", std::string("schedule domain: ") + e.what());
  }
  return cfg;
}

std::string canonical_serialize(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "schedule=" << to_string(cfg.schedule_kind) << "\n";
  os << "beta0=" << format_double(cfg.beta0) << "\n";
  os << "beta1=" << format_double(cfg.beta1) << "\n";
  os << "sigma_min=" << format_double(cfg.sigma_min) << "\n";
  os << "sigma_max=" << format_double(cfg.sigma_max) << "\n";
  os << "grid=" << to_string(cfg.grid_policy) << "\n";
  os << "rho=" << format_double(cfg.rho) << "\n";
  os << "t_start=" << format_double(cfg.t_start) << "\n";
  os << "t_end=" << format_double(cfg.t_end) << "\n";
  os << "steps=";
  for (std::size_t i = 0; i < cfg.steps.size(); ++i) os << (i ? "," : "") << cfg.steps[i];
  os << "\n";
  os << "dist=" << cfg.dist_kind << "\n";
  os << "dim=" << cfg.dim << "\n";
  os << "components=" << cfg.components << "\n";
  os << "n_samples=" << cfg.n_samples << "\n";
  os << "projections=" << cfg.n_projections << "\n";
  os << "seeds=";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) os << (i ? "," : "") << cfg.seeds[i];
  os << "\n";
  os << "metrics=";
  for (std::size_t i = 0; i < cfg.metrics.size(); ++i) os << (i ? "," : "") << cfg.metrics[i];
  os << "\n";
  os << "solvers=";
  for (std::size_t i = 0; i < cfg.solvers.size(); ++i) {
    const SolverConfig& s = cfg.solvers[i];
    os << (i ? "," : "") << s.name() << "{mu=" << format_double(s.mu)
       << ",r=" << to_string(s.r_strategy.kind) << ",reuse=" << (s.reuse_probe ? 1 : 0)
       << ",eta=" << (s.eta_formula == OptFormula::AnalyticMin ? "analytic" : "paper")
       << ",zmap=" << (s.zeta_map == ZetaMap::Plain ? "plain" : "scaled")
       << ",zpol=" << (s.zeta_policy == ZetaPolicyKind::RemarkVar ? "remarkvar" : "fixed")
       << ",zfix=" << format_double(s.fixed_zeta) << ",fd_r=" << format_double(s.fd_r)
       << ",gamma=" << format_double(s.gamma) << ",r1=" << format_double(s.r1) << "}";
  }
  os << "\n";
  return os.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_serialize(cfg))));
  return buf;
}

namespace {

CellResult run_cell(const ExperimentConfig& cfg, const SolverConfig& solver, int n_steps,
                    std::uint64_t seed) {
  CellResult cell;
  cell.solver = solver.name();
  cell.steps = n_steps;
  cell.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const NoiseSchedule schedule = cfg.make_schedule();
    const DataDistribution dist = cfg.make_distribution();
    const TimeGrid grid =
        make_grid(schedule, cfg.grid_policy, n_steps, cfg.t_start, cfg.t_end, cfg.rho);

    std::vector<Vec> cloud;
    cloud.reserve(static_cast<std::size_t>(cfg.n_samples));
    std::int64_t nfe = -1;
    for (int i = 0; i < cfg.n_samples; ++i) {
      RandomStream rng(seed, StreamTag::InitNoise, static_cast<std::uint64_t>(i));
      const Vec xT = draw_start_state(schedule, cfg.t_start, static_cast<std::size_t>(cfg.dim), rng);
      DenoiserOracle oracle(dist, schedule, solver.param);
      const RunResult res = run(solver, oracle, grid, schedule, xT);
      if (nfe < 0) nfe = res.nfe;
      if (res.nfe != nfe) throw NumericalError("NFE varied across trajectories");
      cloud.push_back(res.x0);
    }
    cell.nfe = nfe;

    for (const std::string& metric : cfg.metrics) {
      if (metric == "fgd") {
        Vec mean;
        std::vector<double> cov;
        // cloud moments against the analytic target moments
        mean.assign(static_cast<std::size_t>(cfg.dim), 0.0);
        for (const Vec& s : cloud)
          for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += s[k] / cloud.size();
        cov.assign(mean.size() * mean.size(), 0.0);
        for (const Vec& s : cloud)
          for (std::size_t a = 0; a < mean.size(); ++a)
            for (std::size_t b = 0; b < mean.size(); ++b)
              cov[a * mean.size() + b] += (s[a] - mean[a]) * (s[b] - mean[b]) / (cloud.size() - 1);
        cell.metric_values["fgd"] =
            frechet_gaussian_moments(mean, cov, dist.mean(), dist.covariance());
      } else if (metric == "sw") {
        std::vector<Vec> exact;
        exact.reserve(cloud.size());
        for (std::size_t i = 0; i < cloud.size(); ++i) {
          RandomStream rng(seed, StreamTag::DataSampling, i);
          exact.push_back(dist.sample(rng));
        }
        RandomStream proj(seed, StreamTag::Projections);
        cell.metric_values["sw"] = sliced_wasserstein(cloud, exact, cfg.n_projections, proj);
      }
    }
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  cell.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return cell;
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& cfg, int jobs) {
  struct Task {
    std::size_t solver_idx;
    int steps;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < cfg.solvers.size(); ++s)
    for (int n : cfg.steps)
      for (std::uint64_t seed : cfg.seeds) tasks.push_back({s, n, seed});

  std::vector<CellResult> cells(tasks.size());
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;
  std::mutex next_mutex;
  std::size_t next = 0;
  auto worker = [&]() {
    while (true) {
      std::size_t idx;
      {
        std::lock_guard<std::mutex> lock(next_mutex);
        if (next >= tasks.size()) return;
        idx = next++;
      }
      const Task& t = tasks[idx];
      cells[idx] = run_cell(cfg, cfg.solvers[t.solver_idx], t.steps, t.seed);
    }
  };
  std::vector<std::thread> pool;
  for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  // order-independent output: sort rows before writing
  std::sort(cells.begin(), cells.end(), [](const CellResult& a, const CellResult& b) {
    if (a.solver != b.solver) return a.solver < b.solver;
    if (a.steps != b.steps) return a.steps < b.steps;
    return a.seed < b.seed;
  });

  RunManifest manifest;
  manifest.config_hash = config_hash(cfg);
  manifest.artifact_version = kArtifactVersion;
  manifest.cells = cells;
  for (const CellResult& c : cells)
    if (!c.error.empty()) ++manifest.n_failed;

  namespace fs = std::filesystem;
  std::string out_dir = cfg.out_dir;
  if (const char* env = std::getenv("EVODIFF_OUT_DIR")) out_dir = env;
  fs::create_directories(out_dir);

  std::ostringstream csv;
  csv << "run_id,solver,N,nfe,seed,metric_name,value\n";
  for (const CellResult& c : cells) {
    if (!c.error.empty()) continue;
    const std::string run_id = manifest.config_hash + "-" + c.solver + "-" +
                               std::to_string(c.steps) + "-" + std::to_string(c.seed);
    std::vector<std::string> names;
    names.reserve(c.metric_values.size());
    for (const auto& [name, value] : c.metric_values) names.push_back(name);
    std::sort(names.begin(), names.end());
    for (const std::string& name : names) {
      csv << run_id << "," << c.solver << "," << c.steps << "," << c.nfe << "," << c.seed << ","
          << name << "," << format_double(c.metric_values.at(name)) << "\n";
    }
  }
  manifest.csv_path = (fs::path(out_dir) / "metrics.csv").string();
  {
    std::ofstream f(manifest.csv_path, std::ios::binary);
    f << csv.str();
  }

  nlohmann::json j;
  j["config_hash"] = manifest.config_hash;
  j["artifact_version"] = manifest.artifact_version;
  j["csv"] = manifest.csv_path;
  j["n_failed"] = manifest.n_failed;
  j["cells"] = nlohmann::json::array();
  for (const CellResult& c : cells) {
    nlohmann::json jc;
    jc["solver"] = c.solver;
    jc["steps"] = c.steps;
    jc["seed"] = c.seed;
    jc["nfe"] = c.nfe;
    jc["wall_ms"] = c.wall_ms;
    if (!c.error.empty()) jc["error"] = c.error;
    for (const auto& [name, value] : c.metric_values) jc["metrics"][name] = value;
    j["cells"].push_back(jc);
  }
  {
    std::ofstream f(fs::path(out_dir) / "manifest.json", std::ios::binary);
    f << j.dump(2) << "\n";
  }
  return manifest;
}

std::string step_records_csv(const std::vector<StepRecord>& records) {
  std::ostringstream os;
  os << "i,t_i,zeta,eta,r,zeta_raw,eta_raw,nfe,fallback_flags\n";
  for (const StepRecord& r : records) {
    std::string flags;
    if (r.warmup) flags += "warmup";
    if (r.fallback_zeta) flags += flags.empty() ? "zeta" : "|zeta";
    if (r.fallback_eta) flags += flags.empty() ? "eta" : "|eta";
    os << r.index << "," << format_double(r.t_cur) << "," << format_double(r.zeta) << ","
       << format_double(r.eta) << "," << format_double(r.r) << ","
       << (std::isnan(r.zeta_raw) ? "nan" : format_double(r.zeta_raw)) << ","
       << (std::isnan(r.eta_raw) ? "nan" : format_double(r.eta_raw)) << "," << r.nfe_delta << ","
       << flags << "\n";
  }
  return os.str();
}

std::string trajectory_csv(const std::vector<TrajectoryRow>& rows) {
  std::ostringstream os;
  os << "i,t_i,var_estimate,entropy_estimate\n";
  for (const TrajectoryRow& r : rows)
    os << r.index << "," << format_double(r.t) << "," << format_double(r.var_estimate) << ","
       << format_double(r.entropy_estimate) << "\n";
  return os.str();
}

}  // namespace evodiff
