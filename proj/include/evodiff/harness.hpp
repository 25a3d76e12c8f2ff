#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "evodiff/diagnostics.hpp"
#include "evodiff/oracle.hpp"
#include "evodiff/schedule.hpp"
#include "evodiff/solver.hpp"

namespace evodiff {

// Everything one experiment needs: solver list, schedule/grid/oracle specs,
// seeds, step counts, metric selection, output location.
struct ExperimentConfig {
  std::vector<SolverConfig> solvers;

  ScheduleKind schedule_kind = ScheduleKind::VpLinear;
  double beta0 = 0.1, beta1 = 20.0;
  double sigma_min = 0.002, sigma_max = 80.0;
  GridPolicy grid_policy = GridPolicy::LogSnrUniform;
  double rho = 7.0;
  double t_start = 1.0, t_end = 1e-3;
  std::vector<int> steps{10};

  std::string dist_kind = "gaussian";  // gaussian | gmm
  int dim = 2;
  int components = 4;

  std::vector<std::uint64_t> seeds{1};
  int n_samples = 1024;   // trajectories per cell; also the exact-cloud size
  int n_projections = 128;
  std::vector<std::string> metrics{"fgd", "sw"};
  std::string out_dir = "results";

  NoiseSchedule make_schedule() const;
  DataDistribution make_distribution() const;
};

// The canonical 4-component 2-D mixture used by the quality comparisons:
// equal weights, means on a circle of radius 1.5 in the first two
// coordinates, isotropic variance 0.1.
DataDistribution make_gmm(int dim, int components, double radius = 1.5, double var = 0.1);

SolverConfig solver_config_from_name(const std::string& name);

// Parses the plain-text key = value format (see README). Throws ParseError
// with the 1-based line on syntax errors; collects semantic problems and
// throws a single ValidationError whose message lists every (field: reason).
ExperimentConfig parse_config(const std::string& text);

// Canonical serialization (fixed key order, normalized numbers); equal
// configs hash equally regardless of the input file's field order.
std::string canonical_serialize(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

struct CellResult {
  std::string solver;
  int steps = 0;
  std::uint64_t seed = 0;
  std::int64_t nfe = 0;  // per-trajectory function evaluations
  std::map<std::string, double> metric_values;
  double wall_ms = 0.0;
  std::string error;  // empty on success
};

struct RunManifest {
  std::string config_hash;
  std::string artifact_version;
  std::vector<CellResult> cells;
  std::string csv_path;
  int n_failed = 0;
};

// Executes the solver x steps x seed matrix, writes <out>/metrics.csv and
// <out>/manifest.json, and returns the manifest. Deterministic given the
// config (including under concurrent execution: results are sorted before
// writing). jobs = 0 picks the hardware concurrency.
RunManifest run_experiment(const ExperimentConfig& cfg, int jobs = 0);

// Step-record CSV for a single run (the `sample` subcommand output).
std::string step_records_csv(const std::vector<StepRecord>& records);

// Per-step trajectory CSV (i, t, var_estimate, entropy_estimate).
std::string trajectory_csv(const std::vector<TrajectoryRow>& rows);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace evodiff
