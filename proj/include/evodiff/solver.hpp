#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "evodiff/oracle.hpp"
#include "evodiff/schedule.hpp"
#include "evodiff/varopt.hpp"
#include "evodiff/vec.hpp"

namespace evodiff {

enum class SolverFamily { Ddim, FdSingle, ReSingle, HeunEdm, DpmSolver2s, Multistep, EvoDiff };
enum class MultistepVariant { PlainKappa, Dpmpp2m, ReMulti };
enum class ReInterp { ExplicitL, ImplicitS };
enum class ZetaPolicyKind { Fixed, RemarkVar };
enum class ReSinglePreset { None, HalfGamma, SnrBalanced };

struct SolverConfig {
  SolverFamily family = SolverFamily::Ddim;
  Parameterization param = Parameterization::DataPrediction;

  // single-step second-order knobs
  double fd_r = 2.0;                       // fd_single: h_hat = h / r, r >= 1
  double gamma = 0.5;                      // re_single interpolation weight in (0, 1]
  ReSinglePreset re_preset = ReSinglePreset::None;
  double r1 = 0.5;                         // dpm_solver_2s midpoint ratio in (0, 1]

  // multistep knobs
  MultistepVariant variant = MultistepVariant::Dpmpp2m;
  ReInterp interp = ReInterp::ExplicitL;
  ZetaPolicyKind zeta_policy = ZetaPolicyKind::RemarkVar;
  double fixed_zeta = 1.0;
  RStrategy r_strategy{RKind::LogSnr};

  // evodiff knobs
  double mu = 0.5;
  OptFormula eta_formula = OptFormula::AnalyticMin;
  OptFormula zeta_formula = OptFormula::PaperLiteral;
  bool reuse_probe = true;
  ZetaMap zeta_map = ZetaMap::Plain;
  // Literal Algorithm-1 corrector x <- g(x) + sigma' h^2/(2 zeta) B. The
  // default instead cancels the interpolation factors analytically, which
  // keeps the step second-order consistent at mu = 1/2 (see README).
  bool literal_zeta_division = false;
  // Bound on the variance-control gain (1 - zeta)/zeta applied to the
  // history gradient; the raw exponential gain is unbounded and overshoots
  // strongly curved posteriors. Values <= 1 disable the modulation.
  double zeta_gain_limit = 4.0 / 3.0;

  std::string name() const;
};

// Per-step diagnostics. zeta/eta are the mapped values actually applied
// (defaults 1 on fallback steps, with the flags set); raw values are NaN
// where no optimization ran.
struct StepRecord {
  int index = 0;       // paper-style index i: counts down from N to 1
  double t_cur = 0.0;  // t_i
  double t_next = 0.0; // t_{i-1}
  double zeta = 1.0;
  double eta = 1.0;
  double r = 1.0;
  double zeta_raw = std::numeric_limits<double>::quiet_NaN();
  double eta_raw = std::numeric_limits<double>::quiet_NaN();
  int nfe_delta = 0;
  bool fallback_zeta = false;
  bool fallback_eta = false;
  bool warmup = false;
  Vec predictor_state;   // kept only when the run retains states
  Vec corrected_state;
};

// Ring buffer of recent model evaluations (t, state, model value), newest
// last, entries strictly decreasing in t.
class EvalHistory {
 public:
  explicit EvalHistory(std::size_t capacity = 2) : capacity_(capacity < 2 ? 2 : capacity) {}

  void push(double t, Vec state, Vec model_value);
  bool has(std::size_t n_back = 1) const { return entries_.size() > n_back; }
  double t(std::size_t n_back) const { return entries_[entries_.size() - 1 - n_back].t; }
  const Vec& model_value(std::size_t n_back) const {
    return entries_[entries_.size() - 1 - n_back].model_value;
  }
  const Vec& state(std::size_t n_back) const {
    return entries_[entries_.size() - 1 - n_back].state;
  }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    double t;
    Vec state;
    Vec model_value;
  };
  std::size_t capacity_;
  std::deque<Entry> entries_;
};

// --- Individual iterations. `pos` indexes the departure point on the grid:
// the step advances grid.time(pos) -> grid.time(pos + 1).

Vec ddim_step(const Vec& x, int pos, const TimeGrid& grid, const NoiseSchedule& schedule,
              Denoiser& oracle);

Vec fd_single_step(const Vec& x, int pos, const TimeGrid& grid, const NoiseSchedule& schedule,
                   Denoiser& oracle, double r);

Vec re_single_step(const Vec& x, int pos, const TimeGrid& grid, const NoiseSchedule& schedule,
                   Denoiser& oracle, double gamma, double r,
                   ReSinglePreset preset = ReSinglePreset::None);

Vec heun_edm_step(const Vec& x, int pos, const TimeGrid& grid, const NoiseSchedule& schedule,
                  Denoiser& oracle);

Vec dpm_solver_2s_step(const Vec& x, int pos, const TimeGrid& grid, const NoiseSchedule& schedule,
                       Denoiser& oracle, double r1);
// Literal transcription of the exponential-integrator form; must agree with
// dpm_solver_2s_step to roundoff.
Vec dpm_solver_2s_step_literal(const Vec& x, int pos, const TimeGrid& grid,
                               const NoiseSchedule& schedule, Denoiser& oracle, double r1);

Vec multistep_step(const Vec& x, int pos, const TimeGrid& grid, const NoiseSchedule& schedule,
                   Denoiser& oracle, EvalHistory& history, const SolverConfig& cfg,
                   StepRecord* record = nullptr);
// Literal exponential-integrator form of the DPM-Solver++(2M) update, for the
// equivalence checks; reads the previous model value from `history`.
Vec dpmpp_2m_step_literal(const Vec& x, int pos, const TimeGrid& grid,
                          const NoiseSchedule& schedule, Denoiser& oracle,
                          EvalHistory& history);

// `inout_probe`, when non-null and non-empty, supplies the model value at the
// departure time (the previous step's probe); on exit it holds this step's
// probe when probe reuse is enabled.
Vec evodiff_step(const Vec& x, int pos, const TimeGrid& grid, const NoiseSchedule& schedule,
                 Denoiser& oracle, EvalHistory& history, const SolverConfig& cfg,
                 StepRecord& record, Vec* inout_probe = nullptr);

struct RunResult {
  Vec x0;
  std::vector<StepRecord> records;
  std::int64_t nfe = 0;
};

// Runs the configured solver over the full grid. Multistep families take a
// DDIM warm-up step first; any N = 1 run degenerates to a single DDIM step.
// Aborts with NumericalError naming the step index if the state goes
// non-finite. Deterministic: the seed only labels the run (no internal
// randomness in these deterministic solvers).
RunResult run(const SolverConfig& cfg, Denoiser& oracle, const TimeGrid& grid,
              const NoiseSchedule& schedule, Vec x_start, bool keep_states = false);

// Documented NFE cost of a full run with n_steps grid steps.
std::int64_t expected_nfe(const SolverConfig& cfg, int n_steps);

// Gaussian x_T draw: N(0, sigma_hat^2 I) with sigma_hat = sigma(t_start).
Vec draw_start_state(const NoiseSchedule& schedule, double t_start, std::size_t dim,
                     RandomStream& rng);

}  // namespace evodiff
