#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "evodiff/oracle.hpp"
#include "evodiff/rng.hpp"
#include "evodiff/schedule.hpp"
#include "evodiff/solver.hpp"
#include "evodiff/vec.hpp"

namespace evodiff {

// Differential entropy of N(mu, diag(var)): d/2 (log 2pi + 1) + 1/2 sum log var_k.
double gaussian_entropy(const Vec& var_diag);

struct DeltaEntropyResult {
  double delta_h = 0.0;
  double interval_lo = 1.0;
  double interval_hi = 1.0;  // 4 var_t / (var_s + var_t)
};

// Entropy change of the gradient step relative to the first-order step as a
// function of the step ratio h/h_hat and the model-variance pair; the
// reduction interval for h/h_hat comes with it.
DeltaEntropyResult delta_entropy_gradient_vs_ddim(double h, double h_hat, double var_t,
                                                  double var_s, int dim);

// The same interval under the SNR prior Var eps_theta(t) ~ 1/SNR(t).
std::pair<double, double> entropy_reduction_interval_snr(double snr_t, double snr_s);

struct DecompositionResult {
  double mse = 0.0;
  double variance_term = 0.0;
  double bias_term = 0.0;
  double residual = 0.0;        // |mse - variance - bias|
  double standard_error = 0.0;  // of the residual estimator
};

// Monte-Carlo check of the reconstruction-error decomposition at a forward
// bridge pair t_lo < t_hi, with the conditional mean taken from the analytic
// Gaussian bridge of the forward process.
DecompositionResult reconstruction_decomposition_check(const DataDistribution& dist,
                                                       const NoiseSchedule& schedule, double t_lo,
                                                       double t_hi, int n_samples,
                                                       RandomStream& rng);

struct StepVariancePair {
  double t_cur = 0.0, t_next = 0.0;
  double var_data = 0.0;
  double var_noise = 0.0;
  bool coefficient_ordering_ok = false;  // sigma'/sigma < alpha'/alpha
};

// Conditional (given x0) variance of the one-step first-order transition
// under each parameterization, split into linear and nonlinear terms with the
// model-output variances measured by Monte-Carlo.
std::vector<StepVariancePair> data_vs_noise_variance(const DataDistribution& dist,
                                                     const NoiseSchedule& schedule,
                                                     const TimeGrid& grid, int n_samples,
                                                     RandomStream& rng);

// Frechet distance between Gaussians fitted to two sample clouds
// (row-major n x d buffers), symmetric matrix-square-root convention.
double frechet_gaussian(const std::vector<Vec>& samples_a, const std::vector<Vec>& samples_b);
// Same from explicit moments (row-major d x d covariances).
double frechet_gaussian_moments(const Vec& mean_a, const std::vector<double>& cov_a,
                                const Vec& mean_b, const std::vector<double>& cov_b);

// Mean 1-D Wasserstein-2 distance over random unit projections.
double sliced_wasserstein(const std::vector<Vec>& samples_a, const std::vector<Vec>& samples_b,
                          int n_projections, RandomStream& rng);

struct ConvergenceResult {
  std::vector<int> steps;
  std::vector<double> mean_error;
  double slope = 0.0;
  bool exact = false;  // errors at roundoff level; slope fit skipped
};

// Refinement study: terminal error against the same solver at n_ref steps,
// averaged over seeded trials; slope of log error against log N.
ConvergenceResult convergence_order(const SolverConfig& cfg, const DataDistribution& dist,
                                    const NoiseSchedule& schedule, GridPolicy policy,
                                    const std::vector<int>& steps, int n_ref, int n_trials,
                                    std::uint64_t seed, double t_start, double t_end,
                                    std::size_t dim);

// E[x_{t_lo} | x_{t_hi}] under the forward process for Gaussian data
// (marginalized over x0).
Vec bridge_posterior_mean(const DataDistribution& dist, const NoiseSchedule& schedule,
                          double t_lo, double t_hi, const Vec& x_hi);

// Exact probability-flow transition for Gaussian data: the affine map taking
// the marginal at t_from onto the marginal at t_to. This is the ideal
// (zero-variance) denoising transition the solvers approximate.
Vec exact_gaussian_flow(const DataDistribution& dist, const NoiseSchedule& schedule,
                        double t_from, double t_to, const Vec& x);

struct TrajectoryRow {
  int index = 0;
  double t = 0.0;
  double var_estimate = 0.0;      // ||x - ideal transition of prev||^2 / d
  double entropy_estimate = 0.0;  // isotropic Gaussian entropy at that variance
};

// Per-step conditional-variance proxy of a run: squared deviation of each
// produced state from the exact denoising transition applied to the previous
// state. Requires a run executed with keep_states = true.
std::vector<TrajectoryRow> entropy_trajectory(const RunResult& run, const Vec& x_start,
                                              const TimeGrid& grid,
                                              const DataDistribution& dist,
                                              const NoiseSchedule& schedule);

}  // namespace evodiff
