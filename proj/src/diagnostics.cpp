#include "evodiff/diagnostics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "evodiff/errors.hpp"

namespace evodiff {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

double gaussian_entropy(const Vec& var_diag) {
  double logdet = 0.0;
  for (double v : var_diag) {
    if (!(v > 0.0)) throw DomainError("gaussian_entropy requires positive variances");
    logdet += std::log(v);
  }
  const double d = static_cast<double>(var_diag.size());
  return 0.5 * d * (std::log(kTwoPi) + 1.0) + 0.5 * logdet;
}

DeltaEntropyResult delta_entropy_gradient_vs_ddim(double h, double h_hat, double var_t,
                                                  double var_s, int dim) {
  if (!(h_hat > 0.0)) throw DomainError("delta_entropy: h_hat must be positive");
  if (!(h >= h_hat)) throw DomainError("delta_entropy: requires h >= h_hat");
  if (!(var_t > 0.0) || !(var_s > 0.0)) throw DomainError("delta_entropy: variances must be positive");
  const double rho = h / h_hat;
  const double q = 0.25 * rho * rho;
  const double arg = 1.0 - rho + q + q * (var_s / var_t);
  DeltaEntropyResult r;
  r.delta_h = 0.5 * dim * std::log(std::fabs(arg));
  r.interval_lo = 1.0;
  r.interval_hi = 4.0 * var_t / (var_s + var_t);
  return r;
}

std::pair<double, double> entropy_reduction_interval_snr(double snr_t, double snr_s) {
  if (!(snr_t > 0.0) || !(snr_s > 0.0)) throw DomainError("SNR values must be positive");
  return {1.0, 4.0 * snr_s / (snr_t + snr_s)};
}

DecompositionResult reconstruction_decomposition_check(const DataDistribution& dist,
                                                       const NoiseSchedule& schedule, double t_lo,
                                                       double t_hi, int n_samples,
                                                       RandomStream& rng) {
  if (!(t_hi >= t_lo)) throw DomainError("decomposition check needs t_hi >= t_lo");
  const auto e_lo = schedule.at(t_lo);
  const auto e_hi = schedule.at(t_hi);
  const double a = e_hi.alpha / e_lo.alpha;  // forward transition scale
  const double trans_var = std::max(0.0, e_hi.sigma * e_hi.sigma - a * a * e_lo.sigma * e_lo.sigma);
  const double s_hi2 = e_hi.sigma * e_hi.sigma;
  // bridge q(x_lo | x_hi, x0): mean coefficients and variance
  const double coef_hi = a * e_lo.sigma * e_lo.sigma / s_hi2;
  const double coef_x0 = e_lo.alpha * trans_var / s_hi2;

  const std::size_t d = dist.dim();
  double sum_m = 0.0, sum_v = 0.0, sum_b = 0.0, sum_cross = 0.0, sum_cross2 = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const Vec x0 = dist.sample(rng);
    double m = 0.0, v = 0.0, b = 0.0, cross = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      // forward chain draw; x_lo | (x_hi, x0) is exactly the analytic bridge
      const double x_lo = e_lo.alpha * x0[k] + e_lo.sigma * rng.normal();
      const double x_hi = a * x_lo + std::sqrt(trans_var) * rng.normal();
      const double mu = coef_hi * x_hi + coef_x0 * x0[k];
      m += (x_lo - x0[k]) * (x_lo - x0[k]);
      v += (x_lo - mu) * (x_lo - mu);
      b += (mu - x0[k]) * (mu - x0[k]);
      cross += 2.0 * (x_lo - mu) * (mu - x0[k]);
    }
    sum_m += m;
    sum_v += v;
    sum_b += b;
    sum_cross += cross;
    sum_cross2 += cross * cross;
  }
  const double n = static_cast<double>(n_samples);
  DecompositionResult r;
  r.mse = sum_m / n;
  r.variance_term = sum_v / n;
  r.bias_term = sum_b / n;
  r.residual = std::fabs(r.mse - r.variance_term - r.bias_term);
  const double cross_mean = sum_cross / n;
  const double cross_var = std::max(0.0, sum_cross2 / n - cross_mean * cross_mean);
  r.standard_error = std::sqrt(cross_var / n);
  return r;
}

std::vector<StepVariancePair> data_vs_noise_variance(const DataDistribution& dist,
                                                     const NoiseSchedule& schedule,
                                                     const TimeGrid& grid, int n_samples,
                                                     RandomStream& rng) {
  const std::size_t d = dist.dim();
  const Vec x0 = dist.sample(rng);  // conditioning point, fixed per batch
  DenoiserOracle data(dist, schedule, Parameterization::DataPrediction);
  DenoiserOracle noise(dist, schedule, Parameterization::NoisePrediction);

  std::vector<StepVariancePair> rows;
  for (int pos = 0; pos < grid.n_steps(); ++pos) {
    const auto cur = schedule.at(grid.time(pos));
    const auto nxt = schedule.at(grid.time(pos + 1));
    StepVariancePair row;
    row.t_cur = grid.time(pos);
    row.t_next = grid.time(pos + 1);
    row.coefficient_ordering_ok = nxt.sigma / cur.sigma < nxt.alpha / cur.alpha;

    // Monte-Carlo variances of x_t, x_theta(x_t), eps_theta(x_t) given x0.
    Vec mean_x(d, 0.0), mean_d(d, 0.0), mean_e(d, 0.0);
    Vec m2_x(d, 0.0), m2_d(d, 0.0), m2_e(d, 0.0);
    for (int i = 0; i < n_samples; ++i) {
      Vec xt(d);
      for (std::size_t k = 0; k < d; ++k) xt[k] = cur.alpha * x0[k] + cur.sigma * rng.normal();
      const Vec xd = data.evaluate(xt, grid.time(pos));
      const Vec xe = noise.evaluate(xt, grid.time(pos));
      for (std::size_t k = 0; k < d; ++k) {
        mean_x[k] += xt[k];
        mean_d[k] += xd[k];
        mean_e[k] += xe[k];
        m2_x[k] += xt[k] * xt[k];
        m2_d[k] += xd[k] * xd[k];
        m2_e[k] += xe[k] * xe[k];
      }
    }
    const double n = static_cast<double>(n_samples);
    double var_x = 0.0, var_d = 0.0, var_e = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      var_x += m2_x[k] / n - mean_x[k] / n * (mean_x[k] / n);
      var_d += m2_d[k] / n - mean_d[k] / n * (mean_d[k] / n);
      var_e += m2_e[k] / n - mean_e[k] / n * (mean_e[k] / n);
    }

    // linear + nonlinear split of the one-step transition variance
    const double lin_data = nxt.sigma / cur.sigma;
    const double lin_noise = nxt.alpha / cur.alpha;
    const double coef_data = nxt.sigma * (nxt.alpha / nxt.sigma - cur.alpha / cur.sigma);
    const double coef_noise = nxt.alpha * (nxt.sigma / nxt.alpha - cur.sigma / cur.alpha);
    row.var_data = lin_data * lin_data * var_x + coef_data * coef_data * var_d;
    row.var_noise = lin_noise * lin_noise * var_x + coef_noise * coef_noise * var_e;
    rows.push_back(row);
  }
  return rows;
}

namespace {

Eigen::MatrixXd to_matrix(const std::vector<double>& flat, std::size_t d) {
  Eigen::MatrixXd m(static_cast<long>(d), static_cast<long>(d));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      m(static_cast<long>(i), static_cast<long>(j)) = flat[i * d + j];
  return m;
}

// Symmetric PSD square root with small-eigenvalue clamping.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  Eigen::VectorXd vals = eig.eigenvalues();
  for (long i = 0; i < vals.size(); ++i) {
    if (vals(i) < -1e-10) throw NumericalError("covariance is not PSD after symmetrization");
    vals(i) = std::sqrt(std::max(0.0, vals(i)));
  }
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

void moments(const std::vector<Vec>& samples, Vec& mean, std::vector<double>& cov) {
  const std::size_t n = samples.size();
  const std::size_t d = samples[0].size();
  mean.assign(d, 0.0);
  for (const Vec& s : samples)
    for (std::size_t k = 0; k < d; ++k) mean[k] += s[k] / static_cast<double>(n);
  cov.assign(d * d, 0.0);
  for (const Vec& s : samples)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        cov[i * d + j] += (s[i] - mean[i]) * (s[j] - mean[j]) / static_cast<double>(n - 1);
}

}  // namespace

double frechet_gaussian_moments(const Vec& mean_a, const std::vector<double>& cov_a,
                                const Vec& mean_b, const std::vector<double>& cov_b) {
  const std::size_t d = mean_a.size();
  if (mean_b.size() != d || cov_a.size() != d * d || cov_b.size() != d * d)
    throw DomainError("frechet_gaussian: dimension mismatch");
  const Eigen::MatrixXd A = to_matrix(cov_a, d);
  const Eigen::MatrixXd B = to_matrix(cov_b, d);
  const Eigen::MatrixXd Bh = psd_sqrt(B);
  const Eigen::MatrixXd cross = psd_sqrt(Bh * A * Bh);

  double mean_sq = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = mean_a[k] - mean_b[k];
    mean_sq += diff * diff;
  }
  const double value = mean_sq + A.trace() + B.trace() - 2.0 * cross.trace();
  return std::max(0.0, value);  // clamp roundoff negatives
}

double frechet_gaussian(const std::vector<Vec>& samples_a, const std::vector<Vec>& samples_b) {
  if (samples_a.empty() || samples_b.empty()) throw DomainError("frechet_gaussian: empty samples");
  const std::size_t d = samples_a[0].size();
  if (samples_a.size() < d + 1 || samples_b.size() < d + 1)
    throw DomainError("frechet_gaussian needs at least d+1 samples per side");
  Vec ma, mb;
  std::vector<double> ca, cb;
  moments(samples_a, ma, ca);
  moments(samples_b, mb, cb);
  return frechet_gaussian_moments(ma, ca, mb, cb);
}

double sliced_wasserstein(const std::vector<Vec>& samples_a, const std::vector<Vec>& samples_b,
                          int n_projections, RandomStream& rng) {
  if (samples_a.size() != samples_b.size() || samples_a.empty())
    throw DomainError("sliced_wasserstein needs equal, nonempty sample counts");
  if (n_projections < 32) throw DomainError("sliced_wasserstein needs at least 32 projections");
  const std::size_t n = samples_a.size();
  const std::size_t d = samples_a[0].size();
  std::vector<double> pa(n), pb(n);
  double total = 0.0;
  for (int p = 0; p < n_projections; ++p) {
    Vec dir = rng.normal_vec(d);
    const double nrm = norm2(dir);
    for (double& v : dir) v /= nrm;
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = dot(samples_a[i], dir);
      pb[i] = dot(samples_b[i], dir);
    }
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    double w2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) w2 += (pa[i] - pb[i]) * (pa[i] - pb[i]);
    total += std::sqrt(w2 / static_cast<double>(n));
  }
  return total / n_projections;
}

ConvergenceResult convergence_order(const SolverConfig& cfg, const DataDistribution& dist,
                                    const NoiseSchedule& schedule, GridPolicy policy,
                                    const std::vector<int>& steps, int n_ref, int n_trials,
                                    std::uint64_t seed, double t_start, double t_end,
                                    std::size_t dim) {
  if (steps.empty() || n_trials < 1) throw DomainError("convergence_order: empty study");
  for (int n : steps)
    if (n_ref < 16 * n) throw DomainError("convergence_order: n_ref must be >= 16 * max(steps)");

  ConvergenceResult result;
  result.steps = steps;
  result.mean_error.assign(steps.size(), 0.0);
  const TimeGrid grid_ref = make_grid(schedule, policy, n_ref, t_start, t_end);
  std::vector<TimeGrid> grids;
  grids.reserve(steps.size());
  for (int n : steps) grids.push_back(make_grid(schedule, policy, n, t_start, t_end));

  for (int trial = 0; trial < n_trials; ++trial) {
    RandomStream rng(seed, StreamTag::InitNoise, static_cast<std::uint64_t>(trial));
    const Vec xT = draw_start_state(schedule, t_start, dim, rng);
    DenoiserOracle oracle_ref(dist, schedule, cfg.param);
    const Vec ref = run(cfg, oracle_ref, grid_ref, schedule, xT).x0;
    for (std::size_t j = 0; j < steps.size(); ++j) {
      DenoiserOracle oracle(dist, schedule, cfg.param);
      const Vec x0 = run(cfg, oracle, grids[j], schedule, xT).x0;
      result.mean_error[j] += norm2(sub(x0, ref)) / n_trials;
    }
  }

  double max_err = 0.0;
  for (double e : result.mean_error) max_err = std::max(max_err, e);
  if (max_err < 1e-13) {
    result.exact = true;  // integrator is exact on this model; no slope to fit
    result.slope = 0.0;
    return result;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t j = 0; j < steps.size(); ++j) {
    const double lx = std::log(static_cast<double>(steps[j]));
    const double ly = std::log(result.mean_error[j]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double n = static_cast<double>(steps.size());
  result.slope = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
  return result;
}

Vec bridge_posterior_mean(const DataDistribution& dist, const NoiseSchedule& schedule,
                          double t_lo, double t_hi, const Vec& x_hi) {
  if (dist.components().size() != 1)
    throw DomainError("bridge_posterior_mean implemented for Gaussian data only");
  const auto& c = dist.components()[0];
  const auto e_lo = schedule.at(t_lo);
  const auto e_hi = schedule.at(t_hi);
  const double a = e_hi.alpha / e_lo.alpha;
  Vec mean(x_hi.size());
  for (std::size_t k = 0; k < x_hi.size(); ++k) {
    const double var_lo = e_lo.alpha * e_lo.alpha * c.var[k] + e_lo.sigma * e_lo.sigma;
    const double var_hi = e_hi.alpha * e_hi.alpha * c.var[k] + e_hi.sigma * e_hi.sigma;
    const double cov = a * var_lo;  // Cov(x_lo, x_hi) under the forward chain
    mean[k] = e_lo.alpha * c.mean[k] + cov / var_hi * (x_hi[k] - e_hi.alpha * c.mean[k]);
  }
  return mean;
}

Vec exact_gaussian_flow(const DataDistribution& dist, const NoiseSchedule& schedule,
                        double t_from, double t_to, const Vec& x) {
  if (dist.components().size() != 1)
    throw DomainError("exact_gaussian_flow implemented for Gaussian data only");
  const auto& c = dist.components()[0];
  const auto ef = schedule.at(t_from);
  const auto et = schedule.at(t_to);
  Vec out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double v_from = ef.alpha * ef.alpha * c.var[k] + ef.sigma * ef.sigma;
    const double v_to = et.alpha * et.alpha * c.var[k] + et.sigma * et.sigma;
    out[k] = et.alpha * c.mean[k] + std::sqrt(v_to / v_from) * (x[k] - ef.alpha * c.mean[k]);
  }
  return out;
}

std::vector<TrajectoryRow> entropy_trajectory(const RunResult& run_result, const Vec& x_start,
                                              const TimeGrid& grid, const DataDistribution& dist,
                                              const NoiseSchedule& schedule) {
  if (dist.dim() < 1) throw ValidationError("dim", "d must be >= 1");
  if (static_cast<int>(run_result.records.size()) != grid.n_steps())
    throw DomainError("entropy_trajectory: run and grid disagree");
  std::vector<TrajectoryRow> rows;
  const double t_start = run_result.records.front().t_cur;
  for (std::size_t i = 0; i < run_result.records.size(); ++i) {
    const StepRecord& rec = run_result.records[i];
    if (rec.corrected_state.empty())
      throw DomainError("entropy_trajectory needs a run executed with keep_states");
    // deviation from the exact denoising trajectory launched at x_start
    const Vec mu = exact_gaussian_flow(dist, schedule, t_start, rec.t_next, x_start);
    const double dev = norm2(sub(rec.corrected_state, mu));
    TrajectoryRow row;
    row.index = rec.index;
    row.t = rec.t_next;
    row.var_estimate = dev * dev / static_cast<double>(dist.dim());
    row.entropy_estimate = gaussian_entropy(Vec(dist.dim(), std::max(row.var_estimate, 1e-300)));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace evodiff
