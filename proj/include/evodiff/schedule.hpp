#pragma once

#include <string>
#include <vector>

#include "evodiff/errors.hpp"
#include "evodiff/vec.hpp"

namespace evodiff {

enum class ScheduleKind { VpLinear, VpCosine, VeEdm };

struct ScheduleEval {
  double alpha;
  double sigma;
  double lambda;  // log(alpha / sigma)
};

// Continuous-time noise schedule. alpha_t is non-increasing, sigma_t
// non-decreasing, lambda strictly decreasing on the valid domain.
// VP kinds keep alpha^2 + sigma^2 = 1; VE keeps alpha = 1, sigma = t.
class NoiseSchedule {
 public:
  static NoiseSchedule vp_linear(double beta0 = 0.1, double beta1 = 20.0);
  static NoiseSchedule vp_cosine();
  static NoiseSchedule ve_edm(double sigma_min = 0.002, double sigma_max = 80.0);

  ScheduleEval at(double t) const;  // throws DomainError outside (t_min, t_max]

  double t_min() const { return t_min_; }
  double t_max() const { return t_max_; }
  ScheduleKind kind() const { return kind_; }
  double beta0() const { return beta0_; }
  double beta1() const { return beta1_; }
  double sigma_min() const { return sigma_min_; }
  double sigma_max() const { return sigma_max_; }

  // Inverse maps used by grid construction. Both throw DomainError when the
  // requested value cannot be reached inside the valid domain.
  double time_of_lambda(double lam) const;
  double time_of_sigma(double sigma) const;

  std::string describe() const;

 private:
  ScheduleKind kind_ = ScheduleKind::VpLinear;
  double beta0_ = 0.1, beta1_ = 20.0;      // VpLinear
  double sigma_min_ = 0.002, sigma_max_ = 80.0;  // VeEdm
  double t_min_ = 0.0, t_max_ = 1.0;       // open at t_min
};

enum class Parameterization { NoisePrediction, DataPrediction };

// Unified time variable kappa(t) and the f-transform scale of the active
// parameterization: noise prediction uses kappa = sigma/alpha, f(x) = x/alpha;
// data prediction uses kappa = alpha/sigma, f(x) = x/sigma.
struct Kappa {
  Parameterization mode = Parameterization::DataPrediction;

  double kappa(const NoiseSchedule& s, double t) const;
  double log_kappa(const NoiseSchedule& s, double t) const;  // -lambda or +lambda
  double f_scale(const NoiseSchedule& s, double t) const;    // alpha_t or sigma_t
  double time_of_kappa(const NoiseSchedule& s, double k) const;
};

enum class GridPolicy { Uniform, LogSnrUniform, EdmKarras };

// Strictly decreasing discretization t_N > ... > t_0. Stored noisiest-first:
// time(0) = t_N = t_start down to time(n_steps) = t_0 = t_end.
class TimeGrid {
 public:
  TimeGrid(std::vector<double> times, GridPolicy policy);

  int n_steps() const { return static_cast<int>(times_.size()) - 1; }
  double time(int pos) const { return times_.at(static_cast<std::size_t>(pos)); }
  const std::vector<double>& times() const { return times_; }
  GridPolicy policy() const { return policy_; }

  // kappa gap across the step that lands on position `pos`:
  // h(pos) = kappa(times[pos]) - kappa(times[pos-1]) for pos >= 1, i.e. the
  // paper's h_{t_i} with t_i = times[pos-1], t_{i-1} = times[pos].
  double h_kappa(const NoiseSchedule& s, const Kappa& k, int pos) const;
  double h_lambda(const NoiseSchedule& s, int pos) const;

 private:
  std::vector<double> times_;
  GridPolicy policy_;
};

TimeGrid make_grid(const NoiseSchedule& schedule, GridPolicy policy, int n_steps,
                   double t_start, double t_end, double rho = 7.0);

enum class RKind { LogSnr, NormVar, ArcTan, Refined, Confidence };

struct RStrategy {
  RKind kind = RKind::LogSnr;
  double beta = 0.5;  // Confidence weight
};

// Step-size ratio r at an interior grid position. `pos` indexes the step that
// goes times[pos] -> times[pos+1]; it needs the previous point times[pos-1],
// so 1 <= pos <= n_steps-1. The Confidence kind consults the optional
// (gradient direction, state) context; the others ignore it.
double step_ratio(const RStrategy& strategy, const TimeGrid& grid, const NoiseSchedule& schedule,
                  Parameterization param, int pos, const Vec* gradient = nullptr,
                  const Vec* state = nullptr);

const char* to_string(ScheduleKind k);
const char* to_string(GridPolicy p);
const char* to_string(RKind k);
const char* to_string(Parameterization p);

}  // namespace evodiff
