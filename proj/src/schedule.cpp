#include "evodiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace evodiff {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kCosineShift = 0.008;  // s in the cosine alpha_bar

// Angle of the cosine schedule: alpha = cos(theta), sigma = sin(theta).
double cosine_theta(double t) { return 0.5 * kPi * (t + kCosineShift) / (1.0 + kCosineShift); }

}  // namespace

NoiseSchedule NoiseSchedule::vp_linear(double beta0, double beta1) {
  if (!(beta0 > 0.0) || !(beta1 > beta0)) throw DomainError("vp_linear requires 0 < beta0 < beta1");
  NoiseSchedule s;
  s.kind_ = ScheduleKind::VpLinear;
  s.beta0_ = beta0;
  s.beta1_ = beta1;
  s.t_min_ = 0.0;  // open: sigma(0) = 0
  s.t_max_ = 1.0;
  return s;
}

NoiseSchedule NoiseSchedule::vp_cosine() {
  NoiseSchedule s;
  s.kind_ = ScheduleKind::VpCosine;
  s.t_min_ = 0.0;
  s.t_max_ = 1.0 - 1e-6;  // alpha -> 0 at t = 1
  return s;
}

NoiseSchedule NoiseSchedule::ve_edm(double sigma_min, double sigma_max) {
  if (!(sigma_min > 0.0) || !(sigma_max > sigma_min))
    throw DomainError("ve_edm requires 0 < sigma_min < sigma_max");
  NoiseSchedule s;
  s.kind_ = ScheduleKind::VeEdm;
  s.sigma_min_ = sigma_min;
  s.sigma_max_ = sigma_max;
  s.t_min_ = 0.0;  // open: sigma = t
  s.t_max_ = sigma_max;
  return s;
}

ScheduleEval NoiseSchedule::at(double t) const {
  if (!(t > t_min_) || !(t <= t_max_) || !std::isfinite(t)) {
    std::ostringstream os;
    os << "time " << t << " outside schedule domain (" << t_min_ << ", " << t_max_ << "]";
    throw DomainError(os.str());
  }
  double alpha = 0.0, sigma = 0.0;
  switch (kind_) {
    case ScheduleKind::VpLinear: {
      // alpha_t = exp(-1/4 t^2 (beta1-beta0) - 1/2 t beta0)
      const double log_alpha = -0.25 * t * t * (beta1_ - beta0_) - 0.5 * t * beta0_;
      alpha = std::exp(log_alpha);
      sigma = std::sqrt(std::max(0.0, -std::expm1(2.0 * log_alpha)));
      break;
    }
    case ScheduleKind::VpCosine: {
      const double th = cosine_theta(t);
      alpha = std::cos(th);
      sigma = std::sin(th);
      break;
    }
    case ScheduleKind::VeEdm:
      alpha = 1.0;
      sigma = t;
      break;
  }
  if (!(sigma > 0.0)) throw DomainError("sigma_t = 0 at requested time");
  return {alpha, sigma, std::log(alpha / sigma)};
}

double NoiseSchedule::time_of_lambda(double lam) const {
  double t = 0.0;
  switch (kind_) {
    case ScheduleKind::VpLinear: {
      // Solve 1/4 (b1-b0) t^2 + 1/2 b0 t + log(alpha) = 0, taking the root in (0, 1].
      // log(alpha) = -1/2 log(1 + exp(-2 lambda)) from alpha^2 = 1/(1+e^{-2l}).
      const double log_alpha = -0.5 * std::log1p(std::exp(-2.0 * lam));
      const double a = 0.25 * (beta1_ - beta0_);
      const double b = 0.5 * beta0_;
      const double disc = b * b - 4.0 * a * log_alpha;
      t = (-b + std::sqrt(disc)) / (2.0 * a);
      break;
    }
    case ScheduleKind::VpCosine: {
      // tan(theta) = sigma/alpha = exp(-lambda)
      const double th = std::atan(std::exp(-lam));
      t = th * (2.0 / kPi) * (1.0 + kCosineShift) - kCosineShift;
      break;
    }
    case ScheduleKind::VeEdm:
      t = std::exp(-lam);  // lambda = -log(sigma) = -log(t)
      break;
  }
  if (!(t > t_min_) || !(t <= t_max_ * (1.0 + 1e-12)))
    throw DomainError("lambda value maps outside schedule domain");
  return std::min(t, t_max_);
}

double NoiseSchedule::time_of_sigma(double sigma) const {
  if (!(sigma > 0.0)) throw DomainError("time_of_sigma requires sigma > 0");
  if (kind_ == ScheduleKind::VeEdm) {
    if (sigma > t_max_ * (1.0 + 1e-12)) throw DomainError("sigma above schedule range");
    return std::min(sigma, t_max_);
  }
  if (!(sigma < 1.0)) throw DomainError("VP schedules have sigma < 1");
  // lambda = log(alpha/sigma) with alpha = sqrt(1 - sigma^2)
  const double lam = 0.5 * std::log((1.0 - sigma * sigma) / (sigma * sigma));
  return time_of_lambda(lam);
}

std::string NoiseSchedule::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case ScheduleKind::VpLinear:
      os << "vp_linear(beta0=" << beta0_ << ", beta1=" << beta1_ << ")";
      break;
    case ScheduleKind::VpCosine:
      os << "vp_cosine";
      break;
    case ScheduleKind::VeEdm:
      os << "ve_edm(sigma_min=" << sigma_min_ << ", sigma_max=" << sigma_max_ << ")";
      break;
  }
  return os.str();
}

double Kappa::kappa(const NoiseSchedule& s, double t) const {
  const ScheduleEval e = s.at(t);
  return mode == Parameterization::NoisePrediction ? e.sigma / e.alpha : e.alpha / e.sigma;
}

double Kappa::log_kappa(const NoiseSchedule& s, double t) const {
  const ScheduleEval e = s.at(t);
  return mode == Parameterization::NoisePrediction ? -e.lambda : e.lambda;
}

double Kappa::f_scale(const NoiseSchedule& s, double t) const {
  const ScheduleEval e = s.at(t);
  return mode == Parameterization::NoisePrediction ? e.alpha : e.sigma;
}

double Kappa::time_of_kappa(const NoiseSchedule& s, double k) const {
  if (!(k > 0.0)) throw DomainError("kappa must be positive");
  const double lam = mode == Parameterization::NoisePrediction ? -std::log(k) : std::log(k);
  return s.time_of_lambda(lam);
}

TimeGrid::TimeGrid(std::vector<double> times, GridPolicy policy)
    : times_(std::move(times)), policy_(policy) {
  if (times_.size() < 2) throw DomainError("grid needs at least one step");
  for (std::size_t i = 1; i < times_.size(); ++i)
    if (!(times_[i] < times_[i - 1])) throw DomainError("grid times must be strictly decreasing");
}

double TimeGrid::h_kappa(const NoiseSchedule& s, const Kappa& k, int pos) const {
  return k.kappa(s, time(pos)) - k.kappa(s, time(pos - 1));
}

double TimeGrid::h_lambda(const NoiseSchedule& s, int pos) const {
  return s.at(time(pos)).lambda - s.at(time(pos - 1)).lambda;
}

TimeGrid make_grid(const NoiseSchedule& schedule, GridPolicy policy, int n_steps, double t_start,
                   double t_end, double rho) {
  if (n_steps < 1) throw DomainError("n_steps must be >= 1");
  if (!(t_start > t_end)) throw DomainError("t_start must exceed t_end");
  schedule.at(t_start);  // domain checks
  schedule.at(t_end);

  std::vector<double> times(static_cast<std::size_t>(n_steps) + 1);
  switch (policy) {
    case GridPolicy::Uniform: {
      for (int i = 0; i <= n_steps; ++i)
        times[static_cast<std::size_t>(i)] = t_start + (t_end - t_start) * i / n_steps;
      break;
    }
    case GridPolicy::LogSnrUniform: {
      const double l0 = schedule.at(t_start).lambda;
      const double l1 = schedule.at(t_end).lambda;
      for (int i = 0; i <= n_steps; ++i) {
        const double lam = l0 + (l1 - l0) * i / n_steps;
        times[static_cast<std::size_t>(i)] = schedule.time_of_lambda(lam);
      }
      break;
    }
    case GridPolicy::EdmKarras: {
      if (!(rho > 0.0)) throw DomainError("Karras rho must be positive");
      const double smax = schedule.at(t_start).sigma;
      const double smin = schedule.at(t_end).sigma;
      const double a = std::pow(smax, 1.0 / rho);
      const double b = std::pow(smin, 1.0 / rho);
      for (int i = 0; i <= n_steps; ++i) {
        const double sig = std::pow(a + (b - a) * i / n_steps, rho);
        times[static_cast<std::size_t>(i)] = schedule.time_of_sigma(sig);
      }
      break;
    }
  }
  // Pin the endpoints exactly so equal configs stay byte-identical downstream.
  times.front() = t_start;
  times.back() = t_end;
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] < times[i - 1]))
      throw DomainError("grid policy produced a non-monotone time sequence");
  return TimeGrid(std::move(times), policy);
}

double step_ratio(const RStrategy& strategy, const TimeGrid& grid, const NoiseSchedule& schedule,
                  Parameterization param, int pos, const Vec* gradient, const Vec* state) {
  if (pos < 1 || pos > grid.n_steps() - 1)
    throw DomainError("step_ratio needs an interior position with neighbors on both sides");
  const Kappa kap{param};
  const double denom_floor = 1e-14;
  // Previous step spans times[pos-1] -> times[pos]; current spans
  // times[pos] -> times[pos+1].
  const double h_cur = kap.kappa(schedule, grid.time(pos + 1)) - kap.kappa(schedule, grid.time(pos));
  const double h_prev = kap.kappa(schedule, grid.time(pos)) - kap.kappa(schedule, grid.time(pos - 1));

  auto log_snr_ratio = [&]() {
    const double num = kap.log_kappa(schedule, grid.time(pos)) - kap.log_kappa(schedule, grid.time(pos - 1));
    const double den = kap.log_kappa(schedule, grid.time(pos + 1)) - kap.log_kappa(schedule, grid.time(pos));
    if (std::fabs(den) < denom_floor) throw DomainError("step_ratio: log-kappa step underflow");
    return num / den;
  };

  double r = 1.0;
  switch (strategy.kind) {
    case RKind::LogSnr:
      r = log_snr_ratio();
      break;
    case RKind::NormVar: {
      // Var_t = sigma_t^2; grid times decrease so variances decrease with pos.
      const double v_prev = [&] { const double s = schedule.at(grid.time(pos - 1)).sigma; return s * s; }();
      const double v_cur = [&] { const double s = schedule.at(grid.time(pos)).sigma; return s * s; }();
      const double v_next = [&] { const double s = schedule.at(grid.time(pos + 1)).sigma; return s * s; }();
      if (std::fabs(v_prev) < denom_floor || std::fabs(v_cur) < denom_floor)
        throw DomainError("step_ratio: variance underflow");
      const double num = (v_prev - v_cur) / v_prev;
      const double den = (v_cur - v_next) / v_cur;
      if (std::fabs(den) < denom_floor) throw DomainError("step_ratio: normvar denominator underflow");
      r = num / den;
      break;
    }
    case RKind::ArcTan: {
      // Ratio of arctangent-space step sizes, previous over current, in the
      // active kappa space.
      const double num = std::atan(h_prev);
      const double den = std::atan(h_cur);
      if (std::fabs(den) < denom_floor) throw DomainError("step_ratio: arctan denominator underflow");
      r = num / den;
      break;
    }
    case RKind::Refined: {
      const double rn = step_ratio({RKind::NormVar, strategy.beta}, grid, schedule, param, pos);
      const double ra = step_ratio({RKind::ArcTan, strategy.beta}, grid, schedule, param, pos);
      r = std::sqrt(rn * ra);
      break;
    }
    case RKind::Confidence: {
      double w = 1.0;
      if (gradient != nullptr && state != nullptr) {
        w = 1.0 + strategy.beta * cosine_similarity(*gradient, *state);
        w = std::clamp(w, 0.5, 1.5);
      }
      r = log_snr_ratio() * w;
      break;
    }
  }
  if (!(r > 0.0)) throw DomainError("step_ratio produced a non-positive ratio");
  return r;
}

const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::VpLinear: return "vp_linear";
    case ScheduleKind::VpCosine: return "vp_cosine";
    case ScheduleKind::VeEdm: return "ve_edm";
  }
  return "?";
}

const char* to_string(GridPolicy p) {
  switch (p) {
    case GridPolicy::Uniform: return "uniform";
    case GridPolicy::LogSnrUniform: return "logsnr";
    case GridPolicy::EdmKarras: return "karras";
  }
  return "?";
}

const char* to_string(RKind k) {
  switch (k) {
    case RKind::LogSnr: return "logsnr";
    case RKind::NormVar: return "normvar";
    case RKind::ArcTan: return "arctan";
    case RKind::Refined: return "refined";
    case RKind::Confidence: return "confidence";
  }
  return "?";
}

const char* to_string(Parameterization p) {
  return p == Parameterization::NoisePrediction ? "noise" : "data";
}

}  // namespace evodiff
