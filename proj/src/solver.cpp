#include "evodiff/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "evodiff/errors.hpp"

namespace evodiff {

namespace {

constexpr double kDegenerateNorm = 1e-12;
constexpr double kDenomFloor = 1e-14;

struct StepFrame {
  double t_from, t_to;
  double scale_from, scale_to;  // f-transform scales of the active kappa space
  double h;                     // kappa(t_to) - kappa(t_from)
};

StepFrame frame(const Vec& x, int pos, const TimeGrid& grid, const NoiseSchedule& schedule,
                Parameterization param) {
  if (pos < 0 || pos >= grid.n_steps()) throw DomainError("step position out of range");
  if (!all_finite(x)) throw NumericalError("step input state is not finite");
  const Kappa kap{param};
  StepFrame f;
  f.t_from = grid.time(pos);
  f.t_to = grid.time(pos + 1);
  f.scale_from = kap.f_scale(schedule, f.t_from);
  f.scale_to = kap.f_scale(schedule, f.t_to);
  f.h = kap.kappa(schedule, f.t_to) - kap.kappa(schedule, f.t_from);
  return f;
}

// x' = (scale_to / scale_from) x + scale_to * update, where `update` collects
// the f-space increment terms.
Vec advance(const Vec& x, const StepFrame& f, const Vec& update) {
  const double ratio = f.scale_to / f.scale_from;
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = ratio * x[i] + f.scale_to * update[i];
  return out;
}

Vec ddim_between(const Vec& x, double t_from, double t_to, const NoiseSchedule& schedule,
                 Denoiser& oracle, Vec* model_out = nullptr) {
  const Kappa kap{oracle.mode()};
  const double sf = kap.f_scale(schedule, t_from);
  const double st = kap.f_scale(schedule, t_to);
  const double h = kap.kappa(schedule, t_to) - kap.kappa(schedule, t_from);
  Vec d = oracle.evaluate(x, t_from);
  Vec out(x.size());
  const double ratio = st / sf;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = ratio * x[i] + st * h * d[i];
  if (model_out != nullptr) *model_out = std::move(d);
  return out;
}

double remark_var_zeta(const NoiseSchedule& schedule, const TimeGrid& grid, int pos,
                       ReInterp interp) {
  const double s_cur = schedule.at(grid.time(pos)).sigma;
  if (interp == ReInterp::ExplicitL) {
    const double s_prev = schedule.at(grid.time(pos - 1)).sigma;
    return s_cur * s_cur / (s_cur * s_cur + s_prev * s_prev);
  }
  const double s_next = schedule.at(grid.time(pos + 1)).sigma;
  return s_next * s_next / (s_cur * s_cur + s_next * s_next);
}

}  // namespace

std::string SolverConfig::name() const {
  switch (family) {
    case SolverFamily::Ddim: return "ddim";
    case SolverFamily::FdSingle: return "fd_single";
    case SolverFamily::ReSingle: return "re_single";
    case SolverFamily::HeunEdm: return "heun_edm";
    case SolverFamily::DpmSolver2s: return "dpm_solver_2s";
    case SolverFamily::Multistep:
      switch (variant) {
        case MultistepVariant::PlainKappa: return "plain_kappa";
        case MultistepVariant::Dpmpp2m: return "dpmpp_2m";
        case MultistepVariant::ReMulti: return "re_multi";
      }
      return "multistep";
    case SolverFamily::EvoDiff: return "evodiff";
  }
  return "?";
}

void EvalHistory::push(double t, Vec state, Vec model_value) {
  if (!entries_.empty() && !(t < entries_.back().t))
    throw DomainError("history times must be strictly decreasing");
  entries_.push_back({t, std::move(state), std::move(model_value)});
  while (entries_.size() > capacity_) entries_.pop_front();
}

Vec ddim_step(const Vec& x, int pos, const TimeGrid& grid, const NoiseSchedule& schedule,
              Denoiser& oracle) {
  const StepFrame f = frame(x, pos, grid, schedule, oracle.mode());
  Vec d = oracle.evaluate(x, f.t_from);
  Vec update(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) update[i] = f.h * d[i];
  return advance(x, f, update);
}

Vec fd_single_step(const Vec& x, int pos, const TimeGrid& grid, const NoiseSchedule& schedule,
                   Denoiser& oracle, double r) {
  if (!(r >= 1.0)) throw DomainError("fd_single_step requires r >= 1");
  const StepFrame f = frame(x, pos, grid, schedule, oracle.mode());
  const Kappa kap{oracle.mode()};
  const double h_hat = f.h / r;
  if (std::fabs(h_hat) < kDenomFloor) throw DomainError("fd_single_step: h_hat underflow");
  const double t_s = r == 1.0 ? f.t_to : kap.time_of_kappa(schedule, kap.kappa(schedule, f.t_from) + h_hat);

  Vec d_t = oracle.evaluate(x, f.t_from);
  // inner DDIM step to the intermediate time
  const double scale_s = kap.f_scale(schedule, t_s);
  Vec x_s(x.size());
  const double ratio_s = scale_s / f.scale_from;
  for (std::size_t i = 0; i < x.size(); ++i) x_s[i] = ratio_s * x[i] + scale_s * h_hat * d_t[i];
  Vec d_s = oracle.evaluate(x_s, t_s);

  Vec update(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double fd = (d_s[i] - d_t[i]) / h_hat;
    update[i] = f.h * d_t[i] + 0.5 * f.h * f.h * fd;
  }
  return advance(x, f, update);
}

Vec re_single_step(const Vec& x, int pos, const TimeGrid& grid, const NoiseSchedule& schedule,
                   Denoiser& oracle, double gamma, double r, ReSinglePreset preset) {
  const StepFrame f = frame(x, pos, grid, schedule, oracle.mode());
  const Kappa kap{oracle.mode()};

  double t_s = f.t_to;
  if (preset == ReSinglePreset::HalfGamma) {
    r = 1.0;
    gamma = 0.5;
  } else if (preset == ReSinglePreset::SnrBalanced) {
    // r depends on SNR at the midpoint it defines; resolve by fixed point.
    const auto snr = [&](double t) {
      const ScheduleEval e = schedule.at(t);
      return e.alpha * e.alpha / (e.sigma * e.sigma);
    };
    const double snr_t = snr(f.t_from);
    r = 1.0;
    for (int it = 0; it < 100; ++it) {
      t_s = r == 1.0 ? f.t_to : kap.time_of_kappa(schedule, kap.kappa(schedule, f.t_from) + f.h / r);
      const double snr_s = snr(t_s);
      const double next = std::sqrt(2.0 * snr_s / (snr_t + snr_s));
      if (std::fabs(next - r) < 1e-13) {
        r = next;
        break;
      }
      r = next;
    }
    gamma = snr_t / (snr_t + snr(t_s));
  }
  if (!(r >= 1.0)) throw DomainError("re_single_step requires r >= 1");
  if (!(gamma > 0.0) || !(gamma <= 1.0)) throw DomainError("re_single_step requires gamma in (0, 1]");

  const double h_hat = f.h / r;
  if (std::fabs(h_hat) < kDenomFloor) throw DomainError("re_single_step: h_hat underflow");
  t_s = r == 1.0 ? f.t_to : kap.time_of_kappa(schedule, kap.kappa(schedule, f.t_from) + h_hat);

  Vec d_t = oracle.evaluate(x, f.t_from);
  const double scale_s = kap.f_scale(schedule, t_s);
  Vec x_s(x.size());
  const double ratio_s = scale_s / f.scale_from;
  for (std::size_t i = 0; i < x.size(); ++i) x_s[i] = ratio_s * x[i] + scale_s * h_hat * d_t[i];
  Vec d_s = oracle.evaluate(x_s, t_s);

  Vec update(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double fd = (d_s[i] - d_t[i]) / h_hat;
    update[i] = f.h * (gamma * d_s[i] + (1.0 - gamma) * d_t[i]) + 0.5 * f.h * f.h * fd;
  }
  return advance(x, f, update);
}

Vec heun_edm_step(const Vec& x, int pos, const TimeGrid& grid, const NoiseSchedule& schedule,
                  Denoiser& oracle) {
  const StepFrame f = frame(x, pos, grid, schedule, oracle.mode());
  Vec d_t = oracle.evaluate(x, f.t_from);
  Vec x_pred(x.size());
  const double ratio = f.scale_to / f.scale_from;
  for (std::size_t i = 0; i < x.size(); ++i) x_pred[i] = ratio * x[i] + f.scale_to * f.h * d_t[i];
  Vec d_next = oracle.evaluate(x_pred, f.t_to);
  Vec update(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) update[i] = f.h * 0.5 * (d_t[i] + d_next[i]);
  return advance(x, f, update);
}

Vec dpm_solver_2s_step(const Vec& x, int pos, const TimeGrid& grid, const NoiseSchedule& schedule,
                       Denoiser& oracle, double r1) {
  if (oracle.mode() != Parameterization::NoisePrediction)
    throw DomainError("dpm_solver_2s_step requires a noise-prediction oracle");
  if (!(r1 > 0.0) || !(r1 > 0.0 && r1 <= 1.0)) throw DomainError("dpm_solver_2s_step requires r1 in (0, 1]");
  const StepFrame f = frame(x, pos, grid, schedule, oracle.mode());
  const Kappa kap{oracle.mode()};
  const double lam_t = schedule.at(f.t_from).lambda;
  const double lam_to = schedule.at(f.t_to).lambda;
  const double h_lambda = lam_to - lam_t;
  const double h_lambda_hat = r1 * h_lambda;
  const double t_s = r1 == 1.0 ? f.t_to : schedule.time_of_lambda(lam_t + h_lambda_hat);

  Vec eps_t = oracle.evaluate(x, f.t_from);
  const double scale_s = kap.f_scale(schedule, t_s);
  const double h_hat = kap.kappa(schedule, t_s) - kap.kappa(schedule, f.t_from);
  Vec x_s(x.size());
  const double ratio_s = scale_s / f.scale_from;
  for (std::size_t i = 0; i < x.size(); ++i) x_s[i] = ratio_s * x[i] + scale_s * h_hat * eps_t[i];
  Vec eps_s = oracle.evaluate(x_s, t_s);

  Vec update(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double grad = (eps_s[i] - eps_t[i]) / h_lambda_hat;
    update[i] = f.h * eps_t[i] + 0.5 * f.h * h_lambda * grad;
  }
  return advance(x, f, update);
}

Vec dpm_solver_2s_step_literal(const Vec& x, int pos, const TimeGrid& grid,
                               const NoiseSchedule& schedule, Denoiser& oracle, double r1) {
  if (oracle.mode() != Parameterization::NoisePrediction)
    throw DomainError("dpm_solver_2s_step requires a noise-prediction oracle");
  if (!(r1 > 0.0 && r1 <= 1.0)) throw DomainError("dpm_solver_2s_step requires r1 in (0, 1]");
  const ScheduleEval from = schedule.at(grid.time(pos));
  const ScheduleEval to = schedule.at(grid.time(pos + 1));
  const double h_lambda = to.lambda - from.lambda;
  const double t_s = r1 == 1.0 ? grid.time(pos + 1) : schedule.time_of_lambda(from.lambda + r1 * h_lambda);
  const ScheduleEval mid = schedule.at(t_s);

  Vec eps_t = oracle.evaluate(x, grid.time(pos));
  Vec x_s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    x_s[i] = mid.alpha / from.alpha * x[i] - mid.sigma * std::expm1(r1 * h_lambda) * eps_t[i];
  Vec eps_s = oracle.evaluate(x_s, t_s);

  Vec out(x.size());
  const double coef = to.sigma * std::expm1(h_lambda);
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = to.alpha / from.alpha * x[i] - coef * eps_t[i] -
             coef / (2.0 * r1) * (eps_s[i] - eps_t[i]);
  }
  return out;
}

Vec multistep_step(const Vec& x, int pos, const TimeGrid& grid, const NoiseSchedule& schedule,
                   Denoiser& oracle, EvalHistory& history, const SolverConfig& cfg,
                   StepRecord* record) {
  if (pos < 1) throw DomainError("multistep_step needs a warm-up step first");
  if (!history.has(0) || std::fabs(history.t(0) - grid.time(pos - 1)) > 1e-12)
    throw DomainError("multistep_step: history does not hold the previous evaluation");
  const StepFrame f = frame(x, pos, grid, schedule, oracle.mode());

  Vec m = oracle.evaluate(x, f.t_from);
  const Vec& m_prev = history.model_value(0);
  Vec dm = sub(m, m_prev);

  double r = 1.0;
  double zeta = 1.0;
  switch (cfg.variant) {
    case MultistepVariant::PlainKappa: {
      const Kappa kap{oracle.mode()};
      const double h_prev = kap.kappa(schedule, f.t_from) - kap.kappa(schedule, grid.time(pos - 1));
      r = h_prev / f.h;
      break;
    }
    case MultistepVariant::Dpmpp2m:
      r = step_ratio({RKind::LogSnr}, grid, schedule, oracle.mode(), pos);
      break;
    case MultistepVariant::ReMulti:
      r = step_ratio(cfg.r_strategy, grid, schedule, oracle.mode(), pos, &dm, &x);
      zeta = cfg.zeta_policy == ZetaPolicyKind::Fixed
                 ? cfg.fixed_zeta
                 : remark_var_zeta(schedule, grid, pos, cfg.interp);
      break;
  }
  if (!(zeta > 0.0)) throw DomainError("multistep_step: zeta must be positive");
  const double denom = r * f.h;
  if (std::fabs(denom) < kDenomFloor) throw DomainError("multistep_step: degenerate r_i");

  Vec update(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    update[i] = f.h * m[i] + 0.5 * f.h * f.h * zeta * dm[i] / denom;
  Vec out = advance(x, f, update);

  history.push(f.t_from, x, std::move(m));
  if (record != nullptr) {
    record->r = r;
    record->zeta = zeta;
  }
  return out;
}

Vec dpmpp_2m_step_literal(const Vec& x, int pos, const TimeGrid& grid,
                          const NoiseSchedule& schedule, Denoiser& oracle,
                          EvalHistory& history) {
  if (oracle.mode() != Parameterization::DataPrediction)
    throw DomainError("dpmpp_2m_step_literal requires a data-prediction oracle");
  if (pos < 1 || !history.has(0)) throw DomainError("dpmpp_2m_step_literal needs history");
  const ScheduleEval from = schedule.at(grid.time(pos));
  const ScheduleEval to = schedule.at(grid.time(pos + 1));
  const double h_lambda = to.lambda - from.lambda;
  const double h_lambda_prev = from.lambda - schedule.at(grid.time(pos - 1)).lambda;
  const double r = h_lambda_prev / h_lambda;

  Vec m = oracle.evaluate(x, grid.time(pos));
  const Vec& m_prev = history.model_value(0);
  Vec out(x.size());
  const double coef = -to.alpha * std::expm1(-h_lambda);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double blended = (1.0 + 1.0 / (2.0 * r)) * m[i] - 1.0 / (2.0 * r) * m_prev[i];
    out[i] = to.sigma / from.sigma * x[i] + coef * blended;
  }
  history.push(grid.time(pos), x, std::move(m));
  return out;
}

Vec evodiff_step(const Vec& x, int pos, const TimeGrid& grid, const NoiseSchedule& schedule,
                 Denoiser& oracle, EvalHistory& history, const SolverConfig& cfg,
                 StepRecord& record, Vec* inout_probe) {
  if (oracle.mode() != Parameterization::DataPrediction)
    throw DomainError("evodiff_step requires a data-prediction oracle");
  if (pos < 1) throw DomainError("evodiff_step needs a warm-up step first");
  if (!history.has(0) || std::fabs(history.t(0) - grid.time(pos - 1)) > 1e-12)
    throw DomainError("evodiff_step: history does not hold the previous evaluation");
  const StepFrame f = frame(x, pos, grid, schedule, oracle.mode());

  // (a) model value at the current state; the previous step's probe stands in
  // when probe reuse is on.
  Vec m;
  if (inout_probe != nullptr && !inout_probe->empty()) {
    m = std::move(*inout_probe);
    inout_probe->clear();
  } else {
    m = oracle.evaluate(x, f.t_from);
  }

  const Vec& m_prev = history.model_value(0);
  Vec dm = sub(m, m_prev);

  // (b) backward gradient across the previous interval
  const double r = step_ratio(cfg.r_strategy, grid, schedule, oracle.mode(), pos, &dm, &x);
  const double denom = r * f.h;
  if (std::fabs(denom) < kDenomFloor) throw DomainError("evodiff_step: degenerate r_i");
  Vec b_back = scale(1.0 / denom, dm);

  // (c) predictor
  Vec update(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) update[i] = f.h * m[i] + 0.5 * f.h * f.h * b_back[i];
  Vec x_hat = advance(x, f, update);

  // (d) probe evaluation and forward gradient
  Vec m_hat = oracle.evaluate(x_hat, f.t_to);
  Vec b_fwd(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) b_fwd[i] = (m_hat[i] - m[i]) / f.h;

  // (e) eta from the gradient-balance problem
  double eta = 1.0;
  {
    Vec b_tilde = sub(b_fwd, b_back);
    if (norm2(b_tilde) < kDegenerateNorm) {
      record.fallback_eta = true;
    } else {
      record.eta_raw = eta_star({b_fwd, b_back}, cfg.eta_formula);
      eta = map_eta(record.eta_raw);
    }
  }

  // (f) zeta from the state-difference problem
  double zeta = 1.0;
  bool zeta_ok = false;
  Vec d = sub(m_hat, m);
  if (norm2(d) < kDegenerateNorm) {
    record.fallback_zeta = true;
    record.fallback_eta = true;  // whole gradient machinery degrades
    eta = 1.0;
    record.eta_raw = std::numeric_limits<double>::quiet_NaN();
  } else {
    const double sigma_h = f.scale_from * f.h;
    const double inv_ratio = f.scale_from / f.scale_to;
    Vec x2(x.size()), p(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      x2[i] = inv_ratio * x_hat[i] + f.scale_from * (-f.h * m_hat[i] + 0.5 * f.h * f.h * b_fwd[i]);
      p[i] = x2[i] + inv_ratio * x_hat[i] - 2.0 * x[i];
    }
    record.zeta_raw = zeta_star({std::move(p), d, m, sigma_h}, cfg.zeta_formula);
    const double sig_ratio =
        schedule.at(f.t_from).sigma / schedule.at(grid.time(pos - 1)).sigma;
    zeta = map_zeta(record.zeta_raw, cfg.mu, cfg.zeta_map, sig_ratio);
    zeta_ok = true;
  }

  // (g) corrected state
  Vec b(x.size());
  double grad_coef = 0.5 * f.h * f.h;
  if (!zeta_ok) {
    b = b_back;  // degrade to the plain multistep gradient
  } else if (cfg.literal_zeta_division) {
    for (std::size_t i = 0; i < x.size(); ++i)
      b[i] = (1.0 - 0.5 * eta) * b_fwd[i] + 0.5 * eta * b_back[i];
    grad_coef = f.h * f.h / (2.0 * zeta);
  } else {
    // Interpolated-gradient reading: the zeta factors embedded in the
    // interpolated differences cancel against the 1/zeta of the corrector,
    // leaving (1-zeta)/zeta on the history gradient. Second-order consistent
    // at mu = 1/2 because |zeta*| -> 1/2 on smooth models. The gain is
    // bounded: raw (1-zeta)/zeta = exp(|zeta*| - mu) grows without limit
    // where the posterior mean curves hard and overshoots the data modes.
    double rho = (1.0 - zeta) / zeta;
    if (cfg.zeta_gain_limit > 1.0)
      rho = std::clamp(rho, 1.0 / cfg.zeta_gain_limit, cfg.zeta_gain_limit);
    for (std::size_t i = 0; i < x.size(); ++i)
      b[i] = (1.0 - 0.5 * eta) * b_fwd[i] + 0.5 * eta * rho * b_back[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) update[i] = f.h * m[i] + grad_coef * b[i];
  Vec out = advance(x, f, update);

  record.zeta = zeta_ok ? zeta : 1.0;
  record.eta = record.fallback_eta ? 1.0 : eta;
  record.r = r;
  record.predictor_state = std::move(x_hat);
  record.corrected_state = out;

  history.push(f.t_from, x, std::move(m));
  if (cfg.reuse_probe && inout_probe != nullptr) *inout_probe = std::move(m_hat);
  return out;
}

RunResult run(const SolverConfig& cfg, Denoiser& oracle, const TimeGrid& grid,
              const NoiseSchedule& schedule, Vec x_start, bool keep_states) {
  if (!all_finite(x_start)) throw NumericalError("run: starting state is not finite");
  const int n = grid.n_steps();
  RunResult result;
  result.records.reserve(static_cast<std::size_t>(n));
  Vec x = std::move(x_start);
  EvalHistory history(2);
  const std::int64_t nfe0 = oracle.evaluations();

  Vec staged_probe;  // evodiff probe reuse

  for (int pos = 0; pos < n; ++pos) {
    StepRecord rec;
    rec.index = n - pos;
    rec.t_cur = grid.time(pos);
    rec.t_next = grid.time(pos + 1);
    const std::int64_t before = oracle.evaluations();

    const bool multistep_family =
        cfg.family == SolverFamily::Multistep || cfg.family == SolverFamily::EvoDiff;
    const bool warmup = pos == 0 && (multistep_family || n == 1);

    Vec next;
    if (warmup) {
      // DDIM warm-up; keep the evaluation so multistep steps can start.
      Vec m;
      next = ddim_between(x, rec.t_cur, rec.t_next, schedule, oracle, &m);
      history.push(rec.t_cur, x, std::move(m));
      rec.warmup = true;
    } else {
      switch (cfg.family) {
        case SolverFamily::Ddim:
          next = ddim_step(x, pos, grid, schedule, oracle);
          break;
        case SolverFamily::FdSingle:
          next = fd_single_step(x, pos, grid, schedule, oracle, cfg.fd_r);
          break;
        case SolverFamily::ReSingle:
          next = re_single_step(x, pos, grid, schedule, oracle, cfg.gamma, cfg.fd_r, cfg.re_preset);
          break;
        case SolverFamily::HeunEdm:
          next = heun_edm_step(x, pos, grid, schedule, oracle);
          break;
        case SolverFamily::DpmSolver2s:
          next = dpm_solver_2s_step(x, pos, grid, schedule, oracle, cfg.r1);
          break;
        case SolverFamily::Multistep:
          next = multistep_step(x, pos, grid, schedule, oracle, history, cfg, &rec);
          break;
        case SolverFamily::EvoDiff:
          next = evodiff_step(x, pos, grid, schedule, oracle, history, cfg, rec, &staged_probe);
          break;
      }
    }
    if (!all_finite(next)) {
      std::ostringstream os;
      os << "run aborted: non-finite state after step index " << rec.index << " (t "
         << rec.t_cur << " -> " << rec.t_next << ")";
      throw NumericalError(os.str());
    }
    rec.nfe_delta = static_cast<int>(oracle.evaluations() - before);
    if (keep_states) {
      rec.corrected_state = next;
    } else {
      rec.corrected_state.clear();
      rec.predictor_state.clear();
    }
    result.records.push_back(std::move(rec));
    x = std::move(next);
  }
  result.x0 = std::move(x);
  result.nfe = oracle.evaluations() - nfe0;
  return result;
}

std::int64_t expected_nfe(const SolverConfig& cfg, int n_steps) {
  const std::int64_t n = n_steps;
  if (n <= 1) return 1;  // every one-step run is a single DDIM step
  switch (cfg.family) {
    case SolverFamily::Ddim:
      return n;
    case SolverFamily::FdSingle:
    case SolverFamily::ReSingle:
    case SolverFamily::HeunEdm:
    case SolverFamily::DpmSolver2s:
      return 2 * n;
    case SolverFamily::Multistep:
      return n;  // one warm-up evaluation + one new evaluation per later step
    case SolverFamily::EvoDiff:
      return cfg.reuse_probe ? n + 1 : 2 * n - 1;
  }
  return n;
}

Vec draw_start_state(const NoiseSchedule& schedule, double t_start, std::size_t dim,
                     RandomStream& rng) {
  const double sigma_hat = schedule.at(t_start).sigma;
  Vec x = rng.normal_vec(dim);
  for (double& v : x) v *= sigma_hat;
  return x;
}

}  // namespace evodiff
