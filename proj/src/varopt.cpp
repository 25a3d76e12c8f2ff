#include "evodiff/varopt.hpp"

#include <cmath>

#include "evodiff/errors.hpp"

namespace evodiff {

namespace {
constexpr double kDegenerateNorm = 1e-12;

Vec zeta_residual_direction(const ZetaInputs& in) {
  // P~ = P - sigma_h * m_t
  Vec p = in.P;
  axpy(-in.sigma_h, in.m_t, p);
  return p;
}
}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double zeta_star(const ZetaInputs& in, OptFormula formula) {
  if (in.sigma_h == 0.0) throw DomainError("zeta_star requires sigma_h != 0");
  const double dd = dot(in.D, in.D);
  if (std::sqrt(dd) < kDegenerateNorm) throw DegenerateDirection("zeta_star: ||D|| ~ 0");
  const Vec p_tilde = zeta_residual_direction(in);
  const double value = dot(in.D, p_tilde) / (in.sigma_h * dd);
  return formula == OptFormula::AnalyticMin ? value : -value;
}

double eta_star(const EtaInputs& in, OptFormula formula) {
  const Vec b_tilde = sub(in.b_forward, in.b_backward);
  const double bb = dot(b_tilde, b_tilde);
  if (std::sqrt(bb) < kDegenerateNorm) throw DegenerateDirection("eta_star: ||B1 - B2|| ~ 0");
  if (formula == OptFormula::AnalyticMin) return dot(b_tilde, in.b_forward) / bb;
  return -dot(b_tilde, in.b_backward) / bb;
}

double map_zeta(double zeta_raw, double mu, ZetaMap variant, double sigma_ratio) {
  const double scale = variant == ZetaMap::SigmaScaled ? sigma_ratio : 1.0;
  return sigmoid(-scale * (std::fabs(zeta_raw) - mu));
}

double map_eta(double eta_raw) { return sigmoid(std::fabs(eta_raw)); }

namespace {

template <typename Objective>
GridSearchResult scan(Objective&& f, double lo, double hi, double step) {
  if (!(step > 0.0) || !std::isfinite(lo) || !std::isfinite(hi) || !(hi > lo))
    throw DomainError("grid_search_min requires a finite range and positive step");
  GridSearchResult best{lo, f(lo), true};
  double fmin = best.objective, fmax = best.objective;
  const long n = static_cast<long>(std::floor((hi - lo) / step + 0.5));
  for (long i = 1; i <= n; ++i) {
    const double x = lo + step * static_cast<double>(i);
    const double fx = f(x);
    fmin = std::min(fmin, fx);
    fmax = std::max(fmax, fx);
    if (fx < best.objective) {
      best.argmin = x;
      best.objective = fx;
    }
  }
  best.flat = (fmax - fmin) <= 0.0;
  if (best.flat) best.argmin = lo;  // flat objective: report the range lower bound
  return best;
}

}  // namespace

GridSearchResult grid_search_min(const ZetaInputs& in, double lo, double hi, double step) {
  const Vec p_tilde = zeta_residual_direction(in);
  return scan(
      [&](double z) {
        double s = 0.0;
        for (std::size_t i = 0; i < p_tilde.size(); ++i) {
          const double r = p_tilde[i] - in.sigma_h * z * in.D[i];
          s += r * r;
        }
        return s;
      },
      lo, hi, step);
}

GridSearchResult grid_search_min(const EtaInputs& in, double lo, double hi, double step) {
  return scan(
      [&](double e) {
        double s = 0.0;
        for (std::size_t i = 0; i < in.b_forward.size(); ++i) {
          const double r = (1.0 - e) * in.b_forward[i] + e * in.b_backward[i];
          s += r * r;
        }
        return s;
      },
      lo, hi, step);
}

}  // namespace evodiff
