#include "evodiff/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "evodiff/errors.hpp"

namespace evodiff {

DataDistribution DataDistribution::gaussian(Vec mean, Vec var) {
  return mixture({GaussianComponent{1.0, std::move(mean), std::move(var)}});
}

DataDistribution DataDistribution::mixture(std::vector<GaussianComponent> components) {
  if (components.empty()) throw DomainError("mixture needs at least one component");
  const std::size_t d = components[0].mean.size();
  double wsum = 0.0;
  for (const auto& c : components) {
    if (c.mean.size() != d || c.var.size() != d)
      throw DomainError("mixture components must share one dimension");
    if (!(c.weight > 0.0)) throw DomainError("mixture weights must be positive");
    for (double v : c.var)
      if (!(v > 0.0)) throw DomainError("covariance diagonal entries must be positive");
    wsum += c.weight;
  }
  if (std::fabs(wsum - 1.0) > 1e-12) throw DomainError("mixture weights must sum to 1");
  DataDistribution dist;
  dist.components_ = std::move(components);
  return dist;
}

Vec DataDistribution::sample(RandomStream& rng) const {
  std::size_t k = 0;
  if (components_.size() > 1) {
    double u = rng.uniform();
    double acc = 0.0;
    for (; k + 1 < components_.size(); ++k) {
      acc += components_[k].weight;
      if (u < acc) break;
    }
  }
  const auto& c = components_[k];
  Vec x(dim());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = c.mean[i] + std::sqrt(c.var[i]) * rng.normal();
  return x;
}

Vec DataDistribution::posterior_mean_x0(const Vec& x, double alpha, double sigma) const {
  const std::size_t d = dim();
  if (x.size() != d) throw DomainError("x dimension mismatch");
  const double s2 = sigma * sigma;

  if (components_.size() == 1) {
    const auto& c = components_[0];
    Vec out(d);
    for (std::size_t i = 0; i < d; ++i) {
      const double denom = alpha * alpha * c.var[i] + s2;
      out[i] = c.mean[i] + alpha * c.var[i] / denom * (x[i] - alpha * c.mean[i]);
    }
    return out;
  }

  // log responsibilities: log w_k + log N(x; alpha m_k, alpha^2 V_k + sigma^2 I)
  std::vector<double> logr(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    double lr = std::log(c.weight);
    for (std::size_t i = 0; i < d; ++i) {
      const double denom = alpha * alpha * c.var[i] + s2;
      const double diff = x[i] - alpha * c.mean[i];
      lr += -0.5 * (std::log(denom) + diff * diff / denom);
    }
    logr[k] = lr;
  }
  const double mx = *std::max_element(logr.begin(), logr.end());
  if (!std::isfinite(mx)) throw NumericalError("mixture responsibilities underflowed");
  double z = 0.0;
  for (double& lr : logr) {
    lr = std::exp(lr - mx);
    z += lr;
  }

  Vec out(d, 0.0);
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const double resp = logr[k] / z;
    for (std::size_t i = 0; i < d; ++i) {
      const double denom = alpha * alpha * c.var[i] + s2;
      out[i] += resp * (c.mean[i] + alpha * c.var[i] / denom * (x[i] - alpha * c.mean[i]));
    }
  }
  return out;
}

Vec DataDistribution::mean() const {
  Vec m(dim(), 0.0);
  for (const auto& c : components_) axpy(c.weight, c.mean, m);
  return m;
}

std::vector<double> DataDistribution::covariance() const {
  const std::size_t d = dim();
  const Vec m = mean();
  std::vector<double> cov(d * d, 0.0);
  for (const auto& c : components_) {
    for (std::size_t i = 0; i < d; ++i) {
      cov[i * d + i] += c.weight * c.var[i];
      for (std::size_t j = 0; j < d; ++j) cov[i * d + j] += c.weight * c.mean[i] * c.mean[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) cov[i * d + j] -= m[i] * m[j];
  return cov;
}

Vec DenoiserOracle::evaluate(const Vec& x, double t) {
  if (!all_finite(x)) throw DomainError("oracle input state is not finite");
  const ScheduleEval e = schedule_->at(t);
  ++count_;
  Vec x0 = dist_.posterior_mean_x0(x, e.alpha, e.sigma);
  if (mode_ == Parameterization::DataPrediction) return x0;
  // eps = (x - alpha x0) / sigma keeps x = alpha x0 + sigma eps exact.
  Vec eps(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) eps[i] = (x[i] - e.alpha * x0[i]) / e.sigma;
  return eps;
}

Vec cfg_combine(const Vec& cond, const Vec& uncond, double w) {
  if (cond.size() != uncond.size()) throw DomainError("cfg_combine dimension mismatch");
  Vec out(cond.size());
  for (std::size_t i = 0; i < cond.size(); ++i) out[i] = (1.0 + w) * cond[i] - w * uncond[i];
  return out;
}

ForwardSample sample_forward(const DataDistribution& dist, const NoiseSchedule& schedule, double t,
                             RandomStream& rng) {
  const ScheduleEval e = schedule.at(t);
  ForwardSample s;
  s.x0 = dist.sample(rng);
  s.eps = rng.normal_vec(dist.dim());
  s.xt.resize(dist.dim());
  for (std::size_t i = 0; i < s.xt.size(); ++i) s.xt[i] = e.alpha * s.x0[i] + e.sigma * s.eps[i];
  return s;
}

}  // namespace evodiff
