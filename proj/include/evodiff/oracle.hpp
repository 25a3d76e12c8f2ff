#pragma once

#include <cstdint>
#include <vector>

#include "evodiff/rng.hpp"
#include "evodiff/schedule.hpp"
#include "evodiff/vec.hpp"

namespace evodiff {

struct GaussianComponent {
  double weight = 1.0;
  Vec mean;
  Vec var;  // diagonal covariance entries, all > 0
};

// Analytic data distribution q(x_0): a diagonal Gaussian or a finite mixture
// of them. Stands in for the trained model's data distribution.
class DataDistribution {
 public:
  static DataDistribution gaussian(Vec mean, Vec var);
  static DataDistribution mixture(std::vector<GaussianComponent> components);

  std::size_t dim() const { return components_[0].mean.size(); }
  const std::vector<GaussianComponent>& components() const { return components_; }

  Vec sample(RandomStream& rng) const;

  // E[x_0 | x_t = x] under q(x_t | x_0) = N(alpha x_0, sigma^2 I).
  // Mixture responsibilities are evaluated in log space.
  Vec posterior_mean_x0(const Vec& x, double alpha, double sigma) const;

  Vec mean() const;
  // Full covariance (row-major d x d): sum_k w_k (V_k + m_k m_k^T) - m m^T.
  std::vector<double> covariance() const;

 private:
  std::vector<GaussianComponent> components_;
};

// Model interface the solvers drive: a prediction at (x, t) plus an
// evaluation counter (the NFE unit).
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Vec evaluate(const Vec& x, double t) = 0;
  virtual Parameterization mode() const = 0;
  virtual std::int64_t evaluations() const = 0;
};

// Exact posterior-mean denoiser with an evaluation counter. One instance per
// solver run; the counter is plain (not atomic) under that contract.
class DenoiserOracle : public Denoiser {
 public:
  DenoiserOracle(DataDistribution dist, const NoiseSchedule& schedule, Parameterization mode)
      : dist_(std::move(dist)), schedule_(&schedule), mode_(mode) {}

  // Returns x-prediction or noise-prediction at (x, t) depending on mode.
  // Every call counts one evaluation.
  Vec evaluate(const Vec& x, double t) override;

  Parameterization mode() const override { return mode_; }
  void set_mode(Parameterization m) { mode_ = m; }
  std::int64_t evaluations() const override { return count_; }
  const DataDistribution& distribution() const { return dist_; }
  const NoiseSchedule& schedule() const { return *schedule_; }

 private:
  DataDistribution dist_;
  const NoiseSchedule* schedule_;
  Parameterization mode_;
  std::int64_t count_ = 0;
};

// Classifier-free guidance combination: (1 + w) * cond - w * uncond.
Vec cfg_combine(const Vec& cond, const Vec& uncond, double w);

struct ForwardSample {
  Vec x0;
  Vec xt;
  Vec eps;
};

// Draw x0 ~ dist, eps ~ N(0, I), and xt = alpha_t x0 + sigma_t eps.
ForwardSample sample_forward(const DataDistribution& dist, const NoiseSchedule& schedule, double t,
                             RandomStream& rng);

}  // namespace evodiff
