// Scratch refinement-study probe (not part of the build).
#include <cmath>
#include <cstdio>
#include <vector>

#include "evodiff/oracle.hpp"
#include "evodiff/rng.hpp"
#include "evodiff/schedule.hpp"
#include "evodiff/solver.hpp"

using namespace evodiff;

static double slope_for(const SolverConfig& cfg, int trials = 32) {
  const auto sched = NoiseSchedule::vp_linear(0.1, 20.0);
  const auto dist = DataDistribution::gaussian({0.25, -0.4}, {1.0, 0.7});
  const std::vector<int> Ns{20, 40, 80};
  const int n_ref = 5120;
  std::vector<double> mean_err(Ns.size(), 0.0);
  for (int trial = 0; trial < trials; ++trial) {
    RandomStream rng(1000 + trial, StreamTag::InitNoise);
    const Vec xT = draw_start_state(sched, 1.0, 2, rng);
    DenoiserOracle oracle_ref(dist, sched, cfg.param);
    const auto grid_ref = make_grid(sched, GridPolicy::LogSnrUniform, n_ref, 1.0, 1e-3);
    const Vec ref = run(cfg, oracle_ref, grid_ref, sched, xT).x0;
    for (std::size_t j = 0; j < Ns.size(); ++j) {
      DenoiserOracle oracle(dist, sched, cfg.param);
      const auto grid = make_grid(sched, GridPolicy::LogSnrUniform, Ns[j], 1.0, 1e-3);
      const Vec x0 = run(cfg, oracle, grid, sched, xT).x0;
      mean_err[j] += norm2(sub(x0, ref)) / trials;
    }
  }
  // least squares slope of log err vs log N
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t j = 0; j < Ns.size(); ++j) {
    const double lx = std::log(Ns[j]), ly = std::log(mean_err[j]);
    sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
  }
  const double n = static_cast<double>(Ns.size());
  const double fit = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  std::printf("  errs: %.3e %.3e %.3e\n", mean_err[0], mean_err[1], mean_err[2]);
  return -fit;
}

int main() {
  SolverConfig ddim;
  ddim.family = SolverFamily::Ddim;
  std::printf("ddim slope = %.3f\n", slope_for(ddim));

  SolverConfig dpmpp;
  dpmpp.family = SolverFamily::Multistep;
  dpmpp.variant = MultistepVariant::Dpmpp2m;
  std::printf("dpmpp_2m slope = %.3f\n", slope_for(dpmpp));

  SolverConfig plain = dpmpp;
  plain.variant = MultistepVariant::PlainKappa;
  std::printf("plain_kappa slope = %.3f\n", slope_for(plain));

  SolverConfig rem = dpmpp;
  rem.variant = MultistepVariant::ReMulti;
  rem.zeta_policy = ZetaPolicyKind::RemarkVar;
  std::printf("re_multi remarkvar slope = %.3f\n", slope_for(rem));

  SolverConfig remf = rem;
  remf.zeta_policy = ZetaPolicyKind::Fixed;
  remf.fixed_zeta = 1.0;
  remf.r_strategy = {RKind::NormVar};
  std::printf("re_multi fixed(1) normvar slope = %.3f\n", slope_for(remf));

  SolverConfig heun;
  heun.family = SolverFamily::HeunEdm;
  std::printf("heun slope = %.3f\n", slope_for(heun));

  for (bool literal : {false, true}) {
    for (bool reuse : {true, false}) {
      SolverConfig evo;
      evo.family = SolverFamily::EvoDiff;
      evo.reuse_probe = reuse;
      evo.literal_zeta_division = literal;
      std::printf("evodiff literal=%d reuse=%d slope = %.3f\n", literal, reuse, slope_for(evo));
    }
  }
  return 0;
}
