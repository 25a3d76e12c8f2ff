#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "evodiff/errors.hpp"
#include "evodiff/rng.hpp"
#include "evodiff/varopt.hpp"

using namespace evodiff;

namespace {

ZetaInputs random_zeta_instance(RandomStream& rng, std::size_t d = 8) {
  ZetaInputs in;
  in.P = rng.normal_vec(d);
  in.D = rng.normal_vec(d);
  in.m_t = rng.normal_vec(d);
  in.sigma_h = 0.2 + std::fabs(rng.normal());
  if (rng.uniform() < 0.5) in.sigma_h = -in.sigma_h;
  return in;
}

EtaInputs random_eta_instance(RandomStream& rng, std::size_t d = 8) {
  return {rng.normal_vec(d), rng.normal_vec(d)};
}

}  // namespace

TEST_CASE("zeta_star sign conventions and trivial cases") {
  // P~ orthogonal to D -> zero under both formulas.
  ZetaInputs ortho{{0.0, 1.0}, {1.0, 0.0}, {0.0, 0.0}, 0.7};
  CHECK(zeta_star(ortho, OptFormula::AnalyticMin) == doctest::Approx(0.0));
  CHECK(zeta_star(ortho, OptFormula::PaperLiteral) == doctest::Approx(0.0));

  // P~ = sigma_h * D -> AnalyticMin 1, PaperLiteral -1.
  ZetaInputs colinear{{0.7 * 2.0, 0.7 * -1.0}, {2.0, -1.0}, {0.0, 0.0}, 0.7};
  CHECK(zeta_star(colinear, OptFormula::AnalyticMin) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(zeta_star(colinear, OptFormula::PaperLiteral) == doctest::Approx(-1.0).epsilon(1e-12));

  // |zeta*| agrees exactly between the two formulas.
  RandomStream rng(17, StreamTag::Instances);
  for (int i = 0; i < 200; ++i) {
    const ZetaInputs in = random_zeta_instance(rng);
    CHECK(std::fabs(zeta_star(in, OptFormula::AnalyticMin)) ==
          std::fabs(zeta_star(in, OptFormula::PaperLiteral)));
  }

  ZetaInputs degenerate{{1.0}, {0.0}, {0.0}, 1.0};
  CHECK_THROWS_AS(zeta_star(degenerate, OptFormula::AnalyticMin), DegenerateDirection);
}

TEST_CASE("zeta_star AnalyticMin matches the grid-search argmin") {
  RandomStream rng(23, StreamTag::Instances);
  for (int i = 0; i < 50; ++i) {
    const ZetaInputs in = random_zeta_instance(rng);
    const double closed = zeta_star(in, OptFormula::AnalyticMin);
    if (std::fabs(closed) > 4.5) continue;  // outside the scan range
    const GridSearchResult gs = grid_search_min(in, -5.0, 5.0, 1e-4);
    CHECK(std::fabs(closed - gs.argmin) < 2e-4);
  }
}

TEST_CASE("eta_star endpoint cases and identities") {
  // B1 = 0: objective ||e * B2||^2 is minimized at 0; the printed form gives 1.
  EtaInputs b1_zero{{0.0, 0.0}, {1.0, 2.0}};
  CHECK(eta_star(b1_zero, OptFormula::AnalyticMin) == doctest::Approx(0.0));
  CHECK(eta_star(b1_zero, OptFormula::PaperLiteral) == doctest::Approx(1.0));

  // B2 = 0: objective ||(1-e) B1||^2 is minimized at 1; the printed form gives 0.
  EtaInputs b2_zero{{1.0, 2.0}, {0.0, 0.0}};
  CHECK(eta_star(b2_zero, OptFormula::AnalyticMin) == doctest::Approx(1.0));
  CHECK(eta_star(b2_zero, OptFormula::PaperLiteral) == doctest::Approx(0.0));

  // The two routes always sum to 1 (PaperLiteral solves the objective with
  // the roles of the two gradients swapped).
  RandomStream rng(31, StreamTag::Instances);
  for (int i = 0; i < 200; ++i) {
    const EtaInputs in = random_eta_instance(rng);
    const double am = eta_star(in, OptFormula::AnalyticMin);
    const double pl = eta_star(in, OptFormula::PaperLiteral);
    CHECK(am + pl == doctest::Approx(1.0).epsilon(1e-12));
  }

  EtaInputs degenerate{{1.0, 2.0}, {1.0, 2.0}};
  CHECK_THROWS_AS(eta_star(degenerate, OptFormula::AnalyticMin), DegenerateDirection);
}

TEST_CASE("eta_star AnalyticMin matches the grid-search argmin") {
  RandomStream rng(37, StreamTag::Instances);
  for (int i = 0; i < 50; ++i) {
    const EtaInputs in = random_eta_instance(rng);
    const double closed = eta_star(in, OptFormula::AnalyticMin);
    if (std::fabs(closed) > 4.5) continue;
    const GridSearchResult gs = grid_search_min(in, -5.0, 5.0, 1e-4);
    CHECK(std::fabs(closed - gs.argmin) < 2e-4);
  }
}

TEST_CASE("map_zeta values and monotonicity") {
  CHECK(map_zeta(0.5, 0.5) == doctest::Approx(0.5));
  CHECK(map_zeta(0.0, 0.5) == doctest::Approx(0.6224593312018546).epsilon(1e-12));
  CHECK(map_zeta(1e9, 0.5) == doctest::Approx(0.0));
  // decreasing in |raw|
  double prev = 1.0;
  for (double raw = 0.0; raw < 5.0; raw += 0.25) {
    const double z = map_zeta(raw, 0.5);
    CHECK(z < prev);
    CHECK(z > 0.0);
    CHECK(z < 1.0);
    prev = z;
  }
  // sigma-scaled variant steepens / flattens the argument
  CHECK(map_zeta(1.5, 0.5, ZetaMap::SigmaScaled, 2.0) ==
        doctest::Approx(sigmoid(-2.0)).epsilon(1e-12));
}

TEST_CASE("map_eta values and range") {
  CHECK(map_eta(0.0) == doctest::Approx(0.5));
  CHECK(map_eta(1.0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(map_eta(-1.0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(map_eta(1e9) == doctest::Approx(1.0));
  double prev = 0.0;
  for (double raw = 0.0; raw < 5.0; raw += 0.25) {
    const double e = map_eta(raw);
    CHECK(e >= prev);
    CHECK(e >= 0.5);
    CHECK(e < 1.0);
    prev = e;
  }
}

TEST_CASE("grid_search_min finds a constructed vertex") {
  // Objective ||P~ - sigma_h z D||^2 with P~ = 0.3 * sigma_h * D: vertex at 0.3.
  ZetaInputs in;
  in.D = {1.0, -2.0, 0.5};
  in.sigma_h = 1.3;
  in.m_t = {0.0, 0.0, 0.0};
  in.P = scale(0.3 * in.sigma_h, in.D);
  const GridSearchResult gs = grid_search_min(in, -5.0, 5.0, 1e-4);
  CHECK(std::fabs(gs.argmin - 0.3) <= 1e-4);
  CHECK_FALSE(gs.flat);
}

TEST_CASE("grid_search_min flags a flat objective and returns the lower bound") {
  ZetaInputs in{{0.5, 0.5}, {0.0, 0.0}, {0.0, 0.0}, 1.0};
  const GridSearchResult gs = grid_search_min(in, -5.0, 5.0, 1e-2);
  CHECK(gs.flat);
  CHECK(gs.argmin == -5.0);
}

TEST_CASE("grid_search agrees with closed forms over random instances") {
  RandomStream rng(41, StreamTag::Instances);
  int checked = 0;
  for (int i = 0; i < 100; ++i) {
    const EtaInputs in = random_eta_instance(rng, 4);
    const double closed = eta_star(in, OptFormula::AnalyticMin);
    if (std::fabs(closed) > 4.5) continue;
    const GridSearchResult gs = grid_search_min(in, -5.0, 5.0, 1e-3);
    CHECK(std::fabs(closed - gs.argmin) < 2e-3);
    ++checked;
  }
  CHECK(checked > 50);
}
