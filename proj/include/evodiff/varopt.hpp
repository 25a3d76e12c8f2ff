#pragma once

#include "evodiff/vec.hpp"

namespace evodiff {

// Inputs of the zeta least-squares problem min_z || P~ - sigma_h * z * D ||^2
// with P~ = P - sigma_h * m_t.
struct ZetaInputs {
  Vec P;        // P(x_{t_{i-1}})
  Vec D;        // difference of model values across the step
  Vec m_t;      // model value at the current time
  double sigma_h = 1.0;  // sigma_{t_i} * h_{t_i}, nonzero
};

// Inputs of the eta least-squares problem min_e || (1-e) B1 + e B2 ||^2.
struct EtaInputs {
  Vec b_forward;   // B1, forward-difference gradient
  Vec b_backward;  // B2, backward-difference gradient
};

// PaperLiteral keeps the printed sign conventions of the closed forms;
// AnalyticMin is the argmin of the stated quadratic. For zeta the two differ
// only in sign; for eta they satisfy analytic_min + paper_literal = 1.
enum class OptFormula { PaperLiteral, AnalyticMin };

// Throws DegenerateDirection when ||D|| < 1e-12.
double zeta_star(const ZetaInputs& in, OptFormula formula);

// Throws DegenerateDirection when ||B1 - B2|| < 1e-12.
double eta_star(const EtaInputs& in, OptFormula formula);

enum class ZetaMap { Plain, SigmaScaled };

// zeta = Sigmoid(-scale * (|zeta_raw| - mu)); Plain uses scale = 1,
// SigmaScaled uses scale = sigma_{t_i} / sigma_{t_{i+1}}. Range (0, 1).
double map_zeta(double zeta_raw, double mu, ZetaMap variant = ZetaMap::Plain,
                double sigma_ratio = 1.0);

// eta = Sigmoid(|eta_raw|). Range (0.5, 1).
double map_eta(double eta_raw);

struct GridSearchResult {
  double argmin = 0.0;
  double objective = 0.0;
  bool flat = false;  // objective did not vary over the grid (degenerate direction)
};

// Brute-force argmin over [lo, hi] with the given step; test oracles for the
// closed forms above.
GridSearchResult grid_search_min(const ZetaInputs& in, double lo, double hi, double step);
GridSearchResult grid_search_min(const EtaInputs& in, double lo, double hi, double step);

double sigmoid(double x);

}  // namespace evodiff
