#pragma once

#include <complex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "persist/linalg.hpp"
#include "persist/model.hpp"

namespace persist {

// Linearization summary at an equilibrium. `index` counts eigenvalues with
// real part below -hyperbolicity_tol; eigenvalues within the tolerance band
// of the imaginary axis make the matrix non-hyperbolic, and such spectra
// are refused rather than classified.
struct SpectralSummary {
  std::vector<std::complex<double>> eigenvalues;  // sorted by (re, im)
  double spectral_abscissa = 0.0;
  int index = 0;
  bool hyperbolic = false;
  bool hurwitz = false;
  double hyperbolicity_tol = 0.0;
};

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 50;
  double cond_limit = 1e14;
  int max_halvings = 30;
};

struct NewtonResult {
  Vec x;
  double residual = 0.0;
  int iterations = 0;
};

// Damped Newton for f(x, eps) = 0 with a halving backtracking line search
// on ||f||^2. Throws SpectralError on a singular/ill-conditioned Jacobian
// (condition estimate above cond_limit), when the iterate cannot stay in
// the domain box, and when max_iter is exhausted.
NewtonResult newton_equilibrium(const SystemDef& sys, double eps, const Vec& guess,
                                const NewtonOptions& opts = {});

// All eigenvalues with multiplicity, sorted by (real, imaginary). Closed
// form for n <= 2; Hessenberg reduction followed by Francis double-shift QR
// otherwise. Throws SpectralError if the QR iteration has not deflated
// everything after 100*n sweeps.
std::vector<std::complex<double>> eigenvalues(const Matrix& m);

SpectralSummary classify(const Matrix& m, double hyperbolicity_tol = 1e-9);

struct BranchNode {
  double eps = 0.0;
  Vec x_star;
  Matrix jac;
  SpectralSummary spectral;
  double newton_residual = 0.0;
};

// Continued equilibrium path over a symmetric uniform eps grid containing
// 0. A direction is truncated at the first Newton failure or loss of
// hyperbolicity/index, and the per-direction limits record how far each
// certification bound extends (grid-resolution lower bounds).
struct EquilibriumBranch {
  std::vector<BranchNode> nodes;  // ascending eps; always contains eps = 0
  double grid_spacing = 0.0;
  int index0 = 0;
  double limit_newton_pos = 0.0, limit_newton_neg = 0.0;  // absolute eps values
  double limit_index_pos = 0.0, limit_index_neg = 0.0;
  std::string stop_reason_pos, stop_reason_neg;  // empty when the full range held

  // branch-existence bound (largest grid eps with Newton convergence on
  // both sides)
  double eps1() const { return std::min(limit_newton_pos, limit_newton_neg); }
  // index-preservation bound
  double eps2() const { return std::min(limit_index_pos, limit_index_neg); }

  const BranchNode& at_zero() const;
  const BranchNode* find(double eps) const;
};

struct ContinuationConfig {
  int n_nodes = 21;  // odd, >= 3
  NewtonOptions newton;
  double hyperbolicity_tol = 1e-9;
};

// Marches outward from eps = 0 with a secant predictor and Newton
// corrector. Throws Refusal when there is no Hurwitz equilibrium at
// eps = 0 (hypothesis violation).
EquilibriumBranch continue_equilibrium(const SystemDef& sys, double eps_range,
                                       const ContinuationConfig& cfg, const Vec& guess0);

// Empirical constant for the first-order Jacobian expansion along the
// branch: max over nonzero grid nodes of ||J_eps - J_0||_F / |eps|.
double jacobian_growth_bound(const EquilibriumBranch& branch);

// CSV: eps, x1*, ..., xn*, spectral_abscissa, index, residual
void write_branch_csv(std::ostream& out, const EquilibriumBranch& branch);

}  // namespace persist
