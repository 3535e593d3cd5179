#pragma once

#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "persist/integrate.hpp"
#include "persist/json_io.hpp"
#include "persist/model.hpp"
#include "persist/spectral.hpp"

namespace persist {

// ---------------------------------------------------------------------------
// Deterministic sampling of the working compact K
// ---------------------------------------------------------------------------

// All reports stamp these parameters; no RNG state enters a certificate.
struct SamplingConfig {
  bool corners = true;   // all 2^n box corners
  bool center = true;
  int halton_count = 64;
  int halton_skip = 1;   // first Halton index used (stamped as the "seed")
};

double halton(long long index, int base);

// Corners + center + Halton interior points of K, exact duplicates removed.
std::vector<Vec> sample_working_compact(const DomainSpec& dom, const SamplingConfig& s);

// Unit directions: the 2n axis directions plus `extra` normalized Halton
// offsets (deduplicated, so n = 1 yields exactly {-1, +1}).
std::vector<Vec> sphere_directions(int n, int extra, int halton_skip);

// ---------------------------------------------------------------------------
// Configuration shared by the certification pipelines
// ---------------------------------------------------------------------------

struct CertifyConfig {
  SamplingConfig sampling;
  IntegratorConfig integrator;
  NewtonOptions newton;
  double hyperbolicity_tol = 1e-9;
  int eps_nodes = 21;                  // symmetric grid over [-eps0, eps0], contains 0
  double horizon = 200.0;              // max first-entry horizon for settle checks
  double remain_factor = 5.0;          // entry-and-remain verified to max(factor*t, remain_min)
  double remain_min = 10.0;
  double eps_hat_resolution_factor = 1e-3;  // bisection resolution = factor * eps0
  double t_burn = 30.0;                // attractor burn-in
  int shells = 8;
  double basin_r_max = std::numeric_limits<double>::infinity();
  int shell_extra_points = 16;
  double basin_horizon = 60.0;
  double convergence_radius_factor = 1e-4;  // convergence ball = factor * r_max
  // r0 candidates at or below this fraction of the eps = 0 basin cap are
  // numerical noise (Newton/integration scale) and are not accepted as
  // positive, mirroring the hyperbolicity refusal band.
  double r0_floor_factor = 1e-6;
  double final_sweep_horizon = 60.0;
  double final_sweep_tol = 1e-6;
  int threads = 1;
  Vec equilibrium_guess;               // empty: working-compact center
};

// ---------------------------------------------------------------------------
// Absorbing set and attractor estimation
// ---------------------------------------------------------------------------

struct EntryRecord {
  Vec x0;
  std::optional<double> entry_time;  // unset: never settled before the horizon
  double verified_until = 0.0;       // containment checked on [entry, this]
  TerminalStatus status = TerminalStatus::ReachedTmax;
};

struct AbsorbingEstimate {
  double eps = 0.0;
  Ball k0;
  std::vector<EntryRecord> entries;
  double t0 = 0.0;            // max entry-and-remain time over the K samples
  bool all_absorbed = false;
};

AbsorbingEstimate estimate_absorbing(const SystemDef& sys, double eps, const Ball& k0,
                                     double horizon, const CertifyConfig& cfg);

struct AttractorEstimate {
  double eps = 0.0;
  double t_burn = 0.0;
  std::vector<Vec> cloud;             // endpoints after burn-in
  std::vector<std::string> failures;  // starts that failed to produce one
  double diameter = 0.0;              // max pairwise distance in the cloud
  Vec centroid;
  bool complete = false;              // no failures
};

AttractorEstimate estimate_attractor(const SystemDef& sys, double eps, double t_burn,
                                     const CertifyConfig& cfg);

// True iff every cloud point lies strictly inside the ball; an incomplete
// cloud never passes.
bool check_attractor_containment(const AttractorEstimate& attr, const Vec& center, double radius);

// ---------------------------------------------------------------------------
// Transient horizon and perturbation tolerance
// ---------------------------------------------------------------------------

// Max over the K grid of the entry-and-remain time into the closed ball of
// radius eta/2 around x_star for the unperturbed flow. Throws Refusal when
// a start fails to settle before the horizon.
double estimate_T_eta(const SystemDef& sys, const Vec& x_star, double eta, double horizon,
                      const CertifyConfig& cfg);

// Max over starts of the endpoint deviation d(x_eps(x0,T), x_0(x0,T)).
// `baseline` holds the unperturbed endpoints at T for the same starts.
double max_deviation_at(const SystemDef& sys, double eps, double T,
                        const std::vector<Vec>& starts, const std::vector<Vec>& baseline,
                        const IntegratorConfig& icfg, int threads);

struct EpsHatResult {
  double eps_hat = 0.0;
  double resolution = 0.0;
  std::vector<std::pair<double, double>> probes;  // (eps, max deviation over +/-eps)
};

// Largest eps (to the bisection resolution) such that the deviation at
// T_eta stays below eta/2 at +eps and -eps across the K grid; returns eps0
// when the full a-priori range passes. Throws Refusal when even the
// smallest probed eps fails.
EpsHatResult estimate_eps_hat(const SystemDef& sys, const Vec& x_star, double eta, double T_eta,
                              const CertifyConfig& cfg);

// ---------------------------------------------------------------------------
// Basin radius proxy
// ---------------------------------------------------------------------------

struct BasinEstimate {
  double r_eps = 0.0;   // largest all-converging shell radius (0 if none)
  double r_max = 0.0;   // cap actually used
  std::vector<std::pair<double, bool>> shells_tested;  // (radius, all converged)
  int points_per_shell = 0;
};

// Samples spheres of shrinking radius around the continued equilibrium and
// integrates each point to the basin horizon; a shell passes when every
// point converges into the tiny ball around x_star_eps. The radius cap is
// min(cfg.basin_r_max, distance from x_star_eps to the working-box
// boundary).
BasinEstimate estimate_basin_radius(const SystemDef& sys, double eps, const Vec& x_star_eps,
                                    const CertifyConfig& cfg);

// ---------------------------------------------------------------------------
// The persistence certificate (Theorem-2 pipeline)
// ---------------------------------------------------------------------------

struct BasinTableRow {
  double eps = 0.0;
  double r_eps = 0.0;
  double r_max = 0.0;
  double d_star = 0.0;  // d(x*(eps), x*)
};

struct AttractorRow {
  double eps = 0.0;
  double diameter = 0.0;
  Vec centroid;
  double max_dist_to_x_star = 0.0;
  bool contained = false;
  bool complete = false;
};

struct FinalSweepRow {
  double eps = 0.0;
  double max_endpoint_error = 0.0;
  bool passed = false;
};

struct PersistenceCertificate {
  std::string system;
  int n = 0;
  double eps0 = 0.0;
  double eta = 0.0;
  bool certified = false;
  std::string refusal_step;    // set when refused
  std::string refusal_reason;

  // evidence, populated step by step until refusal
  Vec x_star;
  double newton_residual = 0.0;
  SpectralSummary spectral0;
  std::optional<double> T_eta;
  std::optional<double> eps_hat;
  std::vector<std::pair<double, double>> eps_hat_probes;
  std::optional<EquilibriumBranch> branch;
  std::optional<double> jacobian_growth;
  std::vector<BasinTableRow> basin_table;
  std::optional<double> r0;
  std::optional<double> eps1, eps2, eps3, eps4, eps_star;
  double attractor_probe_limit = 0.0;
  std::vector<AttractorRow> attractor_rows;
  std::vector<FinalSweepRow> final_sweep;
  double final_sweep_max_error = 0.0;
  int start_count = 0;

  CertifyConfig config;
};

// Runs the certification pipeline in order: Hurwitz check at eps = 0,
// T_eta, eps_hat, branch continuation (eps1/eps2), basin radii (r0, eps3),
// attractor containment (eps4), eps_star assembly and the final
// convergence sweep. Hypothesis failures produce a refused certificate,
// never an exception.
PersistenceCertificate certify_persistence(const SystemDef& sys, double eta,
                                           const CertifyConfig& cfg);

// Versioned report document (certificate_version 1). Refused certificates
// carry the refusal and the sampling evidence but none of the bound fields.
Json certificate_to_json(const PersistenceCertificate& cert);

// ---------------------------------------------------------------------------
// Uniform-in-time closeness
// ---------------------------------------------------------------------------

struct ClosenessConfig {
  SamplingConfig sampling;
  IntegratorConfig integrator;
  NewtonOptions newton;
  double hyperbolicity_tol = 1e-9;
  double theta_horizon = 200.0;
  double remain_factor = 5.0;
  double remain_min = 10.0;
  int time_grid = 2000;      // shared dense grid on [0, T]
  int tail_grid = 2000;      // grid on [T, tail_factor*T]
  double tail_factor = 5.0;
  int threads = 1;
  Vec equilibrium_guess;
};

struct ClosenessEpsInfo {
  double eps = 0.0;
  Vec x_star_eps;
  double d_star = 0.0;       // d(x*(eps), x*)
  bool ok = false;           // equilibrium found and d_star <= eta/3
  std::string note;
};

struct ClosenessPair {
  double eps = 0.0;
  Vec x0;
  double sup_d = 0.0;             // measured sup over [0, tail_factor*T]
  double sup_tail_bound = 0.0;    // triangle bound max over the tail grid
  double max_dominance_violation = 0.0;  // measured - bound on the tail (<= rounding)
  bool passed = false;
};

struct ClosenessReport {
  std::string system;
  double eta = 0.0;
  double theta1 = 0.0;
  double theta2 = 0.0;
  double T = 0.0;            // max(theta1, theta2)
  std::vector<ClosenessEpsInfo> eps_info;
  std::vector<ClosenessPair> pairs;
  bool passed = false;
  int start_count = 0;
};

// theta1: settle time of the unperturbed flow into the eta/3 ball around
// x*; theta2: same for each tested eps around x*(eps). On [0, T] the
// deviation is measured on a shared dense grid; on [T, tail_factor*T] it
// is measured and checked against the three-term triangle bound.
ClosenessReport check_uniform_closeness(const SystemDef& sys, double eta,
                                        const std::vector<double>& eps_list,
                                        const ClosenessConfig& cfg);

Json closeness_to_json(const ClosenessReport& report);

// ---------------------------------------------------------------------------
// Positive-cone persistence
// ---------------------------------------------------------------------------

struct PositivePersistenceConfig {
  SamplingConfig sampling;
  IntegratorConfig integrator;
  NewtonOptions newton;
  double hyperbolicity_tol = 1e-9;
  int eps_nodes = 21;
  double floor_horizon = 30.0;   // late window is [floor_horizon, 2*floor_horizon]
  double persistence_floor = 0.0;  // 0: half the smallest equilibrium component
  int threads = 1;
  Vec equilibrium_guess;
};

struct PositiveEpsRow {
  double eps = 0.0;
  Vec x_star;
  bool equilibrium_positive = false;
  bool trajectories_positive = false;
  double window_floor = 0.0;  // min component over [floor_horizon, 2*floor_horizon]
  bool passed = false;
};

struct PersistenceReport {
  std::string system;
  double eps_range = 0.0;
  double delta = 0.0;          // persistence floor actually used
  double floor_horizon = 0.0;
  std::vector<PositiveEpsRow> rows;
  double min_component_floor = 0.0;  // min window floor over the grid
  bool branch_complete = false;
  std::string note;
  bool passed = false;
  int start_count = 0;
};

PersistenceReport check_positive_persistence(const SystemDef& sys, double eps_range,
                                             const PositivePersistenceConfig& cfg);

Json persistence_to_json(const PersistenceReport& report);

Json absorbing_to_json(const AbsorbingEstimate& est);
Json attractor_to_json(const AttractorEstimate& est);

}  // namespace persist
