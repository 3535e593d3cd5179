#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "persist/linalg.hpp"
#include "persist/model.hpp"

namespace persist {

struct IntegratorConfig {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  double initial_step = 0.0;    // 0 = automatic selection
  double max_step = 0.0;        // 0 = unbounded
  long long max_steps = 10'000'000;
  double blow_up_norm = 1e8;
  double fixed_step = 0.0;      // > 0 disables adaptivity (order studies)
};

enum class TerminalStatus { ReachedTmax, EventHit, BlowUp, LeftDomain };

const char* to_string(TerminalStatus s);

// An integrated solution of x' = f(x, eps). Samples sit at the accepted
// steps; `derivs` holds f at each sample so dense output needs no extra
// field evaluations.
struct Trajectory {
  std::string system;
  double eps = 0.0;
  Vec x0;
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> derivs;
  TerminalStatus status = TerminalStatus::ReachedTmax;
  double event_time = 0.0;  // meaningful when status == EventHit

  // Cubic Hermite interpolation between the bracketing samples (4th-order
  // accurate against the 5th-order steps).
  Vec at(double t) const;
  double t_last() const { return times.back(); }
  const Vec& x_last() const { return states.back(); }
};

// Embedded Dormand-Prince 5(4) pair with the mixed error norm
// sqrt(mean((e_i / (abs_tol + rel_tol*|x_i|))^2)) <= 1 per accepted step.
// Throws IntegrationError when x0 violates the domain, on step-count
// exhaustion, and on step-size underflow; blow-up and domain exit are
// reported through Trajectory::status, not exceptions.
Trajectory integrate(const SystemDef& sys, double eps, const Vec& x0, double t_end,
                     const IntegratorConfig& cfg = {});

struct Ball {
  Vec center;
  double radius = 0.0;
  bool contains(std::span<const double> x) const;  // closed ball
};

// Earliest time the state enters the closed ball (or satisfies the
// predicate), localized on dense output by bisection to 1e-6 * t_max.
// Returns nullopt when the event never fires before t_max (including
// integrations cut short by blow-up or domain exit).
std::optional<double> integrate_until(const SystemDef& sys, double eps, const Vec& x0,
                                      const Ball& target, double t_max,
                                      const IntegratorConfig& cfg = {});
std::optional<double> integrate_until(const SystemDef& sys, double eps, const Vec& x0,
                                      const std::function<bool(std::span<const double>)>& event,
                                      double t_max, const IntegratorConfig& cfg = {});

// Entry-and-remain: the earliest localized time T such that the trajectory
// is inside the ball on all of [T, t_max]. A later exit discards the
// earlier candidate entry.
struct EntryResult {
  std::optional<double> entry_time;
  double verified_until = 0.0;
  TerminalStatus status = TerminalStatus::ReachedTmax;
};
EntryResult entry_and_remain(const SystemDef& sys, double eps, const Vec& x0, const Ball& target,
                             double t_max, const IntegratorConfig& cfg = {});

struct EnsembleEntry {
  Vec x0;
  Vec endpoint;                 // empty when error is set
  TerminalStatus status = TerminalStatus::ReachedTmax;
  std::string error;            // per-start failure, batch keeps going
};

// Maps integrate over the starts; results are elementwise identical to the
// sequential loop whatever the worker count.
std::vector<EnsembleEntry> ensemble_endpoints(const SystemDef& sys, double eps,
                                              const std::vector<Vec>& starts, double t_end,
                                              const IntegratorConfig& cfg = {}, int threads = 1);

// CSV with header t,x1,...,xn and 17-significant-digit values.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace persist
