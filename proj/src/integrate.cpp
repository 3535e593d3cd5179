#include "persist/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "persist/error.hpp"
#include "persist/json_io.hpp"
#include "persist/parallel.hpp"

namespace persist {

const char* to_string(TerminalStatus s) {
  switch (s) {
    case TerminalStatus::ReachedTmax: return "reached_tmax";
    case TerminalStatus::EventHit: return "event_hit";
    case TerminalStatus::BlowUp: return "blow_up";
    case TerminalStatus::LeftDomain: return "left_domain";
  }
  return "?";
}

bool Ball::contains(std::span<const double> x) const {
  return dist2(x, center) <= radius;
}

Vec Trajectory::at(double t) const {
  const double t0 = times.front();
  const double tN = times.back();
  const double slack = 1e-9 * std::max(1.0, std::abs(tN));
  if (t < t0 - slack || t > tN + slack)
    throw IntegrationError("dense output query outside the integrated range");
  t = std::clamp(t, t0, tN);
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t hi = std::min<std::size_t>(
      times.size() - 1, static_cast<std::size_t>(std::max<std::ptrdiff_t>(1, it - times.begin())));
  const std::size_t lo = hi - 1;
  if (t == times[lo]) return states[lo];
  if (t == times[hi]) return states[hi];

  const double h = times[hi] - times[lo];
  const double th = (t - times[lo]) / h;
  const Vec& y0 = states[lo];
  const Vec& y1 = states[hi];
  const Vec& f0 = derivs[lo];
  const Vec& f1 = derivs[hi];
  Vec out(y0.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double dy = y1[i] - y0[i];
    out[i] = (1.0 - th) * y0[i] + th * y1[i] +
             th * (th - 1.0) * ((1.0 - 2.0 * th) * dy + (th - 1.0) * h * f0[i] + th * h * f1[i]);
  }
  return out;
}

namespace {

// Dormand-Prince 5(4) coefficients.
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// difference between the 5th- and 4th-order weights
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

double rms(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

using FieldFn = std::function<Vec(const Vec&)>;

double select_initial_step(const Vec& y0, const Vec& f0, double t_end, const FieldFn& field,
                           const IntegratorConfig& cfg) {
  const std::size_t n = y0.size();
  Vec sc(n);
  for (std::size_t i = 0; i < n; ++i) sc[i] = cfg.abs_tol + cfg.rel_tol * std::abs(y0[i]);
  Vec tmp(n);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y0[i] / sc[i];
  const double d0 = rms(tmp);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = f0[i] / sc[i];
  const double d1 = rms(tmp);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, t_end);

  double h1 = h0;
  try {
    Vec y1(n);
    for (std::size_t i = 0; i < n; ++i) y1[i] = y0[i] + h0 * f0[i];
    const Vec f1 = field(y1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = (f1[i] - f0[i]) / sc[i];
    const double d2 = rms(tmp) / h0;
    const double dm = std::max(d1, d2);
    h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
  } catch (const Error&) {
    // probe left the field's domain; the controller will sort it out
  }
  double h = std::min({100.0 * h0, h1, t_end});
  if (cfg.max_step > 0) h = std::min(h, cfg.max_step);
  return h;
}

using StepObserver = std::function<std::optional<double>(const Trajectory&)>;

Trajectory integrate_core(const SystemDef& sys, double eps, const Vec& x0, double t_end,
                          const IntegratorConfig& cfg, const StepObserver* observer) {
  if (!(t_end > 0.0)) throw IntegrationError("t_end must be positive");
  if (static_cast<int>(x0.size()) != sys.dim())
    throw IntegrationError("start has wrong dimension");
  if (!sys.domain().contains(x0, sys.positive_cone()))
    throw IntegrationError("start outside the model domain");

  const FieldFn field = [&](const Vec& y) -> Vec {
    try {
      return sys.eval_field(y, eps);
    } catch (const EvalError& e) {
      throw IntegrationError(std::string("field evaluation failed: ") + e.what());
    }
  };

  const std::size_t n = x0.size();
  Trajectory traj;
  traj.system = sys.name();
  traj.eps = eps;
  traj.x0 = x0;

  double t = 0.0;
  Vec y = x0;
  Vec k1 = field(y);
  traj.times.push_back(0.0);
  traj.states.push_back(y);
  traj.derivs.push_back(k1);

  const bool fixed = cfg.fixed_step > 0.0;
  double h;
  if (fixed)
    h = std::min(cfg.fixed_step, t_end);
  else if (cfg.initial_step > 0.0)
    h = std::min(cfg.initial_step, t_end);
  else
    h = select_initial_step(y, k1, t_end, field, cfg);

  Vec k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), yt(n), y5(n), sc(n);
  long long attempts = 0;
  bool last_rejected = false;

  while (t < t_end) {
    if (++attempts > cfg.max_steps) throw IntegrationError("max_steps exceeded");
    if (fixed) {
      h = std::min(cfg.fixed_step, t_end - t);
    } else {
      if (h < 1e-14 * std::max(1.0, std::abs(t)))
        throw IntegrationError("step size underflow at t = " + format_double(t));
      h = std::min(h, t_end - t);
    }
    const bool lands_on_end = (t + h >= t_end) || (h == t_end - t);

    for (std::size_t i = 0; i < n; ++i) yt[i] = y[i] + h * a21 * k1[i];
    k2 = field(yt);
    for (std::size_t i = 0; i < n; ++i) yt[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    k3 = field(yt);
    for (std::size_t i = 0; i < n; ++i)
      yt[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    k4 = field(yt);
    for (std::size_t i = 0; i < n; ++i)
      yt[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    k5 = field(yt);
    for (std::size_t i = 0; i < n; ++i)
      yt[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    k6 = field(yt);
    for (std::size_t i = 0; i < n; ++i)
      y5[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    k7 = field(y5);

    double err = 0.0;
    if (!fixed) {
      for (std::size_t i = 0; i < n; ++i) {
        const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                              e7 * k7[i]);
        const double sci = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(y[i]), std::abs(y5[i]));
        err += (e / sci) * (e / sci);
      }
      err = std::sqrt(err / static_cast<double>(n));
      if (err > 1.0) {
        h *= std::clamp(0.9 * std::pow(err, -0.2), 0.2, 1.0);
        last_rejected = true;
        continue;
      }
    }

    t = lands_on_end ? t_end : t + h;
    y.swap(y5);
    k1.swap(k7);
    traj.times.push_back(t);
    traj.states.push_back(y);
    traj.derivs.push_back(k1);

    if (norm2(y) > cfg.blow_up_norm) {
      traj.status = TerminalStatus::BlowUp;
      return traj;
    }
    if (!sys.domain().contains(y, sys.positive_cone())) {
      traj.status = TerminalStatus::LeftDomain;
      return traj;
    }
    if (observer) {
      if (auto hit = (*observer)(traj)) {
        traj.status = TerminalStatus::EventHit;
        traj.event_time = *hit;
        return traj;
      }
    }

    if (!fixed) {
      const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2,
                                                       last_rejected ? 1.0 : 5.0);
      h *= fac;
      if (cfg.max_step > 0) h = std::min(h, cfg.max_step);
      last_rejected = false;
    }
  }
  traj.status = TerminalStatus::ReachedTmax;
  return traj;
}

// Earliest predicate-true time inside the last accepted step, or nullopt.
// The step is scanned on a fixed subgrid; the first sign change is then
// localized by bisection on the dense output.
constexpr int kEventSubsamples = 16;

std::optional<double> scan_last_step(const Trajectory& traj,
                                     const std::function<bool(std::span<const double>)>& pred,
                                     double time_tol) {
  const std::size_t m = traj.times.size();
  const double t0 = traj.times[m - 2];
  const double t1 = traj.times[m - 1];
  double prev_t = t0;
  for (int j = 1; j <= kEventSubsamples; ++j) {
    const double tj = j == kEventSubsamples
                          ? t1
                          : t0 + (t1 - t0) * static_cast<double>(j) / kEventSubsamples;
    const Vec xj = traj.at(tj);
    if (pred(xj)) {
      double lo = prev_t, hi = tj;
      while (hi - lo > time_tol) {
        const double mid = 0.5 * (lo + hi);
        if (pred(traj.at(mid)))
          hi = mid;
        else
          lo = mid;
      }
      return hi;
    }
    prev_t = tj;
  }
  return std::nullopt;
}

}  // namespace

Trajectory integrate(const SystemDef& sys, double eps, const Vec& x0, double t_end,
                     const IntegratorConfig& cfg) {
  return integrate_core(sys, eps, x0, t_end, cfg, nullptr);
}

std::optional<double> integrate_until(const SystemDef& sys, double eps, const Vec& x0,
                                      const std::function<bool(std::span<const double>)>& event,
                                      double t_max, const IntegratorConfig& cfg) {
  if (event(x0)) return 0.0;
  const double time_tol = 1e-6 * t_max;
  StepObserver obs = [&](const Trajectory& traj) { return scan_last_step(traj, event, time_tol); };
  const Trajectory traj = integrate_core(sys, eps, x0, t_max, cfg, &obs);
  if (traj.status == TerminalStatus::EventHit) return traj.event_time;
  return std::nullopt;
}

std::optional<double> integrate_until(const SystemDef& sys, double eps, const Vec& x0,
                                      const Ball& target, double t_max,
                                      const IntegratorConfig& cfg) {
  return integrate_until(
      sys, eps, x0, [&](std::span<const double> x) { return target.contains(x); }, t_max, cfg);
}

EntryResult entry_and_remain(const SystemDef& sys, double eps, const Vec& x0, const Ball& target,
                             double t_max, const IntegratorConfig& cfg) {
  const Trajectory traj = integrate_core(sys, eps, x0, t_max, cfg, nullptr);
  EntryResult result;
  result.status = traj.status;
  result.verified_until = traj.t_last();
  if (traj.status != TerminalStatus::ReachedTmax) return result;

  const double time_tol = 1e-6 * t_max;
  std::optional<double> candidate;
  bool prev_inside = target.contains(x0);
  if (prev_inside) candidate = 0.0;
  double prev_t = 0.0;

  for (std::size_t s = 1; s < traj.times.size(); ++s) {
    const double t0 = traj.times[s - 1];
    const double t1 = traj.times[s];
    for (int j = 1; j <= kEventSubsamples; ++j) {
      const double tj =
          j == kEventSubsamples ? t1 : t0 + (t1 - t0) * static_cast<double>(j) / kEventSubsamples;
      const bool inside = target.contains(traj.at(tj));
      if (inside != prev_inside) {
        double lo = prev_t, hi = tj;
        while (hi - lo > time_tol) {
          const double mid = 0.5 * (lo + hi);
          if (target.contains(traj.at(mid)) == inside)
            hi = mid;
          else
            lo = mid;
        }
        if (inside)
          candidate = hi;   // entered: candidate entry point
        else
          candidate.reset();  // exited: previous entry does not persist
        prev_inside = inside;
      }
      prev_t = tj;
    }
  }
  if (prev_inside) result.entry_time = candidate;
  return result;
}

std::vector<EnsembleEntry> ensemble_endpoints(const SystemDef& sys, double eps,
                                              const std::vector<Vec>& starts, double t_end,
                                              const IntegratorConfig& cfg, int threads) {
  std::vector<EnsembleEntry> out(starts.size());
  parallel_for(starts.size(), threads, [&](std::size_t i) {
    out[i].x0 = starts[i];
    try {
      const Trajectory traj = integrate(sys, eps, starts[i], t_end, cfg);
      out[i].endpoint = traj.x_last();
      out[i].status = traj.status;
    } catch (const Error& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const std::size_t n = traj.x0.size();
  out << "t";
  for (std::size_t i = 1; i <= n; ++i) out << ",x" << i;
  out << "\n";
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    out << format_double(traj.times[s]);
    for (std::size_t i = 0; i < n; ++i) out << ',' << format_double(traj.states[s][i]);
    out << "\n";
  }
}

}  // namespace persist
