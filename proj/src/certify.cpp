#include "persist/certify.hpp"

#include <algorithm>
#include <cmath>

#include "persist/error.hpp"
#include "persist/parallel.hpp"
#include "persist/version.hpp"

namespace persist {

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

double halton(long long index, int base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

namespace {

std::vector<int> first_primes(int count) {
  std::vector<int> primes;
  int candidate = 2;
  while (static_cast<int>(primes.size()) < count) {
    bool is_prime = true;
    for (int p : primes) {
      if (p * p > candidate) break;
      if (candidate % p == 0) {
        is_prime = false;
        break;
      }
    }
    if (is_prime) primes.push_back(candidate);
    ++candidate;
  }
  return primes;
}

void dedupe_exact(std::vector<Vec>& pts) {
  std::vector<Vec> unique;
  unique.reserve(pts.size());
  for (auto& p : pts) {
    bool seen = false;
    for (const auto& q : unique)
      if (q == p) {
        seen = true;
        break;
      }
    if (!seen) unique.push_back(std::move(p));
  }
  pts = std::move(unique);
}

}  // namespace

std::vector<Vec> sample_working_compact(const DomainSpec& dom, const SamplingConfig& s) {
  const int n = static_cast<int>(dom.working_lo.size());
  std::vector<Vec> pts;
  if (s.corners) {
    if (n > 20) throw ModelError("corner sampling infeasible for n > 20");
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      Vec p(n);
      for (int i = 0; i < n; ++i)
        p[i] = (mask >> i) & 1u ? dom.working_hi[i] : dom.working_lo[i];
      pts.push_back(std::move(p));
    }
  }
  if (s.center) pts.push_back(dom.working_center());
  const std::vector<int> primes = first_primes(n);
  for (int j = 0; j < s.halton_count; ++j) {
    Vec p(n);
    for (int i = 0; i < n; ++i) {
      const double u = halton(s.halton_skip + j, primes[i]);
      p[i] = dom.working_lo[i] + u * (dom.working_hi[i] - dom.working_lo[i]);
    }
    pts.push_back(std::move(p));
  }
  dedupe_exact(pts);
  return pts;
}

std::vector<Vec> sphere_directions(int n, int extra, int halton_skip) {
  std::vector<Vec> dirs;
  for (int i = 0; i < n; ++i) {
    Vec plus(n, 0.0), minus(n, 0.0);
    plus[i] = 1.0;
    minus[i] = -1.0;
    dirs.push_back(std::move(plus));
    dirs.push_back(std::move(minus));
  }
  const std::vector<int> primes = first_primes(n);
  int produced = 0;
  long long index = halton_skip;
  while (produced < extra && index < halton_skip + 8LL * (extra + 1)) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = 2.0 * halton(index, primes[i]) - 1.0;
    ++index;
    const double norm = norm2(v);
    if (norm < 1e-9) continue;
    for (double& c : v) c /= norm;
    dirs.push_back(std::move(v));
    ++produced;
  }
  dedupe_exact(dirs);
  return dirs;
}

// ---------------------------------------------------------------------------
// Entry-and-remain with the certification remain policy
// ---------------------------------------------------------------------------

namespace {

// Settle check for one start: entry must happen before entry_horizon and
// containment is verified to max(remain_factor * entry, remain_min),
// re-integrating with a longer window when the first pass verified less.
EntryRecord settle_record(const SystemDef& sys, double eps, const Vec& x0, const Ball& ball,
                          double entry_horizon, const CertifyConfig& cfg) {
  EntryRecord rec;
  rec.x0 = x0;
  double window = std::max(entry_horizon, cfg.remain_min);
  for (int attempt = 0; attempt < 4; ++attempt) {
    const EntryResult er = entry_and_remain(sys, eps, x0, ball, window, cfg.integrator);
    rec.status = er.status;
    rec.verified_until = er.verified_until;
    rec.entry_time = er.entry_time;
    if (er.status != TerminalStatus::ReachedTmax || !er.entry_time) return rec;
    if (*er.entry_time > entry_horizon) {
      rec.entry_time.reset();  // settles only after the allowed horizon
      return rec;
    }
    const double required = std::max(cfg.remain_factor * *er.entry_time, cfg.remain_min);
    if (window >= required) return rec;
    window = required;
  }
  return rec;
}

std::vector<EntryRecord> settle_all(const SystemDef& sys, double eps,
                                    const std::vector<Vec>& starts, const Ball& ball,
                                    double entry_horizon, const CertifyConfig& cfg) {
  std::vector<EntryRecord> records(starts.size());
  parallel_for(starts.size(), cfg.threads, [&](std::size_t i) {
    records[i] = settle_record(sys, eps, starts[i], ball, entry_horizon, cfg);
  });
  return records;
}

std::string describe_point(const Vec& x) {
  std::string s = "(";
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) s += ", ";
    s += format_double(x[i]);
  }
  return s + ")";
}

}  // namespace

// ---------------------------------------------------------------------------
// Absorbing set / attractor
// ---------------------------------------------------------------------------

AbsorbingEstimate estimate_absorbing(const SystemDef& sys, double eps, const Ball& k0,
                                     double horizon, const CertifyConfig& cfg) {
  if (static_cast<int>(k0.center.size()) != sys.dim())
    throw ModelError("K0 center has wrong dimension");
  if (!(k0.radius > 0.0)) throw ModelError("K0 radius must be positive");
  for (int i = 0; i < sys.dim(); ++i) {
    Vec lo_pt = k0.center, hi_pt = k0.center;
    lo_pt[i] -= k0.radius;
    hi_pt[i] += k0.radius;
    if (!sys.domain().contains(lo_pt, sys.positive_cone()) ||
        !sys.domain().contains(hi_pt, sys.positive_cone()))
      throw ModelError("K0 candidate ball is not contained in the domain");
  }

  AbsorbingEstimate est;
  est.eps = eps;
  est.k0 = k0;
  const std::vector<Vec> starts = sample_working_compact(sys.domain(), cfg.sampling);
  est.entries = settle_all(sys, eps, starts, k0, horizon, cfg);
  est.all_absorbed = true;
  est.t0 = 0.0;
  for (const auto& rec : est.entries) {
    if (rec.entry_time && rec.status == TerminalStatus::ReachedTmax)
      est.t0 = std::max(est.t0, *rec.entry_time);
    else
      est.all_absorbed = false;
  }
  return est;
}

AttractorEstimate estimate_attractor(const SystemDef& sys, double eps, double t_burn,
                                     const CertifyConfig& cfg) {
  if (!(t_burn > 0.0)) throw ModelError("attractor burn-in must be positive");
  AttractorEstimate est;
  est.eps = eps;
  est.t_burn = t_burn;
  const std::vector<Vec> starts = sample_working_compact(sys.domain(), cfg.sampling);
  const auto entries = ensemble_endpoints(sys, eps, starts, t_burn, cfg.integrator, cfg.threads);
  for (const auto& e : entries) {
    if (!e.error.empty()) {
      est.failures.push_back("start " + describe_point(e.x0) + ": " + e.error);
    } else if (e.status != TerminalStatus::ReachedTmax) {
      est.failures.push_back("start " + describe_point(e.x0) + ": " + to_string(e.status));
    } else {
      est.cloud.push_back(e.endpoint);
    }
  }
  est.complete = est.failures.empty();
  if (!est.cloud.empty()) {
    est.centroid.assign(sys.dim(), 0.0);
    for (const auto& p : est.cloud)
      for (int i = 0; i < sys.dim(); ++i) est.centroid[i] += p[i];
    for (int i = 0; i < sys.dim(); ++i) est.centroid[i] /= static_cast<double>(est.cloud.size());
    for (std::size_t a = 0; a < est.cloud.size(); ++a)
      for (std::size_t b = a + 1; b < est.cloud.size(); ++b)
        est.diameter = std::max(est.diameter, dist2(est.cloud[a], est.cloud[b]));
  }
  return est;
}

bool check_attractor_containment(const AttractorEstimate& attr, const Vec& center, double radius) {
  if (!attr.complete || attr.cloud.empty()) return false;
  for (const auto& p : attr.cloud)
    if (!(dist2(p, center) < radius)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// T_eta and eps_hat
// ---------------------------------------------------------------------------

double estimate_T_eta(const SystemDef& sys, const Vec& x_star, double eta, double horizon,
                      const CertifyConfig& cfg) {
  if (!(eta > 0.0)) throw ModelError("eta must be positive");
  const Ball ball{x_star, 0.5 * eta};
  const std::vector<Vec> starts = sample_working_compact(sys.domain(), cfg.sampling);
  const auto records = settle_all(sys, 0.0, starts, ball, horizon, cfg);
  double t = 0.0;
  for (const auto& rec : records) {
    if (!rec.entry_time || rec.status != TerminalStatus::ReachedTmax)
      throw Refusal("T_eta", "start " + describe_point(rec.x0) +
                                 " did not settle into B(x*, eta/2) within horizon " +
                                 format_double(horizon) + " (status " + to_string(rec.status) +
                                 "); global attraction on K is not numerically supported");
    t = std::max(t, *rec.entry_time);
  }
  return t;
}

double max_deviation_at(const SystemDef& sys, double eps, double T,
                        const std::vector<Vec>& starts, const std::vector<Vec>& baseline,
                        const IntegratorConfig& icfg, int threads) {
  std::vector<double> dev(starts.size(), 0.0);
  parallel_for(starts.size(), threads, [&](std::size_t i) {
    try {
      const Trajectory traj = integrate(sys, eps, starts[i], T, icfg);
      dev[i] = traj.status == TerminalStatus::ReachedTmax
                   ? dist2(traj.x_last(), baseline[i])
                   : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      dev[i] = std::numeric_limits<double>::infinity();
    }
  });
  double m = 0.0;
  for (double d : dev) m = std::max(m, d);
  return m;
}

EpsHatResult estimate_eps_hat(const SystemDef& sys, const Vec& x_star, double eta, double T_eta,
                              const CertifyConfig& cfg) {
  (void)x_star;  // the deviation criterion needs only the trajectories
  EpsHatResult result;
  result.resolution = cfg.eps_hat_resolution_factor * sys.eps0();
  if (T_eta <= 0.0) {
    // trajectories agree at t = 0 identically; the whole a-priori range passes
    result.eps_hat = sys.eps0();
    return result;
  }
  const std::vector<Vec> starts = sample_working_compact(sys.domain(), cfg.sampling);
  const auto base_entries =
      ensemble_endpoints(sys, 0.0, starts, T_eta, cfg.integrator, cfg.threads);
  std::vector<Vec> baseline(starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (!base_entries[i].error.empty() || base_entries[i].status != TerminalStatus::ReachedTmax)
      throw IntegrationError("unperturbed trajectory failed during eps_hat baseline from start " +
                             describe_point(starts[i]));
    baseline[i] = base_entries[i].endpoint;
  }

  const double threshold = 0.5 * eta;
  auto predicate = [&](double e) {
    const double dev = std::max(
        max_deviation_at(sys, e, T_eta, starts, baseline, cfg.integrator, cfg.threads),
        max_deviation_at(sys, -e, T_eta, starts, baseline, cfg.integrator, cfg.threads));
    result.probes.emplace_back(e, dev);
    return dev < threshold;
  };

  if (predicate(sys.eps0())) {
    result.eps_hat = sys.eps0();
    return result;
  }
  if (!predicate(result.resolution))
    throw Refusal("eps_hat", "deviation at T_eta exceeds eta/2 already at eps = " +
                                 format_double(result.resolution) +
                                 "; continuous dependence is not numerically supported");
  double lo = result.resolution, hi = sys.eps0();
  while (hi - lo > result.resolution) {
    const double mid = 0.5 * (lo + hi);
    if (predicate(mid))
      lo = mid;
    else
      hi = mid;
  }
  result.eps_hat = lo;
  std::sort(result.probes.begin(), result.probes.end());
  return result;
}

// ---------------------------------------------------------------------------
// Basin radius proxy
// ---------------------------------------------------------------------------

BasinEstimate estimate_basin_radius(const SystemDef& sys, double eps, const Vec& x_star_eps,
                                    const CertifyConfig& cfg) {
  BasinEstimate est;
  const double cap =
      std::min(cfg.basin_r_max, sys.domain().working_boundary_distance(x_star_eps));
  if (!(cap > 0.0)) return est;  // equilibrium on/outside the working box
  est.r_max = cap;
  const std::vector<Vec> dirs =
      sphere_directions(sys.dim(), cfg.shell_extra_points, cfg.sampling.halton_skip);
  est.points_per_shell = static_cast<int>(dirs.size());
  const double convergence_radius = cfg.convergence_radius_factor * cap;

  for (int k = cfg.shells; k >= 1; --k) {
    const double r = cap * static_cast<double>(k) / cfg.shells;
    std::vector<char> converged(dirs.size(), 0);
    parallel_for(dirs.size(), cfg.threads, [&](std::size_t i) {
      Vec p(x_star_eps.size());
      for (std::size_t d = 0; d < p.size(); ++d) p[d] = x_star_eps[d] + r * dirs[i][d];
      try {
        const Trajectory traj = integrate(sys, eps, p, cfg.basin_horizon, cfg.integrator);
        converged[i] = traj.status == TerminalStatus::ReachedTmax &&
                       dist2(traj.x_last(), x_star_eps) <= convergence_radius;
      } catch (const Error&) {
        converged[i] = 0;
      }
    });
    const bool all =
        std::all_of(converged.begin(), converged.end(), [](char c) { return c != 0; });
    est.shells_tested.emplace_back(r, all);
    if (all) {
      est.r_eps = r;
      break;
    }
  }
  return est;
}

// ---------------------------------------------------------------------------
// The certificate pipeline
// ---------------------------------------------------------------------------

namespace {

inline bool leq_grid(double a, double b) { return a <= b + 1e-12 * std::max(1.0, std::abs(b)); }

}  // namespace

PersistenceCertificate certify_persistence(const SystemDef& sys, double eta,
                                           const CertifyConfig& cfg) {
  PersistenceCertificate cert;
  cert.system = sys.name();
  cert.n = sys.dim();
  cert.eps0 = sys.eps0();
  cert.eta = eta;
  cert.config = cfg;
  cert.start_count = static_cast<int>(sample_working_compact(sys.domain(), cfg.sampling).size());

  try {
    if (!(eta > 0.0)) throw ModelError("eta must be positive");

    // (1) equilibrium at eps = 0, Hurwitz hypothesis
    const Vec guess =
        cfg.equilibrium_guess.empty() ? sys.domain().working_center() : cfg.equilibrium_guess;
    NewtonResult nr;
    try {
      nr = newton_equilibrium(sys, 0.0, guess, cfg.newton);
    } catch (const SpectralError& e) {
      throw Refusal("equilibrium", std::string("no equilibrium found at eps = 0: ") + e.what());
    }
    cert.x_star = nr.x;
    cert.newton_residual = nr.residual;
    cert.spectral0 = classify(sys.jacobian(nr.x, 0.0), cfg.hyperbolicity_tol);
    if (!cert.spectral0.hyperbolic)
      throw Refusal("hurwitz_check",
                    "equilibrium not hyperbolic (eigenvalue within " +
                        format_double(cfg.hyperbolicity_tol) + " of the imaginary axis)");
    if (!cert.spectral0.hurwitz)
      throw Refusal("hurwitz_check",
                    "equilibrium not Hurwitz (index " + std::to_string(cert.spectral0.index) +
                        " of " + std::to_string(cert.n) + ")");

    // (2) transient horizon
    cert.T_eta = estimate_T_eta(sys, cert.x_star, eta, cfg.horizon, cfg);

    // (3) perturbation tolerance at T_eta
    EpsHatResult eh = estimate_eps_hat(sys, cert.x_star, eta, *cert.T_eta, cfg);
    cert.eps_hat = eh.eps_hat;
    cert.eps_hat_probes = eh.probes;

    // (4) equilibrium branch over the full a-priori range
    ContinuationConfig ccfg;
    ccfg.n_nodes = cfg.eps_nodes;
    ccfg.newton = cfg.newton;
    ccfg.hyperbolicity_tol = cfg.hyperbolicity_tol;
    cert.branch = continue_equilibrium(sys, sys.eps0(), ccfg, cert.x_star);
    const EquilibriumBranch& branch = *cert.branch;
    cert.eps1 = branch.eps1();
    cert.eps2 = branch.eps2();
    if (branch.nodes.size() >= 3) cert.jacobian_growth = jacobian_growth_bound(branch);

    // (5) basin radii along the classified part of the branch; r0 and eps3
    for (const auto& node : branch.nodes) {
      if (!leq_grid(std::abs(node.eps), *cert.eps2)) continue;
      const BasinEstimate be = estimate_basin_radius(sys, node.eps, node.x_star, cfg);
      BasinTableRow row;
      row.eps = node.eps;
      row.r_eps = be.r_eps;
      row.r_max = be.r_max;
      row.d_star = dist2(node.x_star, cert.x_star);
      cert.basin_table.push_back(row);
    }
    {
      double cap0 = 0.0;
      for (const auto& row : cert.basin_table)
        if (row.eps == 0.0) cap0 = row.r_max;
      // below this, r_eps - d_star is indistinguishable from Newton and
      // integration noise and must not certify a positive r0
      const double r0_floor = cfg.r0_floor_factor * cap0;
      double best_eps3 = -1.0, best_r0 = 0.0;
      for (int k = 0;; ++k) {
        const double radius = branch.grid_spacing * k;
        if (!leq_grid(radius, *cert.eps2)) break;
        double r0_here = std::numeric_limits<double>::infinity();
        int used = 0;
        for (const auto& row : cert.basin_table)
          if (leq_grid(std::abs(row.eps), radius)) {
            r0_here = std::min(r0_here, row.r_eps - row.d_star);
            ++used;
          }
        if (used < 2 * k + 1) break;  // a side is truncated
        if (!(r0_here > r0_floor)) break;
        best_eps3 = radius;
        best_r0 = r0_here;
      }
      if (best_eps3 < 0.0)
        throw Refusal("basin_radius",
                      "no positive r0: the sampled basin radius at eps = 0 does not exceed the "
                      "equilibrium shift beyond the noise floor " +
                          format_double(r0_floor));
      cert.eps3 = best_eps3;
      cert.r0 = best_r0;
    }

    // (6) attractor containment in B(x*, r0); eps4
    cert.attractor_probe_limit = std::min({*cert.eps1, *cert.eps2, *cert.eps3});
    {
      double eps4 = -1.0;
      for (int k = 0;; ++k) {
        const double radius = branch.grid_spacing * k;
        if (!leq_grid(radius, cert.attractor_probe_limit)) break;
        bool level_ok = true;
        const std::vector<double> level =
            k == 0 ? std::vector<double>{0.0} : std::vector<double>{radius, -radius};
        for (const double e : level) {
          const AttractorEstimate attr = estimate_attractor(sys, e, cfg.t_burn, cfg);
          AttractorRow row;
          row.eps = e;
          row.diameter = attr.diameter;
          row.centroid = attr.centroid;
          row.complete = attr.complete;
          for (const auto& p : attr.cloud)
            row.max_dist_to_x_star = std::max(row.max_dist_to_x_star, dist2(p, cert.x_star));
          row.contained = check_attractor_containment(attr, cert.x_star, *cert.r0);
          cert.attractor_rows.push_back(row);
          level_ok = level_ok && row.contained;
        }
        if (!level_ok) break;
        eps4 = radius;
      }
      if (eps4 < 0.0)
        throw Refusal("attractor_containment",
                      "attractor cloud at eps = 0 is not inside B(x*, r0)");
      cert.eps4 = eps4;
    }

    // (7) assemble eps_star
    cert.eps_star = std::min({cert.eps0, *cert.eps1, *cert.eps2, *cert.eps3, *cert.eps4});
    if (!(*cert.eps_star > 0.0))
      throw Refusal("assembly", "eps_star is not positive (eps1 = " + format_double(*cert.eps1) +
                                    ", eps2 = " + format_double(*cert.eps2) +
                                    ", eps3 = " + format_double(*cert.eps3) +
                                    ", eps4 = " + format_double(*cert.eps4) + ")");

    // (8) final sweep: the theorem's conclusion checked directly against
    // the branch equilibria
    const std::vector<Vec> starts = sample_working_compact(sys.domain(), cfg.sampling);
    for (const auto& node : branch.nodes) {
      if (!leq_grid(std::abs(node.eps), *cert.eps_star)) continue;
      const auto entries = ensemble_endpoints(sys, node.eps, starts, cfg.final_sweep_horizon,
                                              cfg.integrator, cfg.threads);
      FinalSweepRow row;
      row.eps = node.eps;
      for (const auto& e : entries) {
        if (!e.error.empty())
          throw Refusal("final_sweep", "start " + describe_point(e.x0) + " at eps = " +
                                           format_double(node.eps) + " failed: " + e.error);
        if (e.status != TerminalStatus::ReachedTmax)
          throw Refusal("final_sweep", "start " + describe_point(e.x0) + " at eps = " +
                                           format_double(node.eps) + " ended with status " +
                                           to_string(e.status));
        row.max_endpoint_error = std::max(row.max_endpoint_error, dist2(e.endpoint, node.x_star));
      }
      row.passed = row.max_endpoint_error <= cfg.final_sweep_tol;
      cert.final_sweep.push_back(row);
      cert.final_sweep_max_error = std::max(cert.final_sweep_max_error, row.max_endpoint_error);
      if (!row.passed)
        throw Refusal("final_sweep",
                      "endpoint error " + format_double(row.max_endpoint_error) + " at eps = " +
                          format_double(node.eps) + " exceeds tolerance " +
                          format_double(cfg.final_sweep_tol));
    }

    cert.certified = true;
  } catch (const Refusal& r) {
    cert.certified = false;
    cert.refusal_step = r.step();
    cert.refusal_reason = r.reason();
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Report documents
// ---------------------------------------------------------------------------

namespace {

Json vec_to_json(const Vec& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

Json spectral_to_json(const SpectralSummary& s) {
  Json j;
  Json eig = Json::array();
  for (const auto& ev : s.eigenvalues) {
    Json e;
    e["re"] = ev.real();
    e["im"] = ev.imag();
    eig.push_back(e);
  }
  j["eigenvalues"] = eig;
  j["spectral_abscissa"] = s.spectral_abscissa;
  j["index"] = s.index;
  j["hyperbolic"] = s.hyperbolic;
  j["hurwitz"] = s.hurwitz;
  j["hyperbolicity_tol"] = s.hyperbolicity_tol;
  return j;
}

Json tool_stamp() {
  Json t;
  t["name"] = kToolName;
  t["version"] = kToolVersion;
  return t;
}

Json sampling_stamp(const SamplingConfig& s, int start_count) {
  Json j;
  j["corners"] = s.corners;
  j["center"] = s.center;
  j["halton_count"] = s.halton_count;
  j["halton_skip"] = s.halton_skip;
  if (start_count > 0) j["start_count"] = start_count;
  return j;
}

Json integrator_stamp(const IntegratorConfig& c) {
  Json j;
  j["rel_tol"] = c.rel_tol;
  j["abs_tol"] = c.abs_tol;
  j["max_steps"] = static_cast<long long>(c.max_steps);
  j["blow_up_norm"] = c.blow_up_norm;
  return j;
}

const char* kNoteWorkingCompact =
    "set-quantified checks are sampled on the declared working compact K; coverage of the rest "
    "of the domain relies on the empirically checked absorbing behaviour";
const char* kNoteRemain =
    "entry-and-remain containment is verified up to max(remain_factor * entry time, remain_min); "
    "later exits are undetectable";
const char* kNoteBasin =
    "r_eps values are sampled lower-confidence estimates of the basin radius, not bounds";
const char* kNoteGrid = "per-eps bounds are grid-resolution lower bounds at the stamped spacing";
const char* kNoteMetric = "all distances are Euclidean";

}  // namespace

Json certificate_to_json(const PersistenceCertificate& cert) {
  Json j;
  j["certificate_version"] = 1;
  j["tool"] = tool_stamp();
  Json sysj;
  sysj["name"] = cert.system;
  sysj["n"] = cert.n;
  sysj["eps0"] = cert.eps0;
  j["system"] = sysj;
  j["metric"] = "euclidean";
  j["eta"] = cert.eta;
  j["verdict"] = cert.certified ? "certified" : "refused";
  if (!cert.certified) {
    Json r;
    r["step"] = cert.refusal_step;
    r["reason"] = cert.refusal_reason;
    j["refusal"] = r;
  } else {
    Json eq;
    eq["x_star"] = vec_to_json(cert.x_star);
    eq["newton_residual"] = cert.newton_residual;
    eq["spectral"] = spectral_to_json(cert.spectral0);
    j["equilibrium"] = eq;
    j["T_eta"] = *cert.T_eta;
    j["eps_hat"] = *cert.eps_hat;
    Json probes = Json::array();
    for (const auto& [e, d] : cert.eps_hat_probes) {
      Json p;
      p["eps"] = e;
      p["max_deviation"] = d;
      probes.push_back(p);
    }
    j["eps_hat_probes"] = probes;

    const EquilibriumBranch& branch = *cert.branch;
    Json bj;
    bj["eps1"] = *cert.eps1;
    bj["eps2"] = *cert.eps2;
    bj["grid_spacing"] = branch.grid_spacing;
    bj["index0"] = branch.index0;
    if (cert.jacobian_growth) bj["jacobian_growth_bound"] = *cert.jacobian_growth;
    if (!branch.stop_reason_pos.empty()) bj["stop_reason_pos"] = branch.stop_reason_pos;
    if (!branch.stop_reason_neg.empty()) bj["stop_reason_neg"] = branch.stop_reason_neg;
    Json nodes = Json::array();
    for (const auto& node : branch.nodes) {
      Json nj;
      nj["eps"] = node.eps;
      nj["x_star"] = vec_to_json(node.x_star);
      nj["spectral_abscissa"] = node.spectral.spectral_abscissa;
      nj["index"] = node.spectral.index;
      nj["residual"] = node.newton_residual;
      nodes.push_back(nj);
    }
    bj["nodes"] = nodes;
    j["branch"] = bj;

    Json basin;
    basin["r0"] = *cert.r0;
    basin["eps3"] = *cert.eps3;
    basin["r0_floor_factor"] = cert.config.r0_floor_factor;
    Json table = Json::array();
    for (const auto& row : cert.basin_table) {
      Json rj;
      rj["eps"] = row.eps;
      rj["r_eps"] = row.r_eps;
      rj["r_max"] = row.r_max;
      rj["d_star"] = row.d_star;
      table.push_back(rj);
    }
    basin["table"] = table;
    j["basin"] = basin;

    Json attractor;
    attractor["eps4"] = *cert.eps4;
    attractor["t_burn"] = cert.config.t_burn;
    attractor["probed_up_to"] = cert.attractor_probe_limit;
    Json arows = Json::array();
    for (const auto& row : cert.attractor_rows) {
      Json rj;
      rj["eps"] = row.eps;
      rj["diameter"] = row.diameter;
      rj["centroid"] = vec_to_json(row.centroid);
      rj["max_dist_to_x_star"] = row.max_dist_to_x_star;
      rj["contained"] = row.contained;
      rj["complete"] = row.complete;
      arows.push_back(rj);
    }
    attractor["rows"] = arows;
    j["attractor"] = attractor;

    j["eps_star"] = *cert.eps_star;

    Json sweep;
    sweep["horizon"] = cert.config.final_sweep_horizon;
    sweep["tolerance"] = cert.config.final_sweep_tol;
    sweep["max_endpoint_error"] = cert.final_sweep_max_error;
    Json srows = Json::array();
    for (const auto& row : cert.final_sweep) {
      Json rj;
      rj["eps"] = row.eps;
      rj["max_endpoint_error"] = row.max_endpoint_error;
      rj["passed"] = row.passed;
      srows.push_back(rj);
    }
    sweep["rows"] = srows;
    j["final_sweep"] = sweep;
  }

  Json ev;
  ev["sampling"] = sampling_stamp(cert.config.sampling, cert.start_count);
  Json grid;
  grid["nodes"] = cert.config.eps_nodes;
  grid["spacing"] = cert.eps0 / ((cert.config.eps_nodes - 1) / 2);
  ev["eps_grid"] = grid;
  ev["integrator"] = integrator_stamp(cert.config.integrator);
  Json newton;
  newton["tol"] = cert.config.newton.tol;
  newton["max_iter"] = cert.config.newton.max_iter;
  ev["newton"] = newton;
  ev["hyperbolicity_tol"] = cert.config.hyperbolicity_tol;
  Json horizons;
  horizons["entry_horizon"] = cert.config.horizon;
  horizons["remain_factor"] = cert.config.remain_factor;
  horizons["remain_min"] = cert.config.remain_min;
  horizons["t_burn"] = cert.config.t_burn;
  horizons["basin_horizon"] = cert.config.basin_horizon;
  horizons["final_sweep_horizon"] = cert.config.final_sweep_horizon;
  ev["horizons"] = horizons;
  ev["eps_hat_resolution"] = cert.config.eps_hat_resolution_factor * cert.eps0;
  Json notes = Json::array();
  notes.push_back(kNoteWorkingCompact);
  notes.push_back(kNoteRemain);
  notes.push_back(kNoteBasin);
  notes.push_back(kNoteGrid);
  notes.push_back(kNoteMetric);
  ev["notes"] = notes;
  j["evidence"] = ev;
  return j;
}

// ---------------------------------------------------------------------------
// Uniform-in-time closeness (the three-thirds argument)
// ---------------------------------------------------------------------------

ClosenessReport check_uniform_closeness(const SystemDef& sys, double eta,
                                        const std::vector<double>& eps_list,
                                        const ClosenessConfig& cfg) {
  if (!(eta > 0.0)) throw ModelError("eta must be positive");
  if (eps_list.empty()) throw ModelError("closeness check needs at least one eps value");
  for (double e : eps_list)
    if (std::abs(e) > sys.eps0())
      throw ModelError("eps " + format_double(e) + " outside [-eps0, eps0]");

  ClosenessReport report;
  report.system = sys.name();
  report.eta = eta;

  CertifyConfig scfg;  // reuse the settle machinery
  scfg.sampling = cfg.sampling;
  scfg.integrator = cfg.integrator;
  scfg.remain_factor = cfg.remain_factor;
  scfg.remain_min = cfg.remain_min;
  scfg.threads = cfg.threads;

  const Vec guess =
      cfg.equilibrium_guess.empty() ? sys.domain().working_center() : cfg.equilibrium_guess;
  NewtonResult nr;
  try {
    nr = newton_equilibrium(sys, 0.0, guess, cfg.newton);
  } catch (const SpectralError& e) {
    throw Refusal("equilibrium", std::string("no equilibrium found at eps = 0: ") + e.what());
  }
  const Vec x_star = nr.x;
  const SpectralSummary spec0 = classify(sys.jacobian(x_star, 0.0), cfg.hyperbolicity_tol);
  if (!spec0.hurwitz) throw Refusal("hurwitz_check", "equilibrium at eps = 0 is not Hurwitz");

  const std::vector<Vec> starts = sample_working_compact(sys.domain(), cfg.sampling);
  report.start_count = static_cast<int>(starts.size());
  const double third = eta / 3.0;

  // theta1: unperturbed settle into the eta/3 ball around x*
  {
    const auto recs = settle_all(sys, 0.0, starts, Ball{x_star, third}, cfg.theta_horizon, scfg);
    for (const auto& rec : recs) {
      if (!rec.entry_time || rec.status != TerminalStatus::ReachedTmax)
        throw Refusal("theta1", "start " + describe_point(rec.x0) +
                                    " did not settle into B(x*, eta/3) within " +
                                    format_double(cfg.theta_horizon));
      report.theta1 = std::max(report.theta1, *rec.entry_time);
    }
  }

  // per-eps equilibria and theta2
  for (const double eps : eps_list) {
    ClosenessEpsInfo info;
    info.eps = eps;
    try {
      const NewtonResult ne = newton_equilibrium(sys, eps, x_star, cfg.newton);
      info.x_star_eps = ne.x;
      info.d_star = dist2(ne.x, x_star);
      if (info.d_star <= third) {
        info.ok = true;
      } else {
        info.note = "equilibrium shift d(x*(eps), x*) = " + format_double(info.d_star) +
                    " exceeds eta/3";
      }
    } catch (const Error& e) {
      info.note = std::string("no equilibrium at this eps: ") + e.what();
    }
    if (info.ok) {
      const auto recs =
          settle_all(sys, eps, starts, Ball{info.x_star_eps, third}, cfg.theta_horizon, scfg);
      for (const auto& rec : recs) {
        if (!rec.entry_time || rec.status != TerminalStatus::ReachedTmax) {
          info.ok = false;
          info.note = "start " + describe_point(rec.x0) +
                      " did not settle into B(x*(eps), eta/3) within " +
                      format_double(cfg.theta_horizon);
          break;
        }
        report.theta2 = std::max(report.theta2, *rec.entry_time);
      }
    }
    report.eps_info.push_back(std::move(info));
  }

  report.T = std::max(report.theta1, report.theta2);
  const double t_total = cfg.tail_factor * report.T;

  // cache the unperturbed trajectories once per start
  std::vector<Trajectory> base(starts.size());
  if (report.T > 0.0) {
    parallel_for(starts.size(), cfg.threads, [&](std::size_t i) {
      base[i] = integrate(sys, 0.0, starts[i], t_total, cfg.integrator);
      if (base[i].status != TerminalStatus::ReachedTmax)
        throw IntegrationError("unperturbed trajectory from " + describe_point(starts[i]) +
                               " ended with status " + to_string(base[i].status));
    });
  }

  for (const auto& info : report.eps_info) {
    if (!info.ok) continue;
    std::vector<ClosenessPair> pairs(starts.size());
    parallel_for(starts.size(), cfg.threads, [&](std::size_t i) {
      ClosenessPair pair;
      pair.eps = info.eps;
      pair.x0 = starts[i];
      if (report.T > 0.0) {
        const Trajectory traj = integrate(sys, info.eps, starts[i], t_total, cfg.integrator);
        if (traj.status != TerminalStatus::ReachedTmax)
          throw IntegrationError("perturbed trajectory from " + describe_point(starts[i]) +
                                 " ended with status " + to_string(traj.status));
        // shared dense grid on [0, T]
        for (int k = 0; k <= cfg.time_grid; ++k) {
          const double t = report.T * static_cast<double>(k) / cfg.time_grid;
          pair.sup_d = std::max(pair.sup_d, dist2(traj.at(t), base[i].at(t)));
        }
        // tail [T, tail_factor*T]: measured deviation plus the three-term bound
        for (int k = 1; k <= cfg.tail_grid; ++k) {
          const double t =
              report.T + (t_total - report.T) * static_cast<double>(k) / cfg.tail_grid;
          const Vec xe = traj.at(t);
          const Vec x0t = base[i].at(t);
          const double measured = dist2(xe, x0t);
          const double bound = dist2(xe, info.x_star_eps) + info.d_star + dist2(x0t, x_star);
          pair.sup_d = std::max(pair.sup_d, measured);
          pair.sup_tail_bound = std::max(pair.sup_tail_bound, bound);
          pair.max_dominance_violation =
              std::max(pair.max_dominance_violation, measured - bound);
        }
      }
      pair.passed = pair.sup_d < eta && pair.max_dominance_violation <= 1e-9;
      pairs[i] = std::move(pair);
    });
    for (auto& p : pairs) report.pairs.push_back(std::move(p));
  }

  report.passed = !report.pairs.empty();
  for (const auto& info : report.eps_info) report.passed = report.passed && info.ok;
  for (const auto& p : report.pairs) report.passed = report.passed && p.passed;
  return report;
}

Json closeness_to_json(const ClosenessReport& report) {
  Json j;
  j["report_version"] = 1;
  j["tool"] = tool_stamp();
  j["report_type"] = "closeness";
  j["system"] = report.system;
  j["metric"] = "euclidean";
  j["eta"] = report.eta;
  j["theta1"] = report.theta1;
  j["theta2"] = report.theta2;
  j["T"] = report.T;
  j["passed"] = report.passed;
  Json eps_info = Json::array();
  for (const auto& info : report.eps_info) {
    Json ij;
    ij["eps"] = info.eps;
    ij["ok"] = info.ok;
    if (!info.x_star_eps.empty()) {
      ij["x_star_eps"] = vec_to_json(info.x_star_eps);
      ij["d_star"] = info.d_star;
    }
    if (!info.note.empty()) ij["note"] = info.note;
    eps_info.push_back(ij);
  }
  j["eps_info"] = eps_info;
  double sup_overall = 0.0;
  Json pairs = Json::array();
  for (const auto& p : report.pairs) {
    Json pj;
    pj["eps"] = p.eps;
    pj["x0"] = vec_to_json(p.x0);
    pj["sup_d"] = p.sup_d;
    pj["sup_tail_bound"] = p.sup_tail_bound;
    pj["max_dominance_violation"] = p.max_dominance_violation;
    pj["passed"] = p.passed;
    pairs.push_back(pj);
    sup_overall = std::max(sup_overall, p.sup_d);
  }
  j["sup_d_overall"] = sup_overall;
  j["pairs"] = pairs;
  return j;
}

// ---------------------------------------------------------------------------
// Positive-cone persistence
// ---------------------------------------------------------------------------

PersistenceReport check_positive_persistence(const SystemDef& sys, double eps_range,
                                             const PositivePersistenceConfig& cfg) {
  if (!sys.positive_cone())
    throw ModelError("positive persistence requires a positive-cone model");
  if (!(eps_range > 0.0) || eps_range > sys.eps0())
    throw ModelError("eps range must lie in (0, eps0]");

  PersistenceReport report;
  report.system = sys.name();
  report.eps_range = eps_range;
  report.floor_horizon = cfg.floor_horizon;

  const Vec guess =
      cfg.equilibrium_guess.empty() ? sys.domain().working_center() : cfg.equilibrium_guess;
  ContinuationConfig ccfg;
  ccfg.n_nodes = cfg.eps_nodes;
  ccfg.newton = cfg.newton;
  ccfg.hyperbolicity_tol = cfg.hyperbolicity_tol;
  const EquilibriumBranch branch = continue_equilibrium(sys, eps_range, ccfg, guess);
  report.branch_complete = branch.nodes.size() == static_cast<std::size_t>(cfg.eps_nodes) &&
                           branch.stop_reason_pos.empty() && branch.stop_reason_neg.empty();
  if (!report.branch_complete)
    report.note = "branch truncated: " + (branch.stop_reason_pos.empty()
                                              ? branch.stop_reason_neg
                                              : branch.stop_reason_pos);

  // default persistence floor: half the smallest equilibrium component
  double delta = cfg.persistence_floor;
  if (delta <= 0.0) {
    double min_comp = std::numeric_limits<double>::infinity();
    for (const auto& node : branch.nodes)
      for (double c : node.x_star) min_comp = std::min(min_comp, c);
    delta = std::max(0.0, 0.5 * min_comp);
  }
  report.delta = delta;

  const std::vector<Vec> starts = sample_working_compact(sys.domain(), cfg.sampling);
  report.start_count = static_cast<int>(starts.size());
  const double t_total = 2.0 * cfg.floor_horizon;
  const int window_points = 500;

  report.min_component_floor = std::numeric_limits<double>::infinity();
  for (const auto& node : branch.nodes) {
    PositiveEpsRow row;
    row.eps = node.eps;
    row.x_star = node.x_star;
    row.equilibrium_positive = true;
    for (double c : node.x_star) row.equilibrium_positive = row.equilibrium_positive && c > 0.0;

    std::vector<double> floors(starts.size(), std::numeric_limits<double>::infinity());
    std::vector<char> positive(starts.size(), 1);
    parallel_for(starts.size(), cfg.threads, [&](std::size_t i) {
      const Trajectory traj = integrate(sys, node.eps, starts[i], t_total, cfg.integrator);
      if (traj.status != TerminalStatus::ReachedTmax) {
        positive[i] = 0;  // left the cone (or blew up) before the window closed
        floors[i] = 0.0;
        return;
      }
      for (const auto& state : traj.states)
        for (double c : state)
          if (!(c > 0.0)) positive[i] = 0;
      double fl = std::numeric_limits<double>::infinity();
      for (int k = 0; k <= window_points; ++k) {
        const double t =
            cfg.floor_horizon + cfg.floor_horizon * static_cast<double>(k) / window_points;
        const Vec x = traj.at(t);
        for (double c : x) fl = std::min(fl, c);
      }
      floors[i] = fl;
    });

    row.trajectories_positive = true;
    row.window_floor = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < starts.size(); ++i) {
      row.trajectories_positive = row.trajectories_positive && positive[i] != 0;
      row.window_floor = std::min(row.window_floor, floors[i]);
    }
    row.passed =
        row.equilibrium_positive && row.trajectories_positive && row.window_floor >= delta;
    report.min_component_floor = std::min(report.min_component_floor, row.window_floor);
    report.rows.push_back(std::move(row));
  }

  report.passed = report.branch_complete;
  for (const auto& row : report.rows) report.passed = report.passed && row.passed;
  return report;
}

Json persistence_to_json(const PersistenceReport& report) {
  Json j;
  j["report_version"] = 1;
  j["tool"] = tool_stamp();
  j["report_type"] = "positive_persistence";
  j["system"] = report.system;
  j["eps_range"] = report.eps_range;
  j["persistence_floor"] = report.delta;
  j["floor_horizon"] = report.floor_horizon;
  j["min_component_floor"] = report.min_component_floor;
  j["branch_complete"] = report.branch_complete;
  if (!report.note.empty()) j["note"] = report.note;
  j["passed"] = report.passed;
  Json rows = Json::array();
  for (const auto& row : report.rows) {
    Json rj;
    rj["eps"] = row.eps;
    rj["x_star"] = vec_to_json(row.x_star);
    rj["equilibrium_positive"] = row.equilibrium_positive;
    rj["trajectories_positive"] = row.trajectories_positive;
    rj["window_floor"] = row.window_floor;
    rj["passed"] = row.passed;
    rows.push_back(rj);
  }
  j["rows"] = rows;
  return j;
}

Json absorbing_to_json(const AbsorbingEstimate& est) {
  Json j;
  j["report_version"] = 1;
  j["tool"] = tool_stamp();
  j["report_type"] = "absorbing";
  j["eps"] = est.eps;
  Json k0;
  k0["center"] = vec_to_json(est.k0.center);
  k0["radius"] = est.k0.radius;
  j["k0"] = k0;
  j["t0"] = est.t0;
  j["all_absorbed"] = est.all_absorbed;
  Json entries = Json::array();
  for (const auto& rec : est.entries) {
    Json ej;
    ej["x0"] = vec_to_json(rec.x0);
    if (rec.entry_time)
      ej["entry_time"] = *rec.entry_time;
    else
      ej["entry_time"] = nullptr;
    ej["verified_until"] = rec.verified_until;
    ej["status"] = to_string(rec.status);
    entries.push_back(ej);
  }
  j["entries"] = entries;
  return j;
}

Json attractor_to_json(const AttractorEstimate& est) {
  Json j;
  j["report_version"] = 1;
  j["tool"] = tool_stamp();
  j["report_type"] = "attractor";
  j["eps"] = est.eps;
  j["t_burn"] = est.t_burn;
  j["diameter"] = est.diameter;
  j["centroid"] = est.centroid.empty() ? Json::array() : vec_to_json(est.centroid);
  j["complete"] = est.complete;
  Json cloud = Json::array();
  for (const auto& p : est.cloud) cloud.push_back(vec_to_json(p));
  j["cloud"] = cloud;
  Json failures = Json::array();
  for (const auto& f : est.failures) failures.push_back(f);
  j["failures"] = failures;
  return j;
}

}  // namespace persist
