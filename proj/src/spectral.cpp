#include "persist/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "persist/error.hpp"
#include "persist/json_io.hpp"

namespace persist {

// ---------------------------------------------------------------------------
// Newton
// ---------------------------------------------------------------------------

NewtonResult newton_equilibrium(const SystemDef& sys, double eps, const Vec& guess,
                                const NewtonOptions& opts) {
  if (!(opts.tol > 0.0)) throw SpectralError("newton tolerance must be positive");
  if (!sys.domain().contains(guess, sys.positive_cone()))
    throw SpectralError("newton guess outside the model domain");

  Vec x = guess;
  Vec fx = sys.eval_field(x, eps);
  double r = norm2(fx);
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    if (r <= opts.tol) return {x, r, iter};

    const Matrix jac = sys.jacobian(x, eps);
    const Lu lu(jac);
    const double cond = condition1(jac, lu);
    if (!(cond <= opts.cond_limit))
      throw SpectralError("singular Jacobian at newton iterate (condition estimate " +
                          format_double(cond) + ")");
    Vec rhs(fx.size());
    for (std::size_t i = 0; i < fx.size(); ++i) rhs[i] = -fx[i];
    const Vec dx = lu.solve(std::move(rhs));

    const double phi0 = r * r;
    double lambda = 1.0;
    bool accepted = false;
    bool any_in_domain = false;
    for (int halving = 0; halving <= opts.max_halvings; ++halving) {
      Vec xn(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) xn[i] = x[i] + lambda * dx[i];
      if (sys.domain().contains(xn, sys.positive_cone())) {
        any_in_domain = true;
        try {
          Vec fn = sys.eval_field(xn, eps);
          const double rn = norm2(fn);
          if (rn * rn < phi0) {
            x = std::move(xn);
            fx = std::move(fn);
            r = rn;
            accepted = true;
            break;
          }
        } catch (const EvalError&) {
          // domain error at the trial point; shorten the step
        }
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      if (!any_in_domain) throw SpectralError("newton iterate left the domain box");
      throw SpectralError("newton line search stalled (residual " + format_double(r) + ")");
    }
  }
  if (r <= opts.tol) return {x, r, opts.max_iter};
  throw SpectralError("newton did not converge within " + std::to_string(opts.max_iter) +
                      " iterations (residual " + format_double(r) + ")");
}

// ---------------------------------------------------------------------------
// Eigenvalues: Hessenberg reduction + Francis double-shift QR
// ---------------------------------------------------------------------------

namespace {

inline double sign_with(double magnitude, double sign_of) {
  return sign_of >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude);
}

// Reduces to upper Hessenberg form by stabilized elementary similarity
// transformations; entries below the first subdiagonal are zeroed.
void hessenberg_reduce(Matrix& a) {
  const int n = a.rows();
  for (int m = 1; m < n - 1; ++m) {
    double x = 0.0;
    int piv = m;
    for (int j = m; j < n; ++j) {
      if (std::abs(a(j, m - 1)) > std::abs(x)) {
        x = a(j, m - 1);
        piv = j;
      }
    }
    if (piv != m) {
      for (int j = m - 1; j < n; ++j) std::swap(a(piv, j), a(m, j));
      for (int j = 0; j < n; ++j) std::swap(a(j, piv), a(j, m));
    }
    if (x != 0.0) {
      for (int i = m + 1; i < n; ++i) {
        double y = a(i, m - 1);
        if (y != 0.0) {
          y /= x;
          a(i, m - 1) = y;
          for (int j = m; j < n; ++j) a(i, j) -= y * a(m, j);
          for (int j = 0; j < n; ++j) a(j, m) += y * a(j, i);
        }
      }
    }
  }
  for (int i = 2; i < n; ++i)
    for (int j = 0; j < i - 1; ++j) a(i, j) = 0.0;
}

// Francis double-shift QR on an upper Hessenberg matrix; eigenvalues only.
// Exceptional shifts every ten sweeps per active block; gives up after
// 100*n sweeps in total.
std::vector<std::complex<double>> hessenberg_qr(Matrix a) {
  const int n = a.rows();
  std::vector<std::complex<double>> eig(n);
  const double eps = std::numeric_limits<double>::epsilon();

  double anorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));
  if (anorm == 0.0) anorm = 1.0;

  long total_sweeps = 0;
  const long sweep_limit = 100L * n;

  int nn = n - 1;
  double t = 0.0;
  while (nn >= 0) {
    int its = 0;
    int l;
    do {
      for (l = nn; l >= 1; --l) {
        double s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(a(l, l - 1)) <= eps * s) {
          a(l, l - 1) = 0.0;
          break;
        }
      }
      if (l < 0) l = 0;
      double x = a(nn, nn);
      if (l == nn) {
        eig[nn--] = {x + t, 0.0};
      } else {
        double y = a(nn - 1, nn - 1);
        double w = a(nn, nn - 1) * a(nn - 1, nn);
        if (l == nn - 1) {
          double p = 0.5 * (y - x);
          double q = p * p + w;
          double z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_with(z, p);
            eig[nn - 1] = eig[nn] = {x + z, 0.0};
            if (z != 0.0) eig[nn] = {x - w / z, 0.0};
          } else {
            eig[nn - 1] = {x + p, z};
            eig[nn] = {x + p, -z};
          }
          nn -= 2;
        } else {
          if (++total_sweeps > sweep_limit)
            throw SpectralError("QR iteration did not converge after " +
                                std::to_string(sweep_limit) + " sweeps");
          if (its != 0 && its % 10 == 0) {
            // exceptional shift
            t += x;
            for (int i = 0; i <= nn; ++i) a(i, i) -= x;
            const double s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
            y = x = 0.75 * s;
            w = -0.4375 * s * s;
          }
          ++its;
          int m;
          double p = 0.0, q = 0.0, r = 0.0;
          for (m = nn - 2; m >= l; --m) {
            const double z = a(m, m);
            const double rr = x - z;
            const double ss = y - z;
            p = (rr * ss - w) / a(m + 1, m) + a(m, m + 1);
            q = a(m + 1, m + 1) - z - rr - ss;
            r = a(m + 2, m + 1);
            const double scale = std::abs(p) + std::abs(q) + std::abs(r);
            p /= scale;
            q /= scale;
            r /= scale;
            if (m == l) break;
            const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
            const double v =
                std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) + std::abs(a(m + 1, m + 1)));
            if (u <= eps * v) break;
          }
          if (m < l) m = l;
          for (int i = m + 2; i <= nn; ++i) {
            a(i, i - 2) = 0.0;
            if (i != m + 2) a(i, i - 3) = 0.0;
          }
          for (int k = m; k <= nn - 1; ++k) {
            if (k != m) {
              p = a(k, k - 1);
              q = a(k + 1, k - 1);
              r = k != nn - 1 ? a(k + 2, k - 1) : 0.0;
              x = std::abs(p) + std::abs(q) + std::abs(r);
              if (x != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            const double s = sign_with(std::sqrt(p * p + q * q + r * r), p);
            if (s == 0.0) continue;
            if (k == m) {
              if (l != m) a(k, k - 1) = -a(k, k - 1);
            } else {
              a(k, k - 1) = -s * x;
            }
            p += s;
            x = p / s;
            y = q / s;
            double z = r / s;
            q /= p;
            r /= p;
            for (int j = k; j <= nn; ++j) {
              double pp = a(k, j) + q * a(k + 1, j);
              if (k != nn - 1) {
                pp += r * a(k + 2, j);
                a(k + 2, j) -= pp * z;
              }
              a(k + 1, j) -= pp * y;
              a(k, j) -= pp * x;
            }
            const int mmin = std::min(nn, k + 3);
            for (int i = l; i <= mmin; ++i) {
              double pp = x * a(i, k) + y * a(i, k + 1);
              if (k != nn - 1) {
                pp += z * a(i, k + 2);
                a(i, k + 2) -= pp * r;
              }
              a(i, k + 1) -= pp * q;
              a(i, k) -= pp;
            }
          }
        }
      }
    } while (l < nn - 1);
  }
  return eig;
}

}  // namespace

std::vector<std::complex<double>> eigenvalues(const Matrix& m) {
  const int n = m.rows();
  if (n < 1 || m.cols() != n) throw SpectralError("eigenvalues need a square matrix of order >= 1");
  for (double v : m.data())
    if (!std::isfinite(v)) throw SpectralError("non-finite matrix entry");

  std::vector<std::complex<double>> eig;
  if (n == 1) {
    eig = {{m(0, 0), 0.0}};
  } else if (n == 2) {
    const double tr = m(0, 0) + m(1, 1);
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    const double disc = tr * tr - 4.0 * det;
    if (disc >= 0.0) {
      const double s = std::sqrt(disc);
      eig = {{0.5 * (tr - s), 0.0}, {0.5 * (tr + s), 0.0}};
    } else {
      const double im = 0.5 * std::sqrt(-disc);
      eig = {{0.5 * tr, -im}, {0.5 * tr, im}};
    }
  } else {
    Matrix h = m;
    hessenberg_reduce(h);
    eig = hessenberg_qr(std::move(h));
  }
  std::sort(eig.begin(), eig.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return eig;
}

SpectralSummary classify(const Matrix& m, double hyperbolicity_tol) {
  if (!(hyperbolicity_tol > 0.0)) throw SpectralError("hyperbolicity tolerance must be positive");
  SpectralSummary s;
  s.hyperbolicity_tol = hyperbolicity_tol;
  s.eigenvalues = eigenvalues(m);
  s.spectral_abscissa = -std::numeric_limits<double>::infinity();
  s.hyperbolic = true;
  for (const auto& ev : s.eigenvalues) {
    s.spectral_abscissa = std::max(s.spectral_abscissa, ev.real());
    if (ev.real() < -hyperbolicity_tol)
      ++s.index;
    else if (ev.real() <= hyperbolicity_tol)
      s.hyperbolic = false;  // too close to the imaginary axis to classify
  }
  s.hurwitz = s.hyperbolic && s.index == static_cast<int>(s.eigenvalues.size());
  return s;
}

// ---------------------------------------------------------------------------
// Continuation
// ---------------------------------------------------------------------------

const BranchNode& EquilibriumBranch::at_zero() const {
  for (const auto& node : nodes)
    if (node.eps == 0.0) return node;
  throw SpectralError("branch has no eps = 0 node");
}

const BranchNode* EquilibriumBranch::find(double eps) const {
  for (const auto& node : nodes)
    if (node.eps == eps) return &node;
  return nullptr;
}

EquilibriumBranch continue_equilibrium(const SystemDef& sys, double eps_range,
                                       const ContinuationConfig& cfg, const Vec& guess0) {
  if (!(eps_range > 0.0) || eps_range > sys.eps0())
    throw SpectralError("continuation range must lie in (0, eps0]");
  if (cfg.n_nodes < 3 || cfg.n_nodes % 2 == 0)
    throw SpectralError("continuation grid needs an odd node count >= 3");

  const int mid = (cfg.n_nodes - 1) / 2;
  const double spacing = eps_range / mid;
  auto grid_eps = [&](int i) { return spacing * (i - mid); };  // exactly 0 at mid

  EquilibriumBranch branch;
  branch.grid_spacing = spacing;

  // hypothesis check at eps = 0
  BranchNode node0;
  node0.eps = 0.0;
  try {
    const NewtonResult nr = newton_equilibrium(sys, 0.0, guess0, cfg.newton);
    node0.x_star = nr.x;
    node0.newton_residual = nr.residual;
  } catch (const SpectralError& e) {
    throw Refusal("equilibrium", std::string("no equilibrium found at eps = 0: ") + e.what());
  }
  node0.jac = sys.jacobian(node0.x_star, 0.0);
  node0.spectral = classify(node0.jac, cfg.hyperbolicity_tol);
  if (!node0.spectral.hyperbolic)
    throw Refusal("hurwitz_check", "equilibrium not hyperbolic (eigenvalue within " +
                                       format_double(cfg.hyperbolicity_tol) +
                                       " of the imaginary axis)");
  if (!node0.spectral.hurwitz)
    throw Refusal("hurwitz_check",
                  "equilibrium not Hurwitz (index " + std::to_string(node0.spectral.index) +
                      " of " + std::to_string(sys.dim()) + ")");
  branch.index0 = node0.spectral.index;

  std::vector<BranchNode> plus, minus;
  for (int dir = 0; dir < 2; ++dir) {
    const int sgn = dir == 0 ? 1 : -1;
    std::vector<BranchNode>& side = dir == 0 ? plus : minus;
    double& limit_newton = dir == 0 ? branch.limit_newton_pos : branch.limit_newton_neg;
    double& limit_index = dir == 0 ? branch.limit_index_pos : branch.limit_index_neg;
    std::string& stop_reason = dir == 0 ? branch.stop_reason_pos : branch.stop_reason_neg;

    Vec prev_x = node0.x_star;
    Vec prev2_x;  // empty until two nodes exist on this side
    for (int step = 1; step <= mid; ++step) {
      const double eps = grid_eps(mid + sgn * step);
      Vec predictor = prev_x;
      if (!prev2_x.empty())
        for (std::size_t i = 0; i < predictor.size(); ++i)
          predictor[i] = 2.0 * prev_x[i] - prev2_x[i];  // secant, uniform grid
      for (std::size_t i = 0; i < predictor.size(); ++i)
        predictor[i] = std::clamp(predictor[i], sys.domain().lo[i], sys.domain().hi[i]);

      BranchNode node;
      node.eps = eps;
      try {
        const NewtonResult nr = newton_equilibrium(sys, eps, predictor, cfg.newton);
        node.x_star = nr.x;
        node.newton_residual = nr.residual;
      } catch (const Error& e) {
        stop_reason = "newton failed at eps = " + format_double(eps) + ": " + e.what();
        break;
      }
      node.jac = sys.jacobian(node.x_star, eps);
      node.spectral = classify(node.jac, cfg.hyperbolicity_tol);
      limit_newton = std::abs(eps);
      side.push_back(node);
      if (!node.spectral.hyperbolic) {
        stop_reason = "hyperbolicity lost at eps = " + format_double(eps);
        break;
      }
      if (node.spectral.index != branch.index0) {
        stop_reason = "index changed at eps = " + format_double(eps) + " (" +
                      std::to_string(node.spectral.index) + " vs " +
                      std::to_string(branch.index0) + ")";
        break;
      }
      limit_index = std::abs(eps);
      prev2_x = std::move(prev_x);
      prev_x = side.back().x_star;
    }
  }

  for (auto it = minus.rbegin(); it != minus.rend(); ++it) branch.nodes.push_back(std::move(*it));
  branch.nodes.push_back(std::move(node0));
  for (auto& node : plus) branch.nodes.push_back(std::move(node));
  return branch;
}

double jacobian_growth_bound(const EquilibriumBranch& branch) {
  if (branch.nodes.size() < 3)
    throw SpectralError("jacobian growth bound needs a branch with at least 3 nodes");
  const Matrix& j0 = branch.at_zero().jac;
  double c = 0.0;
  for (const auto& node : branch.nodes) {
    if (node.eps == 0.0) continue;
    c = std::max(c, frobenius_norm(node.jac - j0) / std::abs(node.eps));
  }
  return c;
}

void write_branch_csv(std::ostream& out, const EquilibriumBranch& branch) {
  if (branch.nodes.empty()) return;
  const std::size_t n = branch.nodes.front().x_star.size();
  out << "eps";
  for (std::size_t i = 1; i <= n; ++i) out << ",x" << i << "*";
  out << ",spectral_abscissa,index,residual\n";
  for (const auto& node : branch.nodes) {
    out << format_double(node.eps);
    for (std::size_t i = 0; i < n; ++i) out << ',' << format_double(node.x_star[i]);
    out << ',' << format_double(node.spectral.spectral_abscissa) << ',' << node.spectral.index
        << ',' << format_double(node.newton_residual) << "\n";
  }
}

}  // namespace persist
