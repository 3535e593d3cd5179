#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "persist/error.hpp"
#include "persist/model.hpp"
#include "persist/spectral.hpp"

using namespace persist;

namespace {

SystemDef custom1d(const std::string& component, double lo, double hi, double eps0 = 0.5) {
  DomainSpec dom;
  dom.lo = {lo};
  dom.hi = {hi};
  dom.working_lo = {lo};
  dom.working_hi = {hi};
  return SystemDef("custom", 1, {component}, eps0, dom, false, {});
}

Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const int n = static_cast<int>(rows.size());
  Matrix m(n, static_cast<int>(rows.begin()->size()));
  int i = 0;
  for (const auto& row : rows) {
    int j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("newton solves the documented equilibria") {
  const SystemDef lin = builtin_model("linear1d");
  const NewtonResult a = newton_equilibrium(lin, 0.25, {0.0});
  CHECK(std::abs(a.x[0] - 0.25) < 1e-12);
  CHECK(a.residual < 1e-12);

  const SystemDef logi = builtin_model("logistic");
  const NewtonResult b = newton_equilibrium(logi, 0.1, {0.5});
  CHECK(std::abs(b.x[0] - 0.9) < 1e-8);

  // gradient2d: x1 solves x + x^3 = eps, x2 = eps*x1/2; bisection oracle
  const SystemDef grad = builtin_model("gradient2d");
  const NewtonResult c = newton_equilibrium(grad, 0.1, {0.0, 0.0});
  const double root =
      oracles::bisect_root([](double x) { return x + x * x * x - 0.1; }, 0.0, 1.0, 1e-13);
  CHECK(root == doctest::Approx(0.09902885).epsilon(1e-6));
  CHECK(std::abs(c.x[0] - root) < 1e-8);
  CHECK(std::abs(c.x[1] - 0.05 * c.x[0]) < 1e-10);
}

TEST_CASE("newton failure modes") {
  // singular Jacobian: f = x^2 + 1 has J = 2x = 0 at the initial guess
  const SystemDef square = custom1d("x1*x1 + 1", -2.0, 2.0);
  CHECK_THROWS_AS(newton_equilibrium(square, 0.0, {0.0}), SpectralError);
  // no root inside the domain box: f = -x + 5 on [-2, 2]
  const SystemDef offset = custom1d("-x1 + 5", -2.0, 2.0);
  CHECK_THROWS_AS(newton_equilibrium(offset, 0.0, {0.0}), SpectralError);
  // guess outside the domain
  const SystemDef lin = builtin_model("linear1d");
  CHECK_THROWS_AS(newton_equilibrium(lin, 0.0, {50.0}), SpectralError);
}

TEST_CASE("eigenvalues: closed forms for n <= 2") {
  const auto d = eigenvalues(from_rows({{-1, 0}, {0, -2}}));
  CHECK(d[0] == std::complex<double>(-2.0, 0.0));
  CHECK(d[1] == std::complex<double>(-1.0, 0.0));

  const auto rot = eigenvalues(from_rows({{0, 1}, {-1, 0}}));
  CHECK(rot[0].real() == doctest::Approx(0.0));
  CHECK(rot[0].imag() == doctest::Approx(-1.0));
  CHECK(rot[1].imag() == doctest::Approx(1.0));

  CHECK(eigenvalues(from_rows({{3.5}}))[0] == std::complex<double>(3.5, 0.0));

  // defective: a Jordan block
  const auto j = eigenvalues(from_rows({{1, 1}, {0, 1}}));
  CHECK(j[0].real() == doctest::Approx(1.0));
  CHECK(j[1].real() == doctest::Approx(1.0));
}

TEST_CASE("QR eigenvalues match known spectra of companion matrices") {
  // (x+1)(x+2)(x+3) = x^3 + 6x^2 + 11x + 6
  const auto real3 = eigenvalues(oracles::companion({6, 11, 6}));
  CHECK(real3[0].real() == doctest::Approx(-3.0).epsilon(1e-8));
  CHECK(real3[1].real() == doctest::Approx(-2.0).epsilon(1e-8));
  CHECK(real3[2].real() == doctest::Approx(-1.0).epsilon(1e-8));
  for (const auto& ev : real3) CHECK(std::abs(ev.imag()) < 1e-8);

  // (x^2+1)(x^2+2x+5) = x^4 + 2x^3 + 6x^2 + 2x + 5: roots +-i and -1 +- 2i
  const auto mixed = eigenvalues(oracles::companion({5, 2, 6, 2}));
  CHECK(mixed[0].real() == doctest::Approx(-1.0));
  CHECK(mixed[0].imag() == doctest::Approx(-2.0));
  CHECK(mixed[1].real() == doctest::Approx(-1.0));
  CHECK(mixed[1].imag() == doctest::Approx(2.0));
  CHECK(mixed[2].real() == doctest::Approx(0.0));
  CHECK(std::abs(mixed[2].imag()) == doctest::Approx(1.0));
}

TEST_CASE("QR eigenvalues agree with the characteristic-polynomial oracle") {
  std::mt19937 rng(424242);
  std::uniform_real_distribution<double> entry(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial % 4;  // 3..6
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) m(i, j) = m(j, i) = entry(rng);  // symmetric
    auto mine = eigenvalues(m);
    auto poly = oracles::characteristic_polynomial(m);
    auto roots = oracles::durand_kerner(poly);
    oracles::sort_complex(roots);
    REQUIRE(roots.size() == mine.size());
    for (std::size_t i = 0; i < mine.size(); ++i) {
      CHECK(std::abs(mine[i].real() - roots[i].real()) < 1e-8);
      CHECK(std::abs(mine[i].imag() - roots[i].imag()) < 1e-8);
    }
  }
}

TEST_CASE("QR handles nonsymmetric matrices with complex spectra") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> entry(-1.5, 1.5);
  for (int trial = 0; trial < 12; ++trial) {
    const int n = 4 + trial % 2;
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = entry(rng);
    auto mine = eigenvalues(m);
    auto roots = oracles::durand_kerner(oracles::characteristic_polynomial(m));
    oracles::sort_complex(roots);
    for (std::size_t i = 0; i < mine.size(); ++i) {
      CHECK(std::abs(mine[i].real() - roots[i].real()) < 1e-7);
      CHECK(std::abs(mine[i].imag() - roots[i].imag()) < 1e-7);
    }
  }
}

TEST_CASE("classify implements the index/hyperbolic/Hurwitz contracts") {
  const SpectralSummary stable = classify(from_rows({{-1, 0}, {0, -2}}));
  CHECK(stable.index == 2);
  CHECK(stable.hyperbolic);
  CHECK(stable.hurwitz);
  CHECK(stable.spectral_abscissa == doctest::Approx(-1.0));

  const SpectralSummary saddle = classify(from_rows({{1, 0}, {0, -1}}));
  CHECK(saddle.index == 1);
  CHECK(saddle.hyperbolic);
  CHECK_FALSE(saddle.hurwitz);

  const SpectralSummary center = classify(from_rows({{0, 1}, {-1, 0}}));
  CHECK_FALSE(center.hyperbolic);
  CHECK_FALSE(center.hurwitz);

  // hurwitz iff spectral_abscissa < -tol
  for (double a : {-1.0, -1e-10, 0.0, 1e-10, 0.5}) {
    const SpectralSummary s = classify(from_rows({{a}}), 1e-9);
    CHECK(s.hurwitz == (s.spectral_abscissa < -1e-9));
  }
}

TEST_CASE("continuation reproduces closed-form branches") {
  ContinuationConfig cfg;
  cfg.n_nodes = 5;

  const SystemDef lin = builtin_model("linear1d");
  const EquilibriumBranch a = continue_equilibrium(lin, 0.2, cfg, {0.0});
  REQUIRE(a.nodes.size() == 5);
  CHECK(a.index0 == 1);
  for (const auto& node : a.nodes) {
    CHECK(std::abs(node.x_star[0] - node.eps) < 1e-12);
    CHECK(node.spectral.index == 1);
    CHECK(node.newton_residual < 1e-10);
  }
  CHECK(a.eps1() == doctest::Approx(0.2));
  CHECK(a.eps2() == doctest::Approx(0.2));

  const SystemDef logi = builtin_model("logistic");
  const EquilibriumBranch b = continue_equilibrium(logi, 0.2, cfg, {1.05});
  for (const auto& node : b.nodes) {
    CHECK(std::abs(node.x_star[0] - (1.0 - node.eps)) < 1e-9);
    CHECK(node.jac(0, 0) == doctest::Approx(-(1.0 - node.eps)).epsilon(1e-8));
    CHECK(node.spectral.index == 1);
  }

  const SystemDef nd = builtin_model("linear_nd");
  const EquilibriumBranch c = continue_equilibrium(nd, 0.2, cfg, {0.0, 0.0});
  CHECK(c.index0 == 2);
  for (const auto& node : c.nodes) {
    CHECK(std::abs(node.x_star[0] - node.eps) < 1e-10);
    CHECK(std::abs(node.x_star[1] - 0.5 * node.eps) < 1e-10);
    CHECK(node.spectral.eigenvalues[0].real() == doctest::Approx(-2.0).epsilon(1e-9));
    CHECK(node.spectral.eigenvalues[1].real() == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(node.spectral.index == 2);
  }
}

TEST_CASE("continuation refuses a non-Hurwitz equilibrium at eps = 0") {
  const SystemDef sys = builtin_model("center");
  ContinuationConfig cfg;
  cfg.n_nodes = 5;
  CHECK_THROWS_AS(continue_equilibrium(sys, 0.2, cfg, {0.0, 0.0}), Refusal);
}

TEST_CASE("continuation truncates a direction on loss of hyperbolicity") {
  // J(eps) = -(0.1 - eps): crosses zero exactly at the +0.1 grid node
  const SystemDef sys = custom1d("-(0.1 - eps)*x1", -1.0, 1.0);
  ContinuationConfig cfg;
  cfg.n_nodes = 5;  // grid -0.2 -0.1 0 0.1 0.2
  const EquilibriumBranch branch = continue_equilibrium(sys, 0.2, cfg, {0.0});
  CHECK(branch.limit_newton_neg == doctest::Approx(0.2));
  CHECK(branch.limit_index_neg == doctest::Approx(0.2));
  CHECK(branch.limit_newton_pos == doctest::Approx(0.1));  // newton converged there
  CHECK(branch.limit_index_pos == 0.0);                    // but classification failed
  CHECK(branch.eps1() == doctest::Approx(0.1));
  CHECK(branch.eps2() == 0.0);
  CHECK(!branch.stop_reason_pos.empty());
  CHECK(branch.stop_reason_neg.empty());
  // the +0.2 node was never attempted
  CHECK(branch.find(0.2) == nullptr);
  REQUIRE(branch.find(0.1) != nullptr);
  CHECK_FALSE(branch.find(0.1)->spectral.hyperbolic);
}

TEST_CASE("index constancy along hyperbolic branches") {
  ContinuationConfig cfg;
  cfg.n_nodes = 21;
  for (const char* name : {"linear1d", "linear_nd", "logistic", "gradient2d", "chemostat"}) {
    const SystemDef sys = builtin_model(name);
    const EquilibriumBranch branch =
        continue_equilibrium(sys, sys.eps0(), cfg, sys.domain().working_center());
    for (const auto& node : branch.nodes)
      if (node.spectral.hyperbolic) CHECK(node.spectral.index == branch.index0);
  }
}

TEST_CASE("jacobian growth bound: analytic values") {
  ContinuationConfig cfg;
  cfg.n_nodes = 21;
  const SystemDef lin = builtin_model("linear1d");
  CHECK(jacobian_growth_bound(continue_equilibrium(lin, 0.5, cfg, {0.0})) == 0.0);

  const SystemDef logi = builtin_model("logistic");
  // J(eps) = -(1-eps), J0 = -1, |J - J0|/|eps| = 1
  CHECK(jacobian_growth_bound(continue_equilibrium(logi, 0.5, cfg, {1.05})) ==
        doctest::Approx(1.0).epsilon(1e-6));

  // gradient2d: ||J_eps - J0||_F = sqrt((3 x1(eps)^2)^2 + eps^2); analytic
  // via the bisection root of x + x^3 = eps at the worst grid node
  const SystemDef grad = builtin_model("gradient2d");
  const EquilibriumBranch branch = continue_equilibrium(grad, 0.5, cfg, {0.0, 0.0});
  double analytic = 0.0;
  for (const auto& node : branch.nodes) {
    if (node.eps == 0.0) continue;
    const double root = oracles::bisect_root(
        [&](double x) { return x + x * x * x - node.eps; }, -1.0, 1.0, 1e-13);
    const double f = std::hypot(3.0 * root * root, node.eps) / std::abs(node.eps);
    analytic = std::max(analytic, f);
  }
  const double mine = jacobian_growth_bound(branch);
  CHECK(mine == doctest::Approx(analytic).epsilon(1e-6));

  // stability under grid refinement
  ContinuationConfig fine = cfg;
  fine.n_nodes = 41;
  const double refined = jacobian_growth_bound(continue_equilibrium(grad, 0.5, fine, {0.0, 0.0}));
  CHECK(std::abs(refined - mine) / mine < 0.10);
}

TEST_CASE("branch CSV export") {
  ContinuationConfig cfg;
  cfg.n_nodes = 3;
  const EquilibriumBranch branch =
      continue_equilibrium(builtin_model("linear_nd"), 0.2, cfg, {0.0, 0.0});
  std::ostringstream out;
  write_branch_csv(out, branch);
  CHECK(out.str().rfind("eps,x1*,x2*,spectral_abscissa,index,residual\n", 0) == 0);
  CHECK(out.str().find("\n0,0,0,") != std::string::npos);  // eps = 0 row, x* = origin
}

TEST_CASE("eigenvalue input validation") {
  CHECK_THROWS_AS(eigenvalues(Matrix(2, 3)), SpectralError);
  Matrix bad(2, 2);
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(eigenvalues(bad), SpectralError);
}
