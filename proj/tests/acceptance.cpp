// Acceptance suite: every release criterion in one binary, one PASS/FAIL
// line each, with the measured runtime against the stated budget. Exits
// nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "persist/certify.hpp"
#include "persist/error.hpp"
#include "persist/expr.hpp"
#include "persist/integrate.hpp"
#include "persist/json_io.hpp"
#include "persist/version.hpp"
#include "persist/model.hpp"
#include "persist/spectral.hpp"

#ifndef PERSIST_CLI_PATH
#define PERSIST_CLI_PATH "persist"
#endif

using namespace persist;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  std::string name;
  double budget_seconds;
  bool passed = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      notes.push_back(what);
    }
  }
};

int g_failures = 0;

template <typename Fn>
void run_criterion(int k, const std::string& name, double budget_seconds, Fn&& fn) {
  Criterion c{name, budget_seconds, true, {}};
  const auto start = std::chrono::steady_clock::now();
  try {
    fn(c);
  } catch (const std::exception& e) {
    c.require(false, std::string("exception: ") + e.what());
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  c.require(elapsed < budget_seconds,
            "runtime " + std::to_string(elapsed) + " s exceeds budget " +
                std::to_string(budget_seconds) + " s");
  std::printf("[%d/9] %-58s %s (%.2f s)\n", k, name.c_str(), c.passed ? "PASS" : "FAIL", elapsed);
  if (!c.passed) {
    ++g_failures;
    for (const auto& note : c.notes) std::printf("      - %s\n", note.c_str());
  }
}

fs::path scratch_dir(const std::string& tag) {
  const fs::path dir =
      fs::temp_directory_path() / ("persist_acceptance_" + std::to_string(::getpid())) / tag;
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PERSIST_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WEXITSTATUS(status);
}

std::string fmt(double v) { return format_double(v); }

}  // namespace

int main() {
  std::printf("acceptance suite: %s %s\n", kToolName, kToolVersion);

  // 1. Closed-form branch reproduction on linear_nd
  run_criterion(1, "branch reproduction: linear_nd x*(eps) = (eps, eps/2)", 1.0, [](Criterion& c) {
    const SystemDef sys = builtin_model("linear_nd");
    ContinuationConfig cfg;
    cfg.n_nodes = 21;
    const EquilibriumBranch branch = continue_equilibrium(sys, 0.2, cfg, {0.0, 0.0});
    c.require(branch.nodes.size() == 21, "expected 21 nodes");
    double max_err = 0.0;
    for (const auto& node : branch.nodes) {
      max_err = std::max({max_err, std::abs(node.x_star[0] - node.eps),
                          std::abs(node.x_star[1] - 0.5 * node.eps)});
      c.require(node.spectral.index == 2,
                "index " + std::to_string(node.spectral.index) + " at eps = " + fmt(node.eps));
    }
    c.require(max_err < 1e-10, "max node error " + fmt(max_err) + " >= 1e-10");
  });

  // 2. Theorem-2 certificate on linear1d
  run_criterion(2, "certificate: linear1d, eta = 0.2", 10.0, [](Criterion& c) {
    const SystemDef sys = builtin_model("linear1d");
    const CertifyConfig cfg;
    const PersistenceCertificate cert = certify_persistence(sys, 0.2, cfg);
    c.require(cert.certified, "verdict is not certified: " + cert.refusal_reason);
    if (!cert.certified) return;
    c.require(std::abs(*cert.T_eta - std::log(100.0)) < 1e-3,
              "T_eta " + fmt(*cert.T_eta) + " not within 1e-3 of ln(100)");
    const double closed_eps_hat = 0.1 / (1.0 - std::exp(-*cert.T_eta));
    const double resolution = cfg.eps_hat_resolution_factor * sys.eps0();
    c.require(std::abs(closed_eps_hat - 0.101) < 1e-3,
              "closed-form eps_hat sanity failed: " + fmt(closed_eps_hat));
    c.require(std::abs(*cert.eps_hat - closed_eps_hat) <= resolution + 1e-12,
              "eps_hat " + fmt(*cert.eps_hat) + " not within the bisection resolution " +
                  fmt(resolution) + " of " + fmt(closed_eps_hat));
    for (const auto& row : cert.final_sweep)
      c.require(row.max_endpoint_error < 1e-6,
                "final sweep error " + fmt(row.max_endpoint_error) + " at eps = " + fmt(row.eps));
  });

  // 3. Theorem-2 certificate on logistic
  run_criterion(3, "certificate: logistic, eta = 0.2", 20.0, [](Criterion& c) {
    const SystemDef sys = builtin_model("logistic");
    const PersistenceCertificate cert = certify_persistence(sys, 0.2, CertifyConfig{});
    c.require(cert.certified, "verdict is not certified: " + cert.refusal_reason);
    if (!cert.certified) return;
    for (const auto& node : cert.branch->nodes)
      if (std::abs(node.eps) <= *cert.eps_star + 1e-12)
        c.require(std::abs(node.x_star[0] - (1.0 - node.eps)) < 1e-8,
                  "x*(" + fmt(node.eps) + ") = " + fmt(node.x_star[0]) +
                      " off the analytic branch 1 - eps");
    int checked = 0;
    for (const auto& row : cert.attractor_rows)
      if (std::abs(row.eps) <= *cert.eps_star + 1e-12) {
        ++checked;
        c.require(row.contained,
                  "attractor containment failed at certified eps = " + fmt(row.eps));
      }
    c.require(checked > 0, "no attractor rows inside the certified range");
  });

  // 4. Hypothesis refusal: the center fixture through the CLI
  run_criterion(4, "refusal: center fixture exits 2 at the Hurwitz step", 1.0, [](Criterion& c) {
    const fs::path out = scratch_dir("center");
    const int code =
        run_cli("certify --model builtin:center --eta 0.2 --out " + out.string());
    c.require(code == 2, "exit code " + std::to_string(code) + " != 2");
    const Json j = parse_json(read_text_file((out / "report.json").string()), "report");
    c.require(j["verdict"] == "refused", "verdict is not refused");
    c.require(j["refusal"]["step"] == "hurwitz_check",
              "refusal step is not hurwitz_check");
    for (const char* field : {"eps_star", "T_eta", "eps_hat", "branch", "basin", "attractor"})
      c.require(!j.contains(field), std::string("refused certificate carries '") + field + "'");
  });

  // 5. Corollary-2 closeness on linear1d
  run_criterion(5, "closeness: linear1d, eta = 0.2, eps = 0.05", 5.0, [](Criterion& c) {
    const SystemDef sys = builtin_model("linear1d");
    const ClosenessReport report =
        check_uniform_closeness(sys, 0.2, {0.05, -0.05}, ClosenessConfig{});
    c.require(report.passed, "closeness did not pass");
    double sup = 0.0;
    for (const auto& pair : report.pairs) {
      sup = std::max(sup, pair.sup_d);
      c.require(pair.max_dominance_violation <= 1e-9,
                "triangle dominance violated by " + fmt(pair.max_dominance_violation));
    }
    c.require(std::abs(sup - 0.05) < 1e-4,
              "sup_t d = " + fmt(sup) + " not within 1e-4 of the closed form 0.05");
  });

  // 6. Corollary-1 positivity on the chemostat
  run_criterion(6, "positivity: chemostat, eps range 0.1", 30.0, [](Criterion& c) {
    const SystemDef sys = builtin_model("chemostat");
    const PersistenceReport report = check_positive_persistence(sys, 0.1, {});
    c.require(report.passed, "persistence did not pass");
    bool found_zero = false;
    for (const auto& row : report.rows) {
      c.require(row.trajectories_positive,
                "non-positive trajectory sample at eps = " + fmt(row.eps));
      if (row.eps == 0.0) {
        found_zero = true;
        c.require(std::abs(row.x_star[0] - 1.0) < 1e-8 && std::abs(row.x_star[1] - 1.0) < 1e-8,
                  "eps = 0 equilibrium " + fmt(row.x_star[0]) + ", " + fmt(row.x_star[1]) +
                      " not within 1e-8 of (1, 1)");
      }
    }
    c.require(found_zero, "no eps = 0 row");
  });

  // 7. Integrator order check
  run_criterion(7, "integrator order: fixed-step slope in [4.5, 5.5]", 1.0, [](Criterion& c) {
    const SystemDef sys = builtin_model("linear1d");
    const std::vector<double> hs = {0.1, 0.05, 0.025};
    std::vector<double> errs;
    for (double h : hs) {
      IntegratorConfig cfg;
      cfg.fixed_step = h;
      errs.push_back(std::abs(integrate(sys, 0.0, {1.0}, 1.0, cfg).x_last()[0] - std::exp(-1.0)));
    }
    const double slope = std::log(errs.front() / errs.back()) / std::log(hs.front() / hs.back());
    c.require(slope >= 4.5 && slope <= 5.5, "slope " + fmt(slope) + " outside [4.5, 5.5]");
  });

  // 8. Symbolic-derivative property
  run_criterion(8, "derivatives vs central differences: 200 random trees", 5.0, [](Criterion& c) {
    std::mt19937 rng(20250810);
    const std::vector<std::string> vars = {"x1", "x2", "x3"};
    std::uniform_real_distribution<double> bind(0.2, 2.0);
    int checked = 0;
    int failures = 0;
    while (checked < 200) {
      const expr::Ast a = oracles::random_ast(rng, vars, 4);
      std::map<std::string, double> at;
      for (const auto& v : vars) at[v] = bind(rng);
      const std::string var = vars[checked % vars.size()];
      double sym, fd;
      try {
        sym = expr::eval(expr::differentiate(a, var), at);
        fd = oracles::central_diff(
            [&](double x) {
              auto b = at;
              b[var] = x;
              return expr::eval(a, b);
            },
            at.at(var));
      } catch (const EvalError&) {
        continue;
      }
      if (!std::isfinite(fd)) continue;
      if (std::abs(sym - fd) > 1e-6 * (1.0 + std::abs(sym))) ++failures;
      ++checked;
    }
    c.require(failures == 0, std::to_string(failures) + " of 200 trees failed the 1e-6 check");
  });

  // 9. Determinism: byte-identical certify reports through the CLI
  run_criterion(9, "determinism: repeat certify runs byte-identical", 30.0, [](Criterion& c) {
    const fs::path out1 = scratch_dir("det1");
    const fs::path out2 = scratch_dir("det2");
    const int c1 =
        run_cli("certify --model builtin:logistic --eta 0.2 --out " + out1.string());
    const int c2 =
        run_cli("certify --model builtin:logistic --eta 0.2 --out " + out2.string());
    c.require(c1 == 0 && c2 == 0,
              "exit codes " + std::to_string(c1) + ", " + std::to_string(c2));
    const std::string r1 = read_text_file((out1 / "report.json").string());
    const std::string r2 = read_text_file((out2 / "report.json").string());
    c.require(!r1.empty() && r1 == r2, "reports differ between consecutive runs");
  });

  std::error_code ec;
  fs::remove_all(fs::temp_directory_path() / ("persist_acceptance_" + std::to_string(::getpid())),
                 ec);

  if (g_failures == 0) {
    std::printf("all 9 acceptance criteria passed\n");
    return 0;
  }
  std::printf("%d acceptance criterion(s) FAILED\n", g_failures);
  return 1;
}
