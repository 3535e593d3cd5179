#include "persist/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "persist/certify.hpp"
#include "persist/error.hpp"
#include "persist/integrate.hpp"
#include "persist/json_io.hpp"
#include "persist/model.hpp"
#include "persist/parallel.hpp"
#include "persist/spectral.hpp"
#include "persist/version.hpp"

namespace fs = std::filesystem;

namespace persist {

namespace {

Vec parse_vec_string(const std::string& text, const std::string& what) {
  Vec v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error("malformed number '" + item + "' in " + what);
    }
  }
  if (v.empty()) throw Error(what + " must contain at least one number");
  return v;
}

const std::vector<std::string> kCommands = {"equilibrium", "continue",  "simulate",
                                            "absorbing",   "attractor", "certify",
                                            "closeness",   "persistence"};

void apply_config_file(RunConfig& cfg, const std::string& path) {
  const Json j = parse_json(read_text_file(path), "config file " + path);
  if (!j.is_object()) throw Error("config file must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const Json& v = it.value();
    if (key == "command")
      cfg.command = v.get<std::string>();
    else if (key == "model")
      cfg.model = v.get<std::string>();
    else if (key == "eta")
      cfg.eta = v.get<double>();
    else if (key == "eps")
      cfg.eps = v.get<double>();
    else if (key == "eps_range")
      cfg.eps_range = v.get<double>();
    else if (key == "t_end")
      cfg.t_end = v.get<double>();
    else if (key == "horizon")
      cfg.horizon = v.get<double>();
    else if (key == "t_burn")
      cfg.t_burn = v.get<double>();
    else if (key == "floor_horizon")
      cfg.floor_horizon = v.get<double>();
    else if (key == "k0_radius")
      cfg.k0_radius = v.get<double>();
    else if (key == "rel_tol")
      cfg.rel_tol = v.get<double>();
    else if (key == "abs_tol")
      cfg.abs_tol = v.get<double>();
    else if (key == "nodes")
      cfg.nodes = v.get<int>();
    else if (key == "halton_count")
      cfg.halton_count = v.get<int>();
    else if (key == "shells")
      cfg.shells = v.get<int>();
    else if (key == "x0")
      cfg.x0 = v.get<Vec>();
    else if (key == "k0_center")
      cfg.k0_center = v.get<Vec>();
    else if (key == "out")
      cfg.output_dir = v.get<std::string>();
    else if (key == "emit_plot_data")
      cfg.emit_plot_data = v.get<bool>();
    else if (key == "threads")
      cfg.threads = v.get<int>();
    else
      throw Error("unknown key '" + key + "' in config file");
  }
}

[[noreturn]] void missing_field(const std::string& name) {
  throw Error("missing required field '" + name + "'");
}

}  // namespace

RunConfig load_config(const std::vector<std::string>& args) {
  CLI::App app{std::string(kToolName) + " " + kToolVersion +
               " - persistence certification for perturbed dissipative ODE systems"};
  app.allow_extras(false);

  std::string command, model, config_path, out_dir, x0_str, k0_center_str;
  double eta = 0, eps = 0, eps_range = 0, t_end = 0, horizon = 0, t_burn = 0, floor_horizon = 0,
         k0_radius = 0, rel_tol = 0, abs_tol = 0;
  int nodes = 0, halton_count = 0, shells = 0, threads = 0;
  bool emit_plot_data = false;

  app.add_option("command", command, "one of: equilibrium continue simulate absorbing attractor certify closeness persistence");
  app.add_option("--model", model, "model file path or builtin:NAME");
  app.add_option("--config", config_path, "JSON config file; flags override its values");
  auto* o_eta = app.add_option("--eta", eta, "closeness radius eta");
  auto* o_eps = app.add_option("--eps", eps, "perturbation size");
  auto* o_eps_range = app.add_option("--eps-range", eps_range, "symmetric eps range");
  auto* o_t_end = app.add_option("--t-end", t_end, "integration end time (simulate)");
  auto* o_horizon = app.add_option("--horizon", horizon, "settle/entry horizon");
  auto* o_t_burn = app.add_option("--t-burn", t_burn, "attractor burn-in time");
  auto* o_floor = app.add_option("--floor-horizon", floor_horizon, "persistence window start");
  auto* o_k0_radius = app.add_option("--k0-radius", k0_radius, "absorbing ball radius");
  auto* o_rel = app.add_option("--rel-tol", rel_tol, "integrator relative tolerance");
  auto* o_abs = app.add_option("--abs-tol", abs_tol, "integrator absolute tolerance");
  auto* o_nodes = app.add_option("--nodes", nodes, "eps grid node count (odd)");
  auto* o_halton = app.add_option("--halton-count", halton_count, "interior sample count");
  auto* o_shells = app.add_option("--shells", shells, "basin shell count");
  auto* o_threads = app.add_option("--threads", threads, "worker cap (PERSIST_THREADS also applies)");
  auto* o_x0 = app.add_option("--x0", x0_str, "start state, comma separated");
  auto* o_k0_center = app.add_option("--k0-center", k0_center_str, "absorbing ball center, comma separated");
  auto* o_out = app.add_option("--out", out_dir, "output directory (default: out)");
  app.add_flag("--emit-plot-data", emit_plot_data, "write plain-text plot data files");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);  // CLI11 consumes in reverse order
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested{app.help()};
  } catch (const CLI::ParseError& e) {
    throw Error(e.what());
  }

  RunConfig cfg;
  if (!config_path.empty()) apply_config_file(cfg, config_path);

  if (!command.empty()) cfg.command = command;
  if (!model.empty()) cfg.model = model;
  if (o_eta->count()) cfg.eta = eta;
  if (o_eps->count()) cfg.eps = eps;
  if (o_eps_range->count()) cfg.eps_range = eps_range;
  if (o_t_end->count()) cfg.t_end = t_end;
  if (o_horizon->count()) cfg.horizon = horizon;
  if (o_t_burn->count()) cfg.t_burn = t_burn;
  if (o_floor->count()) cfg.floor_horizon = floor_horizon;
  if (o_k0_radius->count()) cfg.k0_radius = k0_radius;
  if (o_rel->count()) cfg.rel_tol = rel_tol;
  if (o_abs->count()) cfg.abs_tol = abs_tol;
  if (o_nodes->count()) cfg.nodes = nodes;
  if (o_halton->count()) cfg.halton_count = halton_count;
  if (o_shells->count()) cfg.shells = shells;
  if (o_threads->count()) cfg.threads = threads;
  if (o_x0->count()) cfg.x0 = parse_vec_string(x0_str, "--x0");
  if (o_k0_center->count()) cfg.k0_center = parse_vec_string(k0_center_str, "--k0-center");
  if (o_out->count()) cfg.output_dir = out_dir;
  if (emit_plot_data) cfg.emit_plot_data = true;

  if (cfg.command.empty()) missing_field("command");
  if (std::find(kCommands.begin(), kCommands.end(), cfg.command) == kCommands.end())
    throw Error("unknown command '" + cfg.command + "'");
  if (cfg.model.empty()) missing_field("model");
  return cfg;
}

// ---------------------------------------------------------------------------
// Command execution
// ---------------------------------------------------------------------------

namespace {

Json config_echo(const RunConfig& cfg) {
  Json j;
  j["command"] = cfg.command;
  j["model"] = cfg.model;
  if (cfg.eta) j["eta"] = *cfg.eta;
  if (cfg.eps) j["eps"] = *cfg.eps;
  if (cfg.eps_range) j["eps_range"] = *cfg.eps_range;
  if (cfg.t_end) j["t_end"] = *cfg.t_end;
  if (cfg.horizon) j["horizon"] = *cfg.horizon;
  if (cfg.t_burn) j["t_burn"] = *cfg.t_burn;
  if (cfg.floor_horizon) j["floor_horizon"] = *cfg.floor_horizon;
  if (cfg.k0_center) j["k0_center"] = *cfg.k0_center;
  if (cfg.k0_radius) j["k0_radius"] = *cfg.k0_radius;
  if (cfg.rel_tol) j["rel_tol"] = *cfg.rel_tol;
  if (cfg.abs_tol) j["abs_tol"] = *cfg.abs_tol;
  if (cfg.nodes) j["nodes"] = *cfg.nodes;
  if (cfg.halton_count) j["halton_count"] = *cfg.halton_count;
  if (cfg.shells) j["shells"] = *cfg.shells;
  if (cfg.x0) j["x0"] = *cfg.x0;
  return j;
}

void write_report(const RunConfig& cfg, Json j) {
  j["config"] = config_echo(cfg);
  write_text_file((fs::path(cfg.output_dir) / "report.json").string(), dump_json(j));
}

void write_file_in(const RunConfig& cfg, const std::string& name, const std::string& content) {
  write_text_file((fs::path(cfg.output_dir) / name).string(), content);
}

void write_plot_file(const RunConfig& cfg, const std::string& name, const std::string& content) {
  const fs::path dir = fs::path(cfg.output_dir) / "plots";
  fs::create_directories(dir);
  write_text_file((dir / name).string(), content);
}

const char* kPlotsReadme =
    "Plot data files (whitespace separated, lines starting with # are headers).\n"
    "\n"
    "branch.dat          equilibrium branch: eps, x*(eps) components, spectral\n"
    "                    abscissa, index. Plot x*(eps) columns against eps.\n"
    "r_eps.dat           sampled basin radius per eps with the equilibrium\n"
    "                    shift d(x*(eps), x*); plot both against eps.\n"
    "attractor_cloud.dat attractor endpoint cloud per eps: eps, state\n"
    "                    components. Scatter the state columns, color by eps.\n"
    "deviation.dat       worst-pair deviation d(x_eps(t), x(t)) against t\n"
    "                    (closeness command).\n"
    "floor.dat           late-window component floor per eps (persistence\n"
    "                    command); plot against eps with the delta line.\n"
    "\n"
    "Example (gnuplot): plot 'branch.dat' using 1:2 with linespoints\n";

int resolve_threads(const RunConfig& cfg) {
  return cfg.threads > 0 ? cfg.threads : default_thread_count();
}

IntegratorConfig integrator_from(const RunConfig& cfg) {
  IntegratorConfig icfg;
  if (cfg.rel_tol) icfg.rel_tol = *cfg.rel_tol;
  if (cfg.abs_tol) icfg.abs_tol = *cfg.abs_tol;
  return icfg;
}

CertifyConfig certify_config_from(const RunConfig& cfg) {
  CertifyConfig c;
  c.integrator = integrator_from(cfg);
  if (cfg.nodes) c.eps_nodes = *cfg.nodes;
  if (cfg.halton_count) c.sampling.halton_count = *cfg.halton_count;
  if (cfg.shells) c.shells = *cfg.shells;
  if (cfg.horizon) c.horizon = *cfg.horizon;
  if (cfg.t_burn) c.t_burn = *cfg.t_burn;
  c.threads = resolve_threads(cfg);
  return c;
}

std::string branch_plot_data(const EquilibriumBranch& branch) {
  std::ostringstream out;
  const std::size_t n = branch.nodes.empty() ? 0 : branch.nodes.front().x_star.size();
  out << "# eps";
  for (std::size_t i = 1; i <= n; ++i) out << " x" << i << "*";
  out << " spectral_abscissa index\n";
  for (const auto& node : branch.nodes) {
    out << format_double(node.eps);
    for (double c : node.x_star) out << ' ' << format_double(c);
    out << ' ' << format_double(node.spectral.spectral_abscissa) << ' ' << node.spectral.index
        << "\n";
  }
  return out.str();
}

int cmd_equilibrium(const RunConfig& cfg, const SystemDef& sys) {
  const double eps = cfg.eps.value_or(0.0);
  const Vec guess = cfg.x0 ? *cfg.x0 : sys.domain().working_center();
  const NewtonResult nr = newton_equilibrium(sys, eps, guess);
  const SpectralSummary spec = classify(sys.jacobian(nr.x, eps));
  Json j;
  j["report_version"] = 1;
  Json tool;
  tool["name"] = kToolName;
  tool["version"] = kToolVersion;
  j["tool"] = tool;
  j["report_type"] = "equilibrium";
  j["system"] = sys.name();
  j["eps"] = eps;
  j["x_star"] = nr.x;
  j["newton_residual"] = nr.residual;
  j["newton_iterations"] = nr.iterations;
  Json eig = Json::array();
  for (const auto& ev : spec.eigenvalues) {
    Json e;
    e["re"] = ev.real();
    e["im"] = ev.imag();
    eig.push_back(e);
  }
  j["eigenvalues"] = eig;
  j["spectral_abscissa"] = spec.spectral_abscissa;
  j["index"] = spec.index;
  j["hyperbolic"] = spec.hyperbolic;
  j["hurwitz"] = spec.hurwitz;
  write_report(cfg, j);
  return 0;
}

int cmd_continue(const RunConfig& cfg, const SystemDef& sys) {
  const double range = cfg.eps_range.value_or(sys.eps0());
  ContinuationConfig ccfg;
  if (cfg.nodes) ccfg.n_nodes = *cfg.nodes;
  const Vec guess = cfg.x0 ? *cfg.x0 : sys.domain().working_center();
  const EquilibriumBranch branch = continue_equilibrium(sys, range, ccfg, guess);

  std::ostringstream csv;
  write_branch_csv(csv, branch);
  write_file_in(cfg, "branch.csv", csv.str());
  if (cfg.emit_plot_data) {
    write_plot_file(cfg, "branch.dat", branch_plot_data(branch));
    write_plot_file(cfg, "README", kPlotsReadme);
  }

  Json j;
  j["report_version"] = 1;
  Json tool;
  tool["name"] = kToolName;
  tool["version"] = kToolVersion;
  j["tool"] = tool;
  j["report_type"] = "branch";
  j["system"] = sys.name();
  j["eps_range"] = range;
  j["grid_spacing"] = branch.grid_spacing;
  j["index0"] = branch.index0;
  j["eps1"] = branch.eps1();
  j["eps2"] = branch.eps2();
  if (!branch.stop_reason_pos.empty()) j["stop_reason_pos"] = branch.stop_reason_pos;
  if (!branch.stop_reason_neg.empty()) j["stop_reason_neg"] = branch.stop_reason_neg;
  if (branch.nodes.size() >= 3) j["jacobian_growth_bound"] = jacobian_growth_bound(branch);
  Json nodes = Json::array();
  for (const auto& node : branch.nodes) {
    Json nj;
    nj["eps"] = node.eps;
    nj["x_star"] = node.x_star;
    nj["spectral_abscissa"] = node.spectral.spectral_abscissa;
    nj["index"] = node.spectral.index;
    nj["residual"] = node.newton_residual;
    nodes.push_back(nj);
  }
  j["nodes"] = nodes;
  write_report(cfg, j);
  return 0;
}

int cmd_simulate(const RunConfig& cfg, const SystemDef& sys) {
  if (!cfg.x0) missing_field("x0");
  if (!cfg.t_end) missing_field("t_end");
  const double eps = cfg.eps.value_or(0.0);
  const Trajectory traj = integrate(sys, eps, *cfg.x0, *cfg.t_end, integrator_from(cfg));

  std::ostringstream csv;
  write_trajectory_csv(csv, traj);
  write_file_in(cfg, "trajectory.csv", csv.str());

  Json j;
  j["report_version"] = 1;
  Json tool;
  tool["name"] = kToolName;
  tool["version"] = kToolVersion;
  j["tool"] = tool;
  j["report_type"] = "trajectory";
  j["system"] = sys.name();
  j["eps"] = eps;
  j["status"] = to_string(traj.status);
  j["t_last"] = traj.t_last();
  j["x_last"] = traj.x_last();
  j["samples"] = static_cast<long long>(traj.times.size());
  write_report(cfg, j);
  return 0;
}

int cmd_absorbing(const RunConfig& cfg, const SystemDef& sys) {
  if (!cfg.k0_center) missing_field("k0_center");
  if (!cfg.k0_radius) missing_field("k0_radius");
  const double eps = cfg.eps.value_or(0.0);
  const double horizon = cfg.horizon.value_or(200.0);
  const CertifyConfig ccfg = certify_config_from(cfg);
  const AbsorbingEstimate est =
      estimate_absorbing(sys, eps, Ball{*cfg.k0_center, *cfg.k0_radius}, horizon, ccfg);
  Json j = absorbing_to_json(est);
  j["system"] = sys.name();
  write_report(cfg, j);
  return est.all_absorbed ? 0 : 2;
}

int cmd_attractor(const RunConfig& cfg, const SystemDef& sys) {
  const double eps = cfg.eps.value_or(0.0);
  const double t_burn = cfg.t_burn.value_or(30.0);
  const CertifyConfig ccfg = certify_config_from(cfg);
  const AttractorEstimate est = estimate_attractor(sys, eps, t_burn, ccfg);
  Json j = attractor_to_json(est);
  j["system"] = sys.name();
  write_report(cfg, j);
  if (cfg.emit_plot_data) {
    std::ostringstream out;
    out << "# eps";
    for (int i = 1; i <= sys.dim(); ++i) out << " x" << i;
    out << "\n";
    for (const auto& p : est.cloud) {
      out << format_double(est.eps);
      for (double c : p) out << ' ' << format_double(c);
      out << "\n";
    }
    write_plot_file(cfg, "attractor_cloud.dat", out.str());
    write_plot_file(cfg, "README", kPlotsReadme);
  }
  return est.complete ? 0 : 2;
}

int cmd_certify(const RunConfig& cfg, const SystemDef& sys) {
  if (!cfg.eta) missing_field("eta");
  const CertifyConfig ccfg = certify_config_from(cfg);
  const PersistenceCertificate cert = certify_persistence(sys, *cfg.eta, ccfg);
  write_report(cfg, certificate_to_json(cert));

  if (cert.branch) {
    std::ostringstream csv;
    write_branch_csv(csv, *cert.branch);
    write_file_in(cfg, "branch.csv", csv.str());
  }
  if (cfg.emit_plot_data && cert.certified) {
    write_plot_file(cfg, "branch.dat", branch_plot_data(*cert.branch));
    std::ostringstream r_eps;
    r_eps << "# eps r_eps d_star\n";
    for (const auto& row : cert.basin_table)
      r_eps << format_double(row.eps) << ' ' << format_double(row.r_eps) << ' '
            << format_double(row.d_star) << "\n";
    write_plot_file(cfg, "r_eps.dat", r_eps.str());
    std::ostringstream cloud;
    cloud << "# eps centroid...\n";
    for (const auto& row : cert.attractor_rows) {
      cloud << format_double(row.eps);
      for (double c : row.centroid) cloud << ' ' << format_double(c);
      cloud << "\n";
    }
    write_plot_file(cfg, "attractor_cloud.dat", cloud.str());
    write_plot_file(cfg, "README", kPlotsReadme);
  }
  return cert.certified ? 0 : 2;
}

int cmd_closeness(const RunConfig& cfg, const SystemDef& sys) {
  if (!cfg.eta) missing_field("eta");
  std::vector<double> eps_list;
  if (cfg.eps) {
    eps_list = {*cfg.eps, -*cfg.eps};
  } else if (cfg.eps_range) {
    const int nodes = cfg.nodes.value_or(5);
    if (nodes < 3 || nodes % 2 == 0) throw Error("closeness eps grid needs an odd node count >= 3");
    const int mid = (nodes - 1) / 2;
    for (int i = 0; i < nodes; ++i) eps_list.push_back(*cfg.eps_range / mid * (i - mid));
  } else {
    missing_field("eps");
  }

  ClosenessConfig ccfg;
  ccfg.integrator = integrator_from(cfg);
  if (cfg.halton_count) ccfg.sampling.halton_count = *cfg.halton_count;
  if (cfg.horizon) ccfg.theta_horizon = *cfg.horizon;
  ccfg.threads = resolve_threads(cfg);
  const ClosenessReport report = check_uniform_closeness(sys, *cfg.eta, eps_list, ccfg);
  write_report(cfg, closeness_to_json(report));

  if (cfg.emit_plot_data && report.T > 0.0 && !report.pairs.empty()) {
    // deviation curve for the worst pair
    const ClosenessPair* worst = &report.pairs.front();
    for (const auto& p : report.pairs)
      if (p.sup_d > worst->sup_d) worst = &p;
    const double t_total = ccfg.tail_factor * report.T;
    const Trajectory base = integrate(sys, 0.0, worst->x0, t_total, ccfg.integrator);
    const Trajectory pert = integrate(sys, worst->eps, worst->x0, t_total, ccfg.integrator);
    std::ostringstream out;
    out << "# t deviation (eps = " << format_double(worst->eps) << ")\n";
    const int points = 2000;
    for (int k = 0; k <= points; ++k) {
      const double t = t_total * static_cast<double>(k) / points;
      out << format_double(t) << ' ' << format_double(dist2(pert.at(t), base.at(t))) << "\n";
    }
    write_plot_file(cfg, "deviation.dat", out.str());
    write_plot_file(cfg, "README", kPlotsReadme);
  }
  return report.passed ? 0 : 2;
}

int cmd_persistence(const RunConfig& cfg, const SystemDef& sys) {
  const double range = cfg.eps_range.value_or(sys.eps0());
  PositivePersistenceConfig pcfg;
  pcfg.integrator = integrator_from(cfg);
  if (cfg.nodes) pcfg.eps_nodes = *cfg.nodes;
  if (cfg.halton_count) pcfg.sampling.halton_count = *cfg.halton_count;
  if (cfg.floor_horizon) pcfg.floor_horizon = *cfg.floor_horizon;
  pcfg.threads = resolve_threads(cfg);
  const PersistenceReport report = check_positive_persistence(sys, range, pcfg);
  write_report(cfg, persistence_to_json(report));

  if (cfg.emit_plot_data) {
    std::ostringstream out;
    out << "# eps window_floor delta\n";
    for (const auto& row : report.rows)
      out << format_double(row.eps) << ' ' << format_double(row.window_floor) << ' '
          << format_double(report.delta) << "\n";
    write_plot_file(cfg, "floor.dat", out.str());
    write_plot_file(cfg, "README", kPlotsReadme);
  }
  return report.passed ? 0 : 2;
}

}  // namespace

int run(const RunConfig& cfg) {
  const SystemDef sys = resolve_model(cfg.model);
  fs::create_directories(cfg.output_dir);
  try {
    if (cfg.command == "equilibrium") return cmd_equilibrium(cfg, sys);
    if (cfg.command == "continue") return cmd_continue(cfg, sys);
    if (cfg.command == "simulate") return cmd_simulate(cfg, sys);
    if (cfg.command == "absorbing") return cmd_absorbing(cfg, sys);
    if (cfg.command == "attractor") return cmd_attractor(cfg, sys);
    if (cfg.command == "certify") return cmd_certify(cfg, sys);
    if (cfg.command == "closeness") return cmd_closeness(cfg, sys);
    if (cfg.command == "persistence") return cmd_persistence(cfg, sys);
    throw Error("unknown command '" + cfg.command + "'");
  } catch (const Refusal& r) {
    // hypothesis violation outside certify's own pipeline handling
    Json j;
    j["report_version"] = 1;
    Json tool;
    tool["name"] = kToolName;
    tool["version"] = kToolVersion;
    j["tool"] = tool;
    j["report_type"] = cfg.command;
    j["system"] = sys.name();
    j["verdict"] = "refused";
    Json rj;
    rj["step"] = r.step();
    rj["reason"] = r.reason();
    j["refusal"] = rj;
    write_report(cfg, j);
    std::cerr << kToolName << ": " << r.what() << "\n";
    return 2;
  }
}

int cli_main(int argc, char** argv) {
  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    const RunConfig cfg = load_config(args);
    return run(cfg);
  } catch (const HelpRequested& h) {
    std::cout << h.text;
    return 0;
  } catch (const Error& e) {
    std::cerr << kToolName << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << kToolName << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace persist
