#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "persist/cli.hpp"
#include "persist/error.hpp"
#include "persist/json_io.hpp"

using namespace persist;
namespace fs = std::filesystem;

namespace {

// scratch directory fixture; removed at scope end
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("persist_cli_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string str(const std::string& name = "") const { return (path / name).string(); }
};

Json read_report(const TempDir& dir) {
  return parse_json(read_text_file(dir.str("report.json")), "report");
}

}  // namespace

TEST_CASE("flags parse into a run config") {
  const RunConfig cfg =
      load_config({"certify", "--model", "builtin:linear1d", "--eta", "0.2"});
  CHECK(cfg.command == "certify");
  CHECK(cfg.model == "builtin:linear1d");
  CHECK(cfg.eta == 0.2);
  CHECK_FALSE(cfg.eps.has_value());
}

TEST_CASE("config file values merge under flags") {
  TempDir dir;
  write_text_file(dir.str("cfg.json"),
                  R"({"command": "certify", "model": "builtin:linear1d", "eta": 0.1})");
  const RunConfig cfg = load_config({"--config", dir.str("cfg.json"), "--eta", "0.3"});
  CHECK(cfg.command == "certify");
  CHECK(cfg.eta == 0.3);  // flag wins
}

TEST_CASE("strict parsing rejects unknown keys and misspellings") {
  TempDir dir;
  write_text_file(dir.str("cfg.json"),
                  R"({"command": "certify", "model": "builtin:linear1d", "etaa": 0.2})");
  try {
    load_config({"--config", dir.str("cfg.json")});
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("etaa") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config({"certify", "--model", "builtin:linear1d", "--etaa", "0.2"}),
                  Error);
}

TEST_CASE("missing required fields are named") {
  try {
    load_config({"certify"});
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("model") != std::string::npos);
  }
  // certify without eta: the error names eta
  TempDir dir;
  RunConfig cfg = load_config({"certify", "--model", "builtin:linear1d", "--out", dir.str()});
  try {
    run(cfg);
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("eta") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config({"frobnicate", "--model", "builtin:linear1d"}), Error);
}

TEST_CASE("certify writes a certificate and exits 0/2 by verdict") {
  TempDir dir;
  RunConfig cfg = load_config(
      {"certify", "--model", "builtin:linear1d", "--eta", "0.2", "--out", dir.str()});
  CHECK(run(cfg) == 0);
  const Json j = read_report(dir);
  CHECK(j["verdict"] == "certified");
  CHECK(j["config"]["command"] == "certify");
  CHECK(fs::exists(dir.str("branch.csv")));

  TempDir dir2;
  RunConfig refused = load_config(
      {"certify", "--model", "builtin:center", "--eta", "0.2", "--out", dir2.str()});
  CHECK(run(refused) == 2);
  const Json r = read_report(dir2);
  CHECK(r["verdict"] == "refused");
  CHECK(r["refusal"]["step"] == "hurwitz_check");
  CHECK_FALSE(r.contains("eps_star"));
}

TEST_CASE("simulate writes the trajectory CSV") {
  TempDir dir;
  RunConfig cfg = load_config({"simulate", "--model", "builtin:linear1d", "--x0", "1", "--t-end",
                               "1", "--out", dir.str()});
  CHECK(run(cfg) == 0);
  CHECK(read_report(dir)["status"] == "reached_tmax");
  const std::string csv = read_text_file(dir.str("trajectory.csv"));
  CHECK(csv.rfind("t,x1\n", 0) == 0);
}

TEST_CASE("simulate requires x0 and t_end") {
  TempDir dir;
  RunConfig cfg =
      load_config({"simulate", "--model", "builtin:linear1d", "--out", dir.str()});
  try {
    run(cfg);
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("x0") != std::string::npos);
  }
}

TEST_CASE("closeness and persistence exit by pass/fail") {
  TempDir dir;
  RunConfig ok = load_config({"closeness", "--model", "builtin:linear1d", "--eta", "0.2",
                              "--eps", "0.05", "--out", dir.str()});
  CHECK(run(ok) == 0);
  CHECK(read_report(dir)["passed"] == true);

  TempDir dir2;
  RunConfig fail = load_config({"closeness", "--model", "builtin:linear1d", "--eta", "0.2",
                                "--eps", "0.3", "--out", dir2.str()});
  CHECK(run(fail) == 2);

  TempDir dir3;
  RunConfig pers = load_config({"persistence", "--model", "builtin:logistic", "--eps-range",
                                "0.2", "--out", dir3.str()});
  CHECK(run(pers) == 0);

  TempDir dir4;
  RunConfig wrong = load_config(
      {"persistence", "--model", "builtin:linear1d", "--out", dir4.str()});
  CHECK_THROWS_AS(run(wrong), ModelError);  // not a positive-cone model
}

TEST_CASE("absorbing requires the ball and reports non-absorption as failure") {
  TempDir dir;
  RunConfig cfg = load_config({"absorbing", "--model", "builtin:linear1d", "--k0-center", "0",
                               "--k0-radius", "1", "--out", dir.str()});
  CHECK(run(cfg) == 0);
  CHECK(read_report(dir)["all_absorbed"] == true);

  TempDir dir2;
  RunConfig missing = load_config(
      {"absorbing", "--model", "builtin:linear1d", "--out", dir2.str()});
  try {
    run(missing);
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("k0_center") != std::string::npos);
  }

  // the center model never absorbs into a small ball: exit 2
  TempDir dir3;
  RunConfig never = load_config({"absorbing", "--model", "builtin:center", "--k0-center", "0,0",
                                 "--k0-radius", "0.5", "--horizon", "10", "--out", dir3.str()});
  CHECK(run(never) == 2);
}

TEST_CASE("missing model file is an operational error") {
  CHECK_THROWS_AS(run(load_config({"certify", "--model", "/nonexistent/model.json", "--eta",
                                   "0.2"})),
                  Error);
}

TEST_CASE("cli_main maps outcomes to exit codes") {
  TempDir dir;
  const std::string out = dir.str();
  {
    const char* argv[] = {"persist", "certify", "--model", "builtin:center",
                          "--eta",   "0.2",     "--out",   out.c_str()};
    CHECK(cli_main(8, const_cast<char**>(argv)) == 2);
  }
  {
    const char* argv[] = {"persist", "certify", "--model", "/nope.json",
                          "--eta",   "0.2",     "--out",   out.c_str()};
    CHECK(cli_main(8, const_cast<char**>(argv)) == 1);
  }
  {
    const char* argv[] = {"persist", "--help"};
    CHECK(cli_main(2, const_cast<char**>(argv)) == 0);
  }
}

TEST_CASE("plot data emission") {
  TempDir dir;
  RunConfig cfg =
      load_config({"certify", "--model", "builtin:logistic", "--eta", "0.2", "--out", dir.str(),
                   "--emit-plot-data"});
  CHECK(run(cfg) == 0);
  CHECK(fs::exists(dir.str("plots/branch.dat")));
  CHECK(fs::exists(dir.str("plots/r_eps.dat")));
  CHECK(fs::exists(dir.str("plots/attractor_cloud.dat")));
  CHECK(fs::exists(dir.str("plots/README")));
  const std::string branch = read_text_file(dir.str("plots/branch.dat"));
  CHECK(branch.rfind("# eps", 0) == 0);
}

TEST_CASE("reports are byte-identical across repeat runs") {
  TempDir dir1, dir2;
  RunConfig a = load_config(
      {"certify", "--model", "builtin:logistic", "--eta", "0.2", "--out", dir1.str()});
  RunConfig b = load_config(
      {"certify", "--model", "builtin:logistic", "--eta", "0.2", "--out", dir2.str()});
  CHECK(run(a) == 0);
  CHECK(run(b) == 0);
  CHECK(read_text_file(dir1.str("report.json")) == read_text_file(dir2.str("report.json")));
}
