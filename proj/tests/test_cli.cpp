// End-to-end checks of the command-line front end: exit codes, artifact
// files, config merging, and byte-level determinism of reruns.
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relic/cli.hpp"
#include "relic/io.hpp"

namespace {

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.emplace_back("relic");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> ptrs;
  for (const std::string& s : full) ptrs.push_back(s.c_str());
  return relic::cli::run(static_cast<int>(ptrs.size()), ptrs.data());
}

// Fresh scratch directory per test, under the ctest working directory.
std::string scratch(const std::string& name) {
  const std::string dir = "cli_scratch/" + name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

nlohmann::json load_json(const std::string& path) {
  return nlohmann::json::parse(relic::io::read_file(path));
}

}  // namespace

TEST_CASE("compile subcommand writes a loadable network and a clean self-test") {
  const std::string dir = scratch("compile_square");
  REQUIRE(run_cli({"--out", dir, "compile", "square", "--dim", "3"}) == 0);

  const nlohmann::json report = load_json(dir + "/compile_report.json");
  CHECK(report.at("trials").get<int>() == 100);
  CHECK(report.at("within_tolerance").get<int>() == 100);
  CHECK(report.at("pass").get<bool>());

  const relic::compile::CompiledProgram prog =
      relic::compile::program_from_json(load_json(dir + "/network.json"));
  CHECK(prog.contract.op == "square");
  const std::vector<double> got = prog.outputs({0.5, -0.25, 0.75});
  REQUIRE(got.size() == 3);
  CHECK(got[0] == 0.25);
  CHECK(got[1] == 0.0625);
  CHECK(got[2] == 0.5625);
}

TEST_CASE("division planning picks the order from the tolerance") {
  const std::string dir = scratch("compile_div");
  REQUIRE(run_cli({"--out", dir, "compile", "div", "--range", "0.5", "2.0", "--tol", "1e-6"}) ==
          0);
  const nlohmann::json report = load_json(dir + "/compile_report.json");
  // q0 = (2 - 0.5)/(2 + 0.5) = 0.6; smallest r with 0.6^(r+1)/0.5 <= 1e-6.
  CHECK(report.at("params").at("r").get<int>() == 28);
  CHECK(report.at("claimed_tolerance").get<double>() <= 1e-6);
  CHECK(report.at("within_tolerance").get<int>() == 100);
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cli({"compile", "frobnicate"}) == 2);       // unknown op
  CHECK(run_cli({}) == 2);                              // no subcommand
  CHECK(run_cli({"sweep", "sideways"}) == 2);           // unknown sweep kind
  CHECK(run_cli({"eval"}) == 2);                        // missing --network
  CHECK(run_cli({"synthesize"}) == 2);                  // missing --eps
  CHECK(run_cli({"synthesize", "--eps", "0.1", "--manifold", "klein"}) == 2);
}

TEST_CASE("synthesize writes deterministic artifacts and rejects infeasible targets") {
  const std::string d1 = scratch("synth_a");
  const std::string d2 = scratch("synth_b");
  const std::vector<std::string> base = {"synthesize", "--eps",          "0.1",
                                         "--manifold", "circle",        "--ambient-dim",
                                         "3",          "--eval-samples", "300"};

  std::vector<std::string> a1 = {"--out", d1};
  a1.insert(a1.end(), base.begin(), base.end());
  std::vector<std::string> a2 = {"--out", d2};
  a2.insert(a2.end(), base.begin(), base.end());
  REQUIRE(run_cli(a1) == 0);
  REQUIRE(run_cli(a2) == 0);
  CHECK(relic::io::read_file(d1 + "/network.json") == relic::io::read_file(d2 + "/network.json"));
  CHECK(relic::io::read_file(d1 + "/audit.json") == relic::io::read_file(d2 + "/audit.json"));

  const nlohmann::json audit = load_json(d1 + "/audit.json");
  CHECK(audit.at("measured_sup_err").get<double>() <= 0.1);
  CHECK(audit.at("audit").at("blocks").get<int>() >= 1);

  // An error target at or above the feasibility cap is infeasible, not usage.
  CHECK(run_cli({"--out", scratch("synth_c"), "synthesize", "--eps", "1.5"}) == 3);
}

TEST_CASE("eval reproduces compiled arithmetic through the file round trip") {
  const std::string cdir = scratch("eval_compile");
  const std::string edir = scratch("eval_run");
  REQUIRE(run_cli({"--out", cdir, "compile", "product", "--dim", "1"}) == 0);
  REQUIRE(run_cli({"--out", edir, "eval", "--network", cdir + "/network.json", "--input", "0.4",
                   "0.5"}) == 0);
  const nlohmann::json ev = load_json(edir + "/eval.json");
  REQUIRE(ev.at("outputs").size() == 1);
  CHECK(ev.at("outputs")[0].get<double>() == Catch::Approx(0.4 * 0.5).margin(1e-12));
  CHECK(ev.at("op").get<std::string>() == "product");
}

TEST_CASE("audit reports the saved network's budgets") {
  const std::string cdir = scratch("audit_compile");
  const std::string adir = scratch("audit_run");
  REQUIRE(run_cli({"--out", cdir, "compile", "power", "--power", "4", "--dim", "2"}) == 0);
  REQUIRE(run_cli({"--out", adir, "audit", "--network", cdir + "/network.json"}) == 0);
  const nlohmann::json a = load_json(adir + "/audit.json");
  CHECK(a.at("op").get<std::string>() == "rth_power");
  CHECK(a.at("blocks").get<int>() >= 1);
  CHECK(a.at("ell").get<int>() >= 8);  // 2^ceil_log2(4) tokens per operand
  CHECK(a.at("kappa").get<double>() > 0.0);
}

TEST_CASE("id sweep passes its monotonicity gate and reruns byte-identically") {
  const std::string d1 = scratch("id_a");
  const std::string d2 = scratch("id_b");
  const std::vector<std::string> base = {"--seed", "99",   "sweep",        "id",
                                         "--manifold",     "sphere",       "--ambient-dim",
                                         "10",     "--n",  "400",          "--k",
                                         "10",     "--sigma-list", "0", "0.05", "0.3"};
  std::vector<std::string> a1 = {"--out", d1};
  a1.insert(a1.end(), base.begin(), base.end());
  std::vector<std::string> a2 = {"--out", d2};
  a2.insert(a2.end(), base.begin(), base.end());
  REQUIRE(run_cli(a1) == 0);
  REQUIRE(run_cli(a2) == 0);
  CHECK(relic::io::read_file(d1 + "/id_sweep.csv") == relic::io::read_file(d2 + "/id_sweep.csv"));

  const nlohmann::json cfg = load_json(d1 + "/id_config.json");
  CHECK(cfg.at("pass").get<bool>());
  CHECK(cfg.at("spearman_rho").get<double>() > 0.8);
  CHECK(cfg.at("id_clean").get<double>() == Catch::Approx(2.0).margin(0.5));
}

TEST_CASE("gen sweep hits the expected sample-complexity slope on a small ladder") {
  const std::string dir = scratch("gen_small");
  REQUIRE(run_cli({"--seed", "5150", "--out", dir, "sweep", "gen", "--manifold", "circle",
                   "--ambient-dim", "3", "--manifold-seed", "29", "--n-list", "60", "200", "700",
                   "2000", "--test-samples", "2000"}) == 0);
  const nlohmann::json cfg = load_json(dir + "/gen_config.json");
  CHECK(cfg.at("pass").get<bool>());
  CHECK(cfg.at("expected_slope").get<double>() == Catch::Approx(-2.0 / 3.0));
  CHECK(std::fabs(cfg.at("slope").get<double>() - (-2.0 / 3.0)) <= 0.3);
  // The CSV carries one row per training size.
  const std::string csv = relic::io::read_file(dir + "/gen_sweep.csv");
  CHECK(csv.rfind("n,l2_err\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("approx sweep hits the expected error-vs-scale slope") {
  const std::string dir = scratch("approx_small");
  REQUIRE(run_cli({"--seed", "6101", "--out", dir, "sweep", "approx", "--eps-list", "0.12",
                   "0.1", "0.085", "0.07", "--samples", "1000"}) == 0);
  const nlohmann::json cfg = load_json(dir + "/approx_config.json");
  CHECK(cfg.at("pass").get<bool>());
  CHECK(std::fabs(cfg.at("slope").get<double>() - 1.0) <= 0.3);
  const std::string csv = relic::io::read_file(dir + "/approx_sweep.csv");
  CHECK(csv.rfind("delta,sup_err,L_T,m_T,ell,kappa_obs\n", 0) == 0);
}

TEST_CASE("config files stand in for flags and explicit flags win") {
  const std::string dir = scratch("config_merge");
  const std::string cfg_path = dir + "/cfg.json";
  relic::io::write_file(cfg_path, "{\n  \"dim\": 5,\n  \"seed\": 123\n}\n");

  REQUIRE(run_cli({"--config", cfg_path, "--out", dir + "/from_cfg", "compile", "square"}) == 0);
  const nlohmann::json r1 = load_json(dir + "/from_cfg/compile_report.json");
  CHECK(r1.at("ell").get<int>() == 10);  // dim 5 -> 2D tokens
  CHECK(r1.at("params").at("seed").get<int>() == 123);

  REQUIRE(run_cli({"--config", cfg_path, "--seed", "7", "--out", dir + "/flag_wins", "compile",
                   "square", "--dim", "2"}) == 0);
  const nlohmann::json r2 = load_json(dir + "/flag_wins/compile_report.json");
  CHECK(r2.at("ell").get<int>() == 4);
  CHECK(r2.at("params").at("seed").get<int>() == 7);

  relic::io::write_file(dir + "/bad.json", "not json\n");
  CHECK(run_cli({"--config", dir + "/bad.json", "compile", "square"}) == 2);
}
