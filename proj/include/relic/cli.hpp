#pragma once
// Batch front-end: compile arithmetic networks, synthesize manifold
// regressors, evaluate and audit saved networks, and run the measurement
// sweeps.  Machine artifacts (JSON, CSV) go to files under --out; standard
// output carries only a human summary.  Exit codes are a stable contract:
// 0 success, 2 usage, 3 infeasible request, 4 failed numeric verification.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "relic/analysis.hpp"
#include "relic/compile.hpp"
#include "relic/errors.hpp"
#include "relic/geometry.hpp"
#include "relic/io.hpp"
#include "relic/oracle.hpp"
#include "relic/random.hpp"
#include "relic/synthesis.hpp"

namespace relic::cli {

namespace detail {

// A JSON config file can stand in for any flag; explicit flags win.  Keys
// are the long flag names without the leading dashes.
template <typename T>
void merge(const nlohmann::json& cfg, const CLI::Option* opt, const char* key, T& var) {
  if (opt != nullptr && opt->count() == 0 && cfg.contains(key)) var = cfg.at(key).get<T>();
}

struct ManifoldOpts {
  std::string kind = "circle";
  int ambient = 3;
  double rho = 0.25;
  double torus_a = 0.12, torus_b = 0.07;
  std::uint64_t mseed = 1;
  CLI::Option *o_kind = nullptr, *o_ambient = nullptr, *o_rho = nullptr, *o_a = nullptr,
              *o_b = nullptr, *o_mseed = nullptr;

  void attach(CLI::App* cmd) {
    o_kind = cmd->add_option("--manifold", kind, "circle | sphere | torus");
    o_ambient = cmd->add_option("--ambient-dim", ambient, "ambient dimension D");
    o_rho = cmd->add_option("--rho", rho, "circle/sphere radius");
    o_a = cmd->add_option("--torus-a", torus_a, "torus core radius");
    o_b = cmd->add_option("--torus-b", torus_b, "torus tube radius");
    o_mseed = cmd->add_option("--manifold-seed", mseed, "seed for the embedding frame");
  }
  void merge_config(const nlohmann::json& cfg) {
    merge(cfg, o_kind, "manifold", kind);
    merge(cfg, o_ambient, "ambient-dim", ambient);
    merge(cfg, o_rho, "rho", rho);
    merge(cfg, o_a, "torus-a", torus_a);
    merge(cfg, o_b, "torus-b", torus_b);
    merge(cfg, o_mseed, "manifold-seed", mseed);
  }
  geo::ManifoldSpec build() const {
    if (kind == "circle") return geo::make_circle(ambient, mseed, rho);
    if (kind == "sphere") return geo::make_sphere(ambient, mseed, rho);
    if (kind == "torus") return geo::make_torus(ambient, mseed, torus_a, torus_b);
    fail_usage("unknown manifold kind: " + kind);
  }
};

struct TargetOpts {
  std::string kind = "abs";
  double alpha = 1.0;
  double period = 0.4;
  int levels = 6;
  CLI::Option *o_kind = nullptr, *o_alpha = nullptr, *o_period = nullptr, *o_levels = nullptr;

  void attach(CLI::App* cmd, const char* default_kind) {
    kind = default_kind;
    o_kind = cmd->add_option("--target", kind, "abs | trig | multiscale");
    o_alpha = cmd->add_option("--alpha", alpha, "Hölder exponent for the abs target");
    o_period = cmd->add_option("--period", period, "base period of the multiscale target");
    o_levels = cmd->add_option("--levels", levels, "layer count of the multiscale target");
  }
  void merge_config(const nlohmann::json& cfg) {
    merge(cfg, o_kind, "target", kind);
    merge(cfg, o_alpha, "alpha", alpha);
    merge(cfg, o_period, "period", period);
    merge(cfg, o_levels, "levels", levels);
  }
  oracle::TargetFunction build(const geo::ManifoldSpec& m) const {
    if (kind == "abs") return oracle::make_abs_coordinate_target(m, alpha);
    if (kind == "trig") return oracle::make_trig_target(m);
    if (kind == "multiscale") return oracle::make_multiscale_target(m, period, levels);
    fail_usage("unknown target kind: " + kind);
  }
};

// ------------------------------------------------------------- compile

struct CompileArgs {
  std::string op;
  int dim = 1;
  int ell = 0;  // 0 = the op's own minimum
  double bound = 1.0;
  std::vector<double> constants;
  int power = 2;
  int order = 3;
  std::vector<double> range = {0.5, 2.0};
  double tol = 0.0;  // > 0: choose the division order from the tolerance
};

inline void cmd_compile(const CompileArgs& a, std::uint64_t seed, const std::string& out_dir) {
  using compile::CompiledProgram;
  const int D = a.dim;
  require(D >= 1, errc::usage, "--dim must be at least 1");

  CompiledProgram prog;
  nlohmann::json params;
  params["op"] = a.op;
  params["seed"] = seed;

  // Build the network and remember how to check one random trial.
  // Each oracle returns the exact expected outputs for drawn inputs.
  std::vector<double> consts = a.constants;
  int r = 0;
  double div_c = 0.0;
  if (a.op == "sum") {
    prog = compile::compile_sum_tokens(D, a.ell > 0 ? a.ell : D + 1, a.bound);
  } else if (a.op == "add" || a.op == "mul") {
    if (consts.empty()) consts.assign(static_cast<std::size_t>(D), 0.5);
    require(static_cast<int>(consts.size()) == D, errc::usage,
            "--const needs one value per dimension");
    params["constants"] = consts;
    const int ell = a.ell > 0 ? a.ell : 2 * D;
    prog = a.op == "add" ? compile::compile_const_add(consts, D, ell, a.bound)
                         : compile::compile_const_mul(consts, D, ell, a.bound);
  } else if (a.op == "square") {
    prog = compile::compile_square(D, a.ell > 0 ? a.ell : 2 * D, a.bound);
  } else if (a.op == "product") {
    prog = compile::compile_product(D, a.ell > 0 ? a.ell : 3 * D, a.bound);
  } else if (a.op == "power") {
    r = a.power;
    params["r"] = r;
    const int min_ell = (1 << compile::ceil_log2(std::max(r, 2))) * D;
    prog = compile::compile_rth_power(r, D, a.ell > 0 ? a.ell : min_ell, a.bound);
  } else if (a.op == "series") {
    r = a.order;
    params["r"] = r;
    const int min_ell = 1 << compile::ceil_log2(std::max(r, 1));
    prog = compile::compile_power_series(r, a.ell > 0 ? a.ell : min_ell, a.bound);
  } else if (a.op == "div") {
    require(a.range.size() == 2, errc::usage, "--range needs exactly lo hi");
    const double lo = a.range[0], hi = a.range[1];
    require(lo > 0.0 && lo < hi, errc::usage, "--range needs 0 < lo < hi");
    div_c = 2.0 / (lo + hi);  // centers the contraction on the range
    const double q0 = (hi - lo) / (hi + lo);
    if (a.tol > 0.0) {
      r = 1;
      while (std::pow(q0, r + 1) / lo > a.tol) {
        ++r;
        require(r <= (1 << 20), errc::infeasible, "tolerance needs an unreasonable order");
      }
    } else {
      r = a.order;
    }
    params["r"] = r;
    params["c"] = div_c;
    params["range"] = a.range;
    const int min_ell = (1 << compile::ceil_log2(std::max(r, 1))) + 4;
    prog = compile::compile_division(div_c, r, a.ell > 0 ? a.ell : min_ell, lo, hi);
  } else {
    fail_usage("unknown op: " + a.op +
               " (expected sum, add, mul, square, product, power, series, div)");
  }

  // Brute-force spot check against the op's direct arithmetic.
  Rng rng(seed);
  const int trials = 100;
  int exact = 0;
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> inputs;
    std::vector<double> expect;
    if (a.op == "div") {
      const double x = rng.uniform(a.range[0], a.range[1]);
      inputs = {x};
      expect = {1.0 / x};
    } else if (a.op == "product") {
      inputs = rng.uniform_vec(2 * D, -a.bound, a.bound);
      for (int i = 0; i < D; ++i) expect.push_back(inputs[i] * inputs[D + i]);
    } else if (a.op == "series") {
      const double x = rng.uniform(-a.bound, a.bound);
      inputs = {x};
      long double acc = 0.0L, pw = 1.0L;
      for (int j = 1; j <= r; ++j) {
        pw *= x;
        acc += pw;
      }
      expect = {static_cast<double>(acc)};
    } else {
      inputs = rng.uniform_vec(D, -a.bound, a.bound);
      if (a.op == "sum") {
        long double acc = 0.0L;
        for (double v : inputs) acc += v;
        expect = {static_cast<double>(acc)};
      } else if (a.op == "add") {
        for (int i = 0; i < D; ++i) expect.push_back(inputs[i] + consts[i]);
      } else if (a.op == "mul") {
        for (int i = 0; i < D; ++i) expect.push_back(consts[i] * inputs[i]);
      } else if (a.op == "square") {
        for (double v : inputs) expect.push_back(v * v);
      } else {  // power
        for (double v : inputs) {
          long double pw = 1.0L;
          for (int j = 0; j < r; ++j) pw *= v;
          expect.push_back(static_cast<double>(pw));
        }
      }
    }
    const std::vector<double> got = prog.outputs(inputs);
    bool ok = true;
    for (std::size_t i = 0; i < expect.size(); ++i) {
      const double err = std::fabs(got[i] - expect[i]);
      worst = std::max(worst, err);
      const double allowed = a.op == "div" ? prog.contract.claimed_tolerance
                                           : 1e-9 * std::max(1.0, std::fabs(expect[i]));
      if (err > allowed) ok = false;
    }
    if (ok) ++exact;
  }

  nlohmann::json report;
  report["op"] = a.op;
  report["params"] = params;
  report["trials"] = trials;
  report["within_tolerance"] = exact;
  report["max_abs_err"] = worst;
  report["claimed_tolerance"] = prog.contract.claimed_tolerance;
  report["ell"] = prog.network.ell;
  report["kappa_obs"] = prog.network.kappa_obs();
  report["pass"] = exact == trials;

  io::write_file(out_dir + "/network.json", io::json_text(compile::program_to_json(prog)));
  io::write_file(out_dir + "/compile_report.json", io::json_text(report));
  std::printf("compile %s: %d/%d within tolerance, max err %.3g; wrote %s/network.json\n",
              a.op.c_str(), exact, trials, worst, out_dir.c_str());
  if (a.op == "div")
    std::printf("compile div: order r = %d, constant c = %.17g, bound %.3g\n", r, div_c,
                prog.contract.claimed_tolerance);
  require(exact == trials, errc::verification, "self-test mismatch against direct arithmetic");
}

// ----------------------------------------------------------- synthesize

inline void cmd_synthesize(const geo::ManifoldSpec& m, const oracle::TargetFunction& target,
                           double q, double eps, int eval_samples, std::uint64_t seed,
                           const std::string& out_dir) {
  require(eval_samples > 0, errc::usage, "--eval-samples must be positive");
  const synth::RegressorBundle bundle = synth::synthesize_regressor(m, q, target, eps);
  const synth::AuditReport audit = synth::audit(bundle.program, bundle.stages);

  double sup_err = 0.0;
  const std::vector<geo::TubePoint> cloud =
      geo::sample_tube(m, q, eval_samples, seed ^ 0x5eedULL);
  const synth::Evaluator ev(bundle.program);
  for (const geo::TubePoint& p : cloud)
    sup_err = std::max(sup_err, std::fabs(ev.value(p.x) - oracle::target_value(m, target, p.x)));

  nlohmann::json aj;
  aj["audit"] = synth::audit_to_json(audit);
  aj["plan"] = synth::plan_to_json(bundle.plan);
  aj["eps"] = eps;
  aj["q"] = q;
  aj["manifold"] = geo::kind_name(m.kind);
  aj["ambient_dim"] = m.D;
  aj["intrinsic_dim"] = m.d;
  aj["target"] = target.name;
  aj["alpha"] = target.alpha;
  aj["mass_lo"] = bundle.mass_lo;
  aj["mass_hi"] = bundle.mass_hi;
  aj["measured_sup_err"] = sup_err;
  aj["eval_samples"] = eval_samples;
  aj["seed"] = seed;

  io::write_file(out_dir + "/network.json", io::json_text(compile::program_to_json(bundle.program)));
  io::write_file(out_dir + "/audit.json", io::json_text(aj));
  std::printf(
      "synthesize %s (D=%d, q=%.3g, eps=%.3g): blocks=%d ell=%d kappa=%.3e; sup err %.3e over "
      "%d samples%s\n",
      geo::kind_name(m.kind).c_str(), m.D, q, eps, audit.blocks, audit.ell, audit.kappa, sup_err,
      eval_samples, sup_err <= eps ? "" : "  ** exceeds target **");
  require(sup_err <= eps, errc::verification, "measured sup error exceeds the requested target");
}

// ----------------------------------------------------------- eval / audit

inline void cmd_eval(const std::string& network_path, const std::vector<double>& inputs,
                     const std::string& out_dir) {
  const compile::CompiledProgram prog =
      compile::program_from_json(nlohmann::json::parse(io::read_file(network_path)));
  const synth::Evaluator ev(prog);
  const std::vector<double> outs = ev.outputs(inputs);
  nlohmann::json j;
  j["network"] = network_path;
  j["op"] = prog.contract.op;
  j["inputs"] = inputs;
  j["outputs"] = outs;
  j["value"] = ev.value(inputs);
  io::write_file(out_dir + "/eval.json", io::json_text(j));
  std::string shown;
  for (double v : outs) shown += (shown.empty() ? "" : ", ") + io::fmt_g17(v);
  std::printf("eval %s: outputs [%s]\n", prog.contract.op.c_str(), shown.c_str());
}

inline void cmd_audit(const std::string& network_path, const std::string& out_dir) {
  const compile::CompiledProgram prog =
      compile::program_from_json(nlohmann::json::parse(io::read_file(network_path)));
  const synth::AuditReport a = synth::audit(prog);
  nlohmann::json j = synth::audit_to_json(a);
  j["op"] = prog.contract.op;
  io::write_file(out_dir + "/audit.json", io::json_text(j));
  std::printf("audit %s: blocks=%d max_heads=%d ell=%d ffn %dx%d kappa=%.6e\n",
              prog.contract.op.c_str(), a.blocks, a.max_heads, a.ell, a.ffn_depth, a.ffn_width,
              a.kappa);
}

// ---------------------------------------------------------------- sweeps

inline void cmd_sweep_approx(const geo::ManifoldSpec& m, const oracle::TargetFunction& target,
                             double q, const std::vector<double>& eps_list, int samples,
                             std::uint64_t seed, const std::string& out_dir) {
  const analysis::ApproxSweepResult res =
      analysis::approximation_sweep(m, q, target, eps_list, samples, seed);
  nlohmann::json cj;
  cj["config"] = res.rates.config;
  cj["slope"] = res.rates.slope;
  cj["half_width"] = res.rates.half_width;
  cj["expected_slope"] = target.alpha;
  cj["tolerance"] = 0.3;
  const bool skipped = std::isnan(res.rates.slope);
  const bool pass = skipped || std::fabs(res.rates.slope - target.alpha) <= 0.3;
  cj["pass"] = pass;
  io::write_file(out_dir + "/approx_sweep.csv", io::approx_sweep_csv(res));
  io::write_file(out_dir + "/approx_config.json", io::json_text(cj));
  if (skipped)
    std::printf("sweep approx: slope skipped (constant target); wrote %s/approx_sweep.csv\n",
                out_dir.c_str());
  else
    std::printf("sweep approx: slope %.3f (expected %.2f +- 0.30) %s\n", res.rates.slope,
                target.alpha, pass ? "PASS" : "FAIL");
  require(pass, errc::verification, "approximation slope missed its tolerance");
}

inline void cmd_sweep_gen(const geo::ManifoldSpec& m, const oracle::TargetFunction& target,
                          const std::vector<int>& n_list, double delta_coeff, int test_samples,
                          const std::string& labels, double label_noise, std::uint64_t seed,
                          const std::string& out_dir) {
  require(labels == "target" || labels == "vote", errc::usage,
          "--labels must be target or vote");
  const analysis::LabelSource src =
      labels == "vote" ? analysis::LabelSource::oracle_vote : analysis::LabelSource::target;
  const double coeff =
      delta_coeff > 0.0 ? delta_coeff : (m.kind == geo::Kind::circle ? 0.40 : 0.35);
  const analysis::GenSweepResult res = analysis::generalization_sweep(
      m, target, n_list, coeff, seed, test_samples, src, label_noise);
  const double expected = -2.0 * target.alpha / (2.0 * target.alpha + m.d);
  nlohmann::json cj;
  cj["config"] = res.rates.config;
  cj["slope"] = res.rates.slope;
  cj["half_width"] = res.rates.half_width;
  cj["expected_slope"] = expected;
  cj["tolerance"] = 0.3;
  const bool gated = label_noise == 0.0;  // no rate claim under label noise
  const bool pass = !gated || std::fabs(res.rates.slope - expected) <= 0.3;
  cj["pass"] = pass;
  io::write_file(out_dir + "/gen_sweep.csv", io::gen_sweep_csv(res));
  io::write_file(out_dir + "/gen_config.json", io::json_text(cj));
  std::printf("sweep gen: slope %.3f (expected %.2f +- 0.30) %s\n", res.rates.slope, expected,
              !gated ? "UNGATED (label noise)" : pass ? "PASS" : "FAIL");
  require(pass, errc::verification, "sample-complexity slope missed its tolerance");
}

inline void cmd_sweep_id(const geo::ManifoldSpec& m, const std::vector<double>& sigma_list,
                         int n, int k, std::uint64_t seed, const std::string& out_dir) {
  const std::vector<analysis::IdSweepRow> rows =
      analysis::noise_id_sweep(m, sigma_list, n, k, seed);
  std::vector<double> sig, est;
  for (const analysis::IdSweepRow& r : rows) {
    sig.push_back(r.sigma);
    est.push_back(r.id_noisy);
  }
  const double rho = analysis::spearman_rho(sig, est);
  const bool pass = rho > 0.8;
  nlohmann::json cj;
  cj["manifold"] = geo::kind_name(m.kind);
  cj["ambient_dim"] = m.D;
  cj["intrinsic_dim"] = m.d;
  cj["sigma_list"] = sigma_list;
  cj["n"] = n;
  cj["k"] = k;
  cj["seed"] = seed;
  cj["id_clean"] = rows.front().id_clean;
  cj["spearman_rho"] = rho;
  cj["pass"] = pass;
  io::write_file(out_dir + "/id_sweep.csv", io::id_sweep_csv(rows));
  io::write_file(out_dir + "/id_config.json", io::json_text(cj));
  std::printf("sweep id: clean estimate %.3f, Spearman rho %.3f %s\n", rows.front().id_clean,
              rho, pass ? "PASS" : "FAIL");
  require(pass, errc::verification, "dimension estimates are not monotone in noise");
}

}  // namespace detail

// Parses and runs one command; returns the process exit code.
inline int run(int argc, const char* const* argv) {
  using namespace detail;

  CLI::App app{"compiled-transformer construction and measurement toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 17;
  std::string out_dir = "out";
  std::string config_path;
  CLI::Option* o_seed = app.add_option("--seed", seed, "master seed for all draws");
  CLI::Option* o_out = app.add_option("--out", out_dir, "output directory for artifacts");
  app.add_option("--config", config_path, "JSON config standing in for flags (flags win)");

  // compile ------------------------------------------------------------
  CLI::App* c_compile = app.add_subcommand("compile", "compile an arithmetic network");
  CompileArgs ca;
  c_compile->add_option("op", ca.op, "sum | add | mul | square | product | power | series | div")
      ->required();
  CLI::Option* co_dim = c_compile->add_option("--dim", ca.dim, "operand count D");
  CLI::Option* co_ell = c_compile->add_option("--ell", ca.ell, "token budget (0 = minimum)");
  CLI::Option* co_bound = c_compile->add_option("--bound", ca.bound, "operand sup bound M");
  CLI::Option* co_const = c_compile->add_option("--const", ca.constants, "constants for add/mul");
  CLI::Option* co_power = c_compile->add_option("--power", ca.power, "exponent for power");
  CLI::Option* co_order = c_compile->add_option("--order", ca.order, "order for series/div");
  CLI::Option* co_range = c_compile->add_option("--range", ca.range, "div domain: lo hi");
  CLI::Option* co_tol = c_compile->add_option("--tol", ca.tol, "div tolerance (chooses order)");

  // synthesize -----------------------------------------------------------
  CLI::App* c_synth = app.add_subcommand("synthesize", "synthesize a manifold regressor");
  ManifoldOpts synth_m;
  TargetOpts synth_t;
  double synth_q = 0.0, synth_eps = 0.0;
  int synth_eval = 2000;
  synth_m.attach(c_synth);
  synth_t.attach(c_synth, "abs");
  CLI::Option* so_q = c_synth->add_option("--q", synth_q, "tube thickness in [0, 1)");
  CLI::Option* so_eps = c_synth->add_option("--eps", synth_eps, "sup-norm error target");
  CLI::Option* so_eval = c_synth->add_option("--eval-samples", synth_eval, "sup-error samples");

  // eval / audit ---------------------------------------------------------
  CLI::App* c_eval = app.add_subcommand("eval", "evaluate a saved network");
  std::string eval_net;
  std::vector<double> eval_inputs;
  CLI::Option* eo_net = c_eval->add_option("--network", eval_net, "network JSON path");
  CLI::Option* eo_in = c_eval->add_option("--input", eval_inputs, "input values");

  CLI::App* c_audit = app.add_subcommand("audit", "report a saved network's budgets");
  std::string audit_net;
  CLI::Option* ao_net = c_audit->add_option("--network", audit_net, "network JSON path");

  // sweep ------------------------------------------------------------
  CLI::App* c_sweep = app.add_subcommand("sweep", "run a measurement sweep");
  std::string sweep_kind;
  c_sweep->add_option("kind", sweep_kind, "approx | gen | id")->required();
  ManifoldOpts sweep_m;
  TargetOpts sweep_t;
  double sweep_q = 0.0;
  std::vector<double> eps_list = {0.12, 0.1, 0.085, 0.07};
  int approx_samples = 10000;
  std::vector<int> n_list = {200, 500, 1500, 4000, 10000};
  double delta_coeff = 0.0;  // 0 = per-manifold default
  int gen_test_samples = 10000;
  std::string gen_labels = "target";
  double gen_label_noise = 0.0;
  std::vector<double> sigma_list = {0.0, 0.01, 0.05, 0.1, 0.3};
  int id_n = 5000, id_k = 30;
  sweep_m.attach(c_sweep);
  sweep_t.attach(c_sweep, "abs");
  CLI::Option* wo_q = c_sweep->add_option("--q", sweep_q, "tube thickness (approx sweep)");
  CLI::Option* wo_eps = c_sweep->add_option("--eps-list", eps_list, "approx error targets");
  CLI::Option* wo_samples = c_sweep->add_option("--samples", approx_samples, "approx sup samples");
  CLI::Option* wo_n = c_sweep->add_option("--n-list", n_list, "gen training sizes");
  CLI::Option* wo_coeff = c_sweep->add_option("--delta-coeff", delta_coeff,
                                              "gen scale coefficient (0 = per-manifold default)");
  CLI::Option* wo_test = c_sweep->add_option("--test-samples", gen_test_samples, "gen test size");
  CLI::Option* wo_labels = c_sweep->add_option("--labels", gen_labels, "gen labels: target | vote");
  CLI::Option* wo_noise = c_sweep->add_option("--label-noise", gen_label_noise,
                                              "gen label noise sigma (no rate claim)");
  CLI::Option* wo_sigma = c_sweep->add_option("--sigma-list", sigma_list, "id noise levels");
  CLI::Option* wo_idn = c_sweep->add_option("--n", id_n, "id sample count");
  CLI::Option* wo_idk = c_sweep->add_option("--k", id_k, "id neighbor count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help and friends
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(errc::usage);
  }

  try {
    nlohmann::json cfg = nlohmann::json::object();
    if (!config_path.empty()) cfg = nlohmann::json::parse(io::read_file(config_path));
    merge(cfg, o_seed, "seed", seed);
    merge(cfg, o_out, "out", out_dir);

    if (app.got_subcommand(c_compile)) {
      merge(cfg, co_dim, "dim", ca.dim);
      merge(cfg, co_ell, "ell", ca.ell);
      merge(cfg, co_bound, "bound", ca.bound);
      merge(cfg, co_const, "const", ca.constants);
      merge(cfg, co_power, "power", ca.power);
      merge(cfg, co_order, "order", ca.order);
      merge(cfg, co_range, "range", ca.range);
      merge(cfg, co_tol, "tol", ca.tol);
      cmd_compile(ca, seed, out_dir);
    } else if (app.got_subcommand(c_synth)) {
      synth_m.merge_config(cfg);
      synth_t.merge_config(cfg);
      merge(cfg, so_q, "q", synth_q);
      merge(cfg, so_eps, "eps", synth_eps);
      merge(cfg, so_eval, "eval-samples", synth_eval);
      require(so_eps->count() > 0 || cfg.contains("eps"), errc::usage,
              "synthesize needs --eps (or an eps config entry)");
      const geo::ManifoldSpec m = synth_m.build();
      cmd_synthesize(m, synth_t.build(m), synth_q, synth_eps, synth_eval, seed, out_dir);
    } else if (app.got_subcommand(c_eval)) {
      merge(cfg, eo_net, "network", eval_net);
      merge(cfg, eo_in, "input", eval_inputs);
      require(!eval_net.empty(), errc::usage, "eval needs --network");
      cmd_eval(eval_net, eval_inputs, out_dir);
    } else if (app.got_subcommand(c_audit)) {
      merge(cfg, ao_net, "network", audit_net);
      require(!audit_net.empty(), errc::usage, "audit needs --network");
      cmd_audit(audit_net, out_dir);
    } else if (app.got_subcommand(c_sweep)) {
      sweep_m.merge_config(cfg);
      merge(cfg, wo_q, "q", sweep_q);
      if (sweep_kind == "approx") {
        sweep_t.merge_config(cfg);
        merge(cfg, wo_eps, "eps-list", eps_list);
        merge(cfg, wo_samples, "samples", approx_samples);
        const geo::ManifoldSpec m = sweep_m.build();
        cmd_sweep_approx(m, sweep_t.build(m), sweep_q, eps_list, approx_samples, seed, out_dir);
      } else if (sweep_kind == "gen") {
        // The rate protocol wants a target that saturates its modulus at
        // every scale, so the gen sweep defaults to the multiscale stack.
        if (sweep_t.o_kind->count() == 0 && !cfg.contains("target")) sweep_t.kind = "multiscale";
        sweep_t.merge_config(cfg);
        merge(cfg, wo_n, "n-list", n_list);
        merge(cfg, wo_coeff, "delta-coeff", delta_coeff);
        merge(cfg, wo_test, "test-samples", gen_test_samples);
        merge(cfg, wo_labels, "labels", gen_labels);
        merge(cfg, wo_noise, "label-noise", gen_label_noise);
        const geo::ManifoldSpec m = sweep_m.build();
        cmd_sweep_gen(m, sweep_t.build(m), n_list, delta_coeff, gen_test_samples, gen_labels,
                      gen_label_noise, seed, out_dir);
      } else if (sweep_kind == "id") {
        merge(cfg, wo_sigma, "sigma-list", sigma_list);
        merge(cfg, wo_idn, "n", id_n);
        merge(cfg, wo_idk, "k", id_k);
        cmd_sweep_id(sweep_m.build(), sigma_list, id_n, id_k, seed, out_dir);
      } else {
        fail_usage("unknown sweep kind: " + sweep_kind + " (expected approx, gen, id)");
      }
    }
  } catch (const relic::error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: malformed JSON: %s\n", e.what());
    return static_cast<int>(errc::usage);
  }
  return 0;
}

}  // namespace relic::cli
