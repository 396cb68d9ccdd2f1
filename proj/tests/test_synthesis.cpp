#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "relic/compile.hpp"
#include "relic/errors.hpp"
#include "relic/geometry.hpp"
#include "relic/oracle.hpp"
#include "relic/random.hpp"
#include "relic/synthesis.hpp"

using namespace relic;
using namespace relic::geo;
using namespace relic::oracle;
using namespace relic::synth;

namespace {

// Evenly spaced centers on a canonically placed circle: a small, fully
// reproducible atlas for exact structural checks.
PartitionAtlas hand_circle_atlas(int centers, double q, double delta, int D = 3,
                                 double rho = 0.25) {
  Matrix F(D, 2);
  F(0, 0) = 1.0;
  F(1, 1) = 1.0;
  const ManifoldSpec m =
      make_circle_at(D, rho, std::vector<double>(static_cast<std::size_t>(D), 0.5), F);
  DeltaNet net;
  net.delta = delta;
  net.grid_spacing = delta / 10.0;
  for (int i = 0; i < centers; ++i) {
    const double theta = 2.0 * kPi * static_cast<double>(i) / centers;
    NetCenter c;
    c.z = circle_point(m, theta);
    c.tau = local_reach(m, c.z);
    c.P = tangent_basis(m, c.z);
    net.centers.push_back(std::move(c));
  }
  return make_atlas(m, std::move(net), q);
}

std::vector<std::vector<double>> tube_batch(const ManifoldSpec& m, double q, int n,
                                            std::uint64_t seed) {
  std::vector<std::vector<double>> xs;
  xs.reserve(static_cast<std::size_t>(n));
  for (TubePoint& tp : sample_tube(m, q, n, seed)) xs.push_back(std::move(tp.x));
  return xs;
}

double rel_diff(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-300});
}

// Least-squares slope of y against x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("bump program is bitwise exact at its own center") {
  const PartitionAtlas atlas = hand_circle_atlas(8, 0.3, 0.12);
  for (int i : {0, 3, 7}) {
    const compile::CompiledProgram prog = synthesize_eta_tilde(atlas, i);
    const Evaluator ev(prog);
    const std::vector<double>& z = atlas.net.centers[static_cast<std::size_t>(i)].z;
    const std::vector<double> out = ev.outputs(z);
    REQUIRE(out.size() == 1);
    CHECK(out[0] == 1.0);  // exact: all offsets are powers of two
  }
}

TEST_CASE("bump program matches the oracle bump on random cube points") {
  struct Config {
    PartitionAtlas atlas;
    int index;
  };
  std::vector<Config> configs;
  configs.push_back({hand_circle_atlas(8, 0.3, 0.12), 2});
  configs.push_back({hand_circle_atlas(6, 0.0, 0.1, 10), 4});
  configs.push_back({build_atlas(make_sphere(10, 424242), 0.1, 0.2), 0});

  for (const Config& cfg : configs) {
    const int D = cfg.atlas.manifold.D, d = cfg.atlas.manifold.d;
    std::vector<StageCount> stages;
    const compile::CompiledProgram prog = synthesize_eta_tilde(cfg.atlas, cfg.index, 0, &stages);

    // Depth d+8, one column group per stage of a single chunk.
    CHECK(static_cast<int>(prog.blocks.size()) == d + 8);
    CHECK(prog.min_ell == (d + 3) * D + 2 * d + 7);
    CHECK(prog.network.ell == prog.min_ell);
    int stage_blocks = 0;
    for (const StageCount& sc : stages) stage_blocks += sc.blocks;
    CHECK(stage_blocks == d + 8);

    const Evaluator ev(prog);
    Rng rng(917 + static_cast<std::uint64_t>(cfg.index));
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      const std::vector<double> x = rng.uniform_vec(D, 0.0, 1.0);
      const double want = eta_tilde(cfg.atlas, cfg.index, x);
      const double got = ev.outputs(x)[0];
      worst = std::max(worst, std::fabs(got - want));
    }
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("bump program column budget must cover the layout") {
  const PartitionAtlas atlas = hand_circle_atlas(8, 0.3, 0.12);
  try {
    synthesize_eta_tilde(atlas, 99);
    FAIL("an out-of-range center index must be rejected");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::usage);
  }
  try {
    synthesize_eta_tilde(atlas, 0, 5);
    FAIL("a token budget below the layout width must be rejected");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::infeasible);
  }
}

TEST_CASE("normalized weight vector tracks the oracle partition") {
  const PartitionAtlas atlas = hand_circle_atlas(8, 0.3, 0.12);
  const ManifoldSpec& m = atlas.manifold;
  const double eps_div = 1e-3;

  const std::vector<std::vector<double>> mass_xs = tube_batch(m, 0.3, 3000, 303);
  const auto [lo, hi] = eta_tilde_l1_bounds(atlas, mass_xs);
  REQUIRE(lo > 0.0);

  SeriesMeta meta;
  std::vector<StageCount> stages;
  const compile::CompiledProgram prog =
      synthesize_eta_vector(atlas, eps_div, 0, lo, hi, &meta, &stages);

  const int d = m.d;
  CHECK(static_cast<int>(prog.blocks.size()) == d + 3 * meta.s + 16);
  CHECK(meta.tolerance <= eps_div);
  CHECK(prog.contract.claimed_tolerance == meta.tolerance);
  REQUIRE(prog.sub_contracts.size() == 2);
  CHECK(prog.sub_contracts[0].op == "bumps");
  CHECK(prog.sub_contracts[1].op == "mass_reciprocal");

  const Evaluator ev(prog);
  const int K = atlas.size();
  const std::vector<std::vector<double>> xs = tube_batch(m, 0.3, 10000, 404);

  double worst_rel = 0.0, worst_l1 = 0.0, worst_sum = 0.0, worst_bump = 0.0, worst_rec = 0.0;
  bool saw_zero_component = false;
  const int rec_slot = prog.sub_contracts[1].output_slots[0];
  for (const std::vector<double>& x : xs) {
    const Matrix H = ev.run(x);
    const std::vector<double> want = eta(atlas, x);
    const double mass = eta_tilde_l1(atlas, x);
    double sum = 0.0, l1_err = 0.0;
    for (int i = 0; i < K; ++i) {
      const double got = H(0, prog.contract.output_slots[static_cast<std::size_t>(i)] - 1);
      const double bump = H(0, prog.sub_contracts[0].output_slots[static_cast<std::size_t>(i)] - 1);
      const double bump_want = eta_tilde(atlas, i, x);
      worst_bump = std::max(worst_bump, std::fabs(bump - bump_want));
      if (bump == 0.0) {
        saw_zero_component = true;
        CHECK(got == 0.0);  // exact: zero bumps stay zero through normalization
      }
      const double err = std::fabs(got - want[static_cast<std::size_t>(i)]);
      worst_rel = std::max(worst_rel, err - eps_div * want[static_cast<std::size_t>(i)]);
      l1_err += err;
      sum += got;
    }
    worst_l1 = std::max(worst_l1, l1_err);
    worst_sum = std::max(worst_sum, std::fabs(sum - 1.0));
    worst_rec = std::max(worst_rec, std::fabs(H(0, rec_slot - 1) - 1.0 / mass));
  }
  CHECK(saw_zero_component);
  CHECK(worst_bump <= 1e-9);        // raw bumps track the oracle
  CHECK(worst_rel <= 1e-12);        // per-component relative error <= eps_div
  CHECK(worst_l1 <= eps_div + 1e-9);
  CHECK(worst_sum <= meta.tolerance + 1e-12);
  CHECK(worst_rec <= prog.sub_contracts[1].claimed_tolerance + 1e-12);
}

TEST_CASE("weight normalization rejects impossible mass ranges") {
  const PartitionAtlas atlas = hand_circle_atlas(8, 0.3, 0.12);
  try {
    synthesize_eta_vector(atlas, 1e-3, 0, 0.0, 2.0);
    FAIL("zero mass lower bound must be infeasible");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::infeasible);
  }
  try {
    synthesize_eta_vector(atlas, 1e-3, 0, 1e-12, 1.0);
    FAIL("a near-degenerate mass range must exhaust the series budget");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::infeasible);
  }
}

TEST_CASE("evaluator reproduces the reference forward pass bitwise") {
  const PartitionAtlas atlas = hand_circle_atlas(8, 0.3, 0.12);
  const std::vector<std::vector<double>> mass_xs = tube_batch(atlas.manifold, 0.3, 500, 11);
  const auto [lo, hi] = eta_tilde_l1_bounds(atlas, mass_xs);
  const compile::CompiledProgram prog = synthesize_eta_vector(atlas, 1e-2, 0, lo, hi);
  const Evaluator ev(prog);
  Rng rng(5150);
  for (int trial = 0; trial < 25; ++trial) {
    const std::vector<double> x = rng.uniform_vec(atlas.manifold.D, 0.0, 1.0);
    const Matrix ha = ev.run(x);
    const Matrix hb = prog.forward(x);
    for (int col = 0; col < prog.network.ell; ++col) {
      REQUIRE(ha(0, col) == hb(0, col));
    }
  }
}

TEST_CASE("planner reproduces independently computed budgets") {
  const ManifoldSpec m = make_circle(3, 1);
  const SynthesisPlan p = plan_from_epsilon(m, 0.3, 0.7, 2.5, 0.15, 1.1, 2.4);

  // Frozen from an independent evaluation of the planning formulas.
  CHECK(rel_diff(p.eps_div, 0.0018026234462089421) <= 1e-13);
  CHECK(rel_diff(p.delta, 0.00012018888545875547) <= 1e-13);
  CHECK(rel_diff(p.c1, 0.88000000000000012) <= 1e-13);
  CHECK(rel_diff(p.c2, 2.8799999999999999) <= 1e-13);
  CHECK(rel_diff(p.c, 0.53191489361702127) <= 1e-13);
  CHECK(rel_diff(p.q0, 0.53191489361702127) <= 1e-13);
  CHECK(p.r == 10);
  CHECK(p.s == 4);
  CHECK(p.K == 13070);
  CHECK(p.ell == 287566);
  CHECK(p.blocks == 31);
  CHECK(p.heads == 78420);

  // JSON round trip preserves every field.
  const SynthesisPlan q = plan_from_json(plan_to_json(p));
  CHECK(q.delta == p.delta);
  CHECK(q.r == p.r);
  CHECK(q.K == p.K);
  CHECK(q.ell == p.ell);
  CHECK(q.blocks == p.blocks);
  CHECK(q.kappa == p.kappa);
  CHECK(q.warning == p.warning);
  CHECK(q.stage_slots == p.stage_slots);
}

TEST_CASE("planner scale identities under target halving") {
  const ManifoldSpec m = make_circle(3, 1);

  // alpha = 1, q = 0, L = 2: delta = eps / 145 exactly, and halving eps
  // halves delta bitwise (power-of-two scaling commutes with rounding).
  const SynthesisPlan a1 = plan_from_epsilon(m, 0.0, 1.0, 2.0, 0.15, 1.0, 2.0);
  CHECK(a1.delta == 0.15 / 145.0);
  const SynthesisPlan a2 = plan_from_epsilon(m, 0.0, 1.0, 2.0, 0.075, 1.0, 2.0);
  CHECK(a2.delta == a1.delta / 2.0);

  // alpha = 0.7: the ratio is 2^(-1/alpha) up to roundoff.
  const SynthesisPlan b1 = plan_from_epsilon(m, 0.3, 0.7, 2.5, 0.15, 1.1, 2.4);
  const SynthesisPlan b2 = plan_from_epsilon(m, 0.3, 0.7, 2.5, 0.075, 1.1, 2.4);
  CHECK(rel_diff(b2.delta / b1.delta, std::pow(2.0, -1.0 / 0.7)) <= 1e-12);
}

TEST_CASE("planner depth stays flat while budgets follow the rate") {
  const ManifoldSpec m = make_circle(3, 1);
  const std::vector<double> epses = {0.3, 0.1, 0.03};
  std::vector<double> log_eps, log_K, log_ell;
  int blocks_lo = 1 << 30, blocks_hi = 0;
  for (double eps : epses) {
    const SynthesisPlan p = plan_from_epsilon(m, 0.0, 1.0, 1.0, eps, 1.0, 8.0);
    log_eps.push_back(std::log(eps));
    log_K.push_back(std::log(static_cast<double>(p.K)));
    log_ell.push_back(std::log(static_cast<double>(p.ell)));
    blocks_lo = std::min(blocks_lo, p.blocks);
    blocks_hi = std::max(blocks_hi, p.blocks);
  }
  CHECK(blocks_hi - blocks_lo <= 3);  // depth is insensitive to the target
  const double d_over_alpha = 1.0;
  CHECK(std::fabs(-fit_slope(log_eps, log_K) - d_over_alpha) <= 0.3);
  CHECK(std::fabs(-fit_slope(log_eps, log_ell) - d_over_alpha) <= 0.3);
}

TEST_CASE("planner flags series-dominated budgets and bad dimensions") {
  const ManifoldSpec m = make_circle(3, 1);
  const SynthesisPlan p = plan_from_epsilon(m, 0.0, 1.0, 1.0, 0.3, 1e-3, 10.0);
  CHECK(p.series_dominates);
  CHECK_FALSE(p.warning.empty());

  ManifoldSpec bad = m;
  bad.d = 4;
  try {
    plan_from_epsilon(bad, 0.0, 1.0, 1.0, 0.3, 1.0, 2.0);
    FAIL("d > 3 must be rejected");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::usage);
  }
}

namespace {

ManifoldSpec sweep_circle(int D, double rho) {
  Matrix F(D, 2);
  F(0, 0) = 1.0;
  F(1, 1) = 1.0;
  return make_circle_at(D, rho, std::vector<double>(static_cast<std::size_t>(D), 0.5), F);
}

}  // namespace

TEST_CASE("synthesized regressor meets its sup-norm contract") {
  const ManifoldSpec m = sweep_circle(3, 0.45);
  const TargetFunction target = make_abs_coordinate_target(m, 1.0);
  const double q = 0.0, eps = 0.2;
  const RegressorBundle bundle = synthesize_regressor(m, q, target, eps);
  const compile::CompiledProgram& prog = bundle.program;

  // Structural agreement between the plan and the build.
  CHECK(bundle.plan.r == bundle.series.r);
  CHECK(bundle.plan.s == bundle.series.s);
  CHECK(static_cast<int>(prog.blocks.size()) == bundle.plan.blocks);
  const double ell_ratio =
      static_cast<double>(bundle.plan.ell) / static_cast<double>(prog.network.ell);
  CHECK(ell_ratio >= 0.5);
  CHECK(ell_ratio <= 2.0);
  CHECK(static_cast<int>(bundle.votes.size()) == bundle.atlas.size());

  // Parameter magnitudes stay under the audited envelope.
  const AuditReport report = audit(prog, bundle.stages);
  const int d = m.d, D = m.D;
  const double envelope = kKappaEnvelope * static_cast<double>(D) * static_cast<double>(D) *
                          std::pow(bundle.plan.delta, -(2.0 * d + 8.0)) *
                          std::pow(1.0 - q, -(2.0 * d + 8.0));
  CHECK(report.kappa <= envelope);
  CHECK(report.ffn_depth <= 6);
  CHECK(report.ffn_width <= 5);
  std::printf("regressor audit: K=%d ell=%d blocks=%d kappa=%.6g envelope-ratio=%.6g\n",
              bundle.atlas.size(), prog.network.ell, report.blocks, report.kappa,
              report.kappa / envelope);

  // Pointwise accuracy: the global target and the per-point triangle bound
  // (localized Hölder drift plus the normalization defect).
  const Evaluator ev(prog);
  const std::vector<std::vector<double>> xs = tube_batch(m, q, 10000, 777);
  const double drift = target.L * std::pow(72.0 * bundle.plan.delta / ((1.0 - q) * (1.0 - q)),
                                           target.alpha);
  const double pointwise = (1.0 + bundle.plan.eps_div) * drift +
                           bundle.plan.eps_div * target.R + 1e-9;
  double sup = 0.0;
  for (const std::vector<double>& x : xs) {
    const double got = ev.value(x);
    const double want = target_value(m, target, x);
    const double err = std::fabs(got - want);
    sup = std::max(sup, err);
    REQUIRE(err <= pointwise);
  }
  CHECK(sup <= eps);
}

TEST_CASE("parameter magnitude tracks the predicted delta power") {
  const ManifoldSpec m = sweep_circle(3, 0.45);
  const TargetFunction target = make_abs_coordinate_target(m, 1.0);
  const RegressorBundle coarse = synthesize_regressor(m, 0.0, target, 0.2);
  const RegressorBundle fine = synthesize_regressor(m, 0.0, target, 0.1);
  REQUIRE(fine.plan.delta < coarse.plan.delta);
  const double slope =
      std::log(fine.program.network.kappa_obs() / coarse.program.network.kappa_obs()) /
      std::log(coarse.plan.delta / fine.plan.delta);
  const double predicted = 2.0 * m.d + 8.0;
  CHECK(slope >= predicted - 1.0);
  CHECK(slope <= predicted + 1.0);
}

TEST_CASE("synthesized regressor reproduces constant targets") {
  const ManifoldSpec m = sweep_circle(3, 0.45);
  TargetFunction target;
  target.name = "constant";
  target.g = [](const std::vector<double>&) { return 0.7; };
  target.alpha = 1.0;
  target.L = 0.0;
  target.R = 1.0;
  const double eps = 0.05;
  const RegressorBundle bundle = synthesize_regressor(m, 0.0, target, eps);
  CHECK(bundle.plan.eps_div == eps);  // L = 0: no localization amplification

  const Evaluator ev(bundle.program);
  double worst = 0.0;
  for (const std::vector<double>& x : tube_batch(m, 0.0, 2000, 999))
    worst = std::max(worst, std::fabs(ev.value(x) - 0.7));
  CHECK(worst <= 0.7 * bundle.plan.eps_div + 1e-9);
}

TEST_CASE("regressor synthesis is deterministic and guards its domain") {
  const ManifoldSpec m = sweep_circle(3, 0.45);
  const TargetFunction target = make_abs_coordinate_target(m, 1.0);

  try {
    synthesize_regressor(m, 0.0, target, 0.3);  // above (reach/2)^alpha = 0.225
    FAIL("error target above the feasibility cap must be rejected");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::infeasible);
  }

  const RegressorBundle b1 = synthesize_regressor(m, 0.0, target, 0.2);
  const RegressorBundle b2 = synthesize_regressor(m, 0.0, target, 0.2);
  CHECK(b1.program.network.ell == b2.program.network.ell);
  CHECK(b1.program.network.kappa_obs() == b2.program.network.kappa_obs());
  CHECK(b1.atlas.size() == b2.atlas.size());
  const Evaluator e1(b1.program), e2(b2.program);
  Rng rng(31337);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> x = b1.atlas.net.centers[0].z;
    for (double& v : x) v += rng.uniform(-0.01, 0.01);
    CHECK(e1.value(x) == e2.value(x));
  }
}

TEST_CASE("weight-vector JSON serialization is byte stable") {
  const PartitionAtlas atlas = hand_circle_atlas(8, 0.3, 0.12);
  const std::vector<std::vector<double>> mass_xs = tube_batch(atlas.manifold, 0.3, 500, 11);
  const auto [lo, hi] = eta_tilde_l1_bounds(atlas, mass_xs);
  const compile::CompiledProgram p1 = synthesize_eta_vector(atlas, 1e-2, 0, lo, hi);
  const compile::CompiledProgram p2 = synthesize_eta_vector(atlas, 1e-2, 0, lo, hi);
  CHECK(compile::program_to_json(p1).dump() == compile::program_to_json(p2).dump());
}
