#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "relic/analysis.hpp"
#include "relic/errors.hpp"
#include "relic/geometry.hpp"
#include "relic/oracle.hpp"
#include "relic/random.hpp"

using namespace relic;
using namespace relic::geo;
using namespace relic::oracle;
using namespace relic::analysis;

namespace {

// Axis-frame circle centered in the cube; radius 0.45 leaves margin to the
// faces while keeping the feasible error-target window wide.
ManifoldSpec wide_circle(int D, double rho) {
  Matrix F(D, 2);
  F(0, 0) = 1.0;
  F(1, 1) = 1.0;
  return make_circle_at(D, rho, std::vector<double>(static_cast<std::size_t>(D), 0.5), F);
}

}  // namespace

// ----------------------------------------------------------- rate fitting

TEST_CASE("log-log fit recovers exact power laws") {
  const std::vector<double> xs = {1.0, 2.0, 4.0, 8.0, 16.0};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(3.0 * std::pow(x, -2.0));
  const SlopeFit f = fit_loglog(xs, ys);
  CHECK(std::fabs(f.slope - (-2.0)) <= 1e-12);
  CHECK(std::fabs(f.intercept - std::log(3.0)) <= 1e-12);
  CHECK(f.half_width <= 1e-10);

  // Perturbed data widens the confidence band but barely moves the slope.
  std::vector<double> noisy = ys;
  noisy[2] *= 1.25;
  const SlopeFit g = fit_loglog(xs, noisy);
  CHECK(g.half_width > 0.0);
  CHECK(std::fabs(g.slope - (-2.0)) < 0.2);

  // Two points pin a line exactly; no spare degree of freedom, zero width.
  const SlopeFit two = fit_loglog({2.0, 8.0}, {5.0, 80.0});
  CHECK(std::fabs(two.slope - 2.0) <= 1e-12);
  CHECK(two.half_width == 0.0);
}

TEST_CASE("log-log fit rejects malformed inputs") {
  try {
    fit_loglog({1.0, 2.0}, {1.0});
    FAIL("length mismatch must throw");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::usage);
  }
  try {
    fit_loglog({1.0, 2.0}, {1.0, 0.0});
    FAIL("nonpositive y must throw");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::usage);
  }
  try {
    fit_loglog({3.0, 3.0}, {1.0, 2.0});
    FAIL("coincident x must throw");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::usage);
  }
}

TEST_CASE("rank correlation handles monotone data and ties") {
  CHECK(spearman_rho({1.0, 2.0, 3.0, 4.0}, {2.0, 4.0, 9.0, 16.0}) == 1.0);
  CHECK(spearman_rho({1.0, 2.0, 3.0, 4.0}, {16.0, 9.0, 4.0, 2.0}) == -1.0);
  CHECK(spearman_rho({1.0, 1.0, 2.0}, {5.0, 5.0, 7.0}) == 1.0);
  CHECK(spearman_rho({1.0, 2.0, 3.0}, {4.0, 4.0, 4.0}) == 0.0);
}

// --------------------------------------------------------- covering bound

TEST_CASE("covering bound at the all-ones corner is pinned") {
  const CoveringBoundParams unit;  // every field 1.0
  const double lb = log_covering_bound(unit);
  // Base 2^2 = 4, exponent 4 * (1 + 1) = 8, so N = 4^8 and ln N = 16 ln 2.
  CHECK(std::fabs(lb - 11.090354888959125) <= 1e-12);
  CHECK(std::fabs(std::log(covering_bound_direct(unit)) - lb) <= 1e-12);
}

TEST_CASE("log-space covering bound matches direct evaluation on small sets") {
  Rng rng(20240816);
  int accepted = 0;
  int draws = 0;
  while (accepted < 20) {
    REQUIRE(++draws < 4000);
    CoveringBoundParams p;
    p.blocks = 1.0;
    p.d_embed = rng.uniform(1.0, 1.3);
    p.ffn_width = rng.uniform(1.0, 1.2);
    p.input_dim = rng.uniform_int(1, 2);
    p.ffn_depth = rng.uniform(1.0, 1.5);
    p.heads = rng.uniform(1.0, 2.0);
    p.ell = rng.uniform(1.0, 3.0);
    p.kappa = rng.uniform(0.7, 1.5);
    p.data_bound = rng.uniform(0.7, 1.5);
    p.resolution = rng.uniform(0.5, 1.5);
    p.output_bound = rng.uniform(0.5, 2.0);
    const double lb = log_covering_bound(p);
    if (lb > 600.0) continue;  // direct evaluation would overflow
    ++accepted;
    const double direct = covering_bound_direct(p);
    REQUIRE(std::isfinite(direct));
    const double diff = std::fabs(std::log(direct) - lb);
    REQUIRE(diff <= 1e-9 * std::max(1.0, std::fabs(lb)));
  }
}

TEST_CASE("covering bound grows with magnitude, tokens, and heads") {
  // On this grid every log factor is nonnegative (parameters >= 1 and
  // resolution <= 1), so the bound must be monotone in each argument.
  Rng rng(77001);
  for (int trial = 0; trial < 30; ++trial) {
    CoveringBoundParams p;
    p.blocks = rng.uniform_int(1, 3);
    p.d_embed = rng.uniform(1.0, 5.0);
    p.ffn_width = rng.uniform(1.0, 5.0);
    p.input_dim = rng.uniform_int(1, 10);
    p.ffn_depth = rng.uniform(1.0, 6.0);
    p.heads = rng.uniform(1.0, 1e5);
    p.ell = rng.uniform(1.0, 1e6);
    p.kappa = rng.uniform(1.0, 1e30);
    p.data_bound = rng.uniform(1.0, 4.0);
    p.resolution = rng.uniform(1e-6, 1.0);
    const double base = log_covering_bound(p);
    REQUIRE(std::isfinite(base));
    REQUIRE(base > 0.0);

    CoveringBoundParams pk = p;
    pk.kappa *= rng.uniform(1.5, 100.0);
    REQUIRE(log_covering_bound(pk) >= base);

    CoveringBoundParams pl = p;
    pl.ell *= rng.uniform(1.5, 100.0);
    REQUIRE(log_covering_bound(pl) >= base);

    CoveringBoundParams ph = p;
    ph.heads *= rng.uniform(1.5, 100.0);
    REQUIRE(log_covering_bound(ph) >= base);
  }
}

TEST_CASE("covering parameters lift straight off an audit report") {
  synth::AuditReport a;
  a.blocks = 31;
  a.max_heads = 78420;
  a.ell = 287566;
  a.ffn_depth = 6;
  a.ffn_width = 5;
  a.kappa = 3.59e31;
  const CoveringBoundParams p = covering_params(a, 10.0, 1.0, 2.0, 0.01);
  CHECK(p.blocks == 31.0);
  CHECK(p.heads == 78420.0);
  CHECK(p.d_embed == 5.0);
  CHECK(p.ell == 287566.0);
  CHECK(p.ffn_depth == 6.0);
  CHECK(p.ffn_width == 5.0);
  CHECK(p.input_dim == 10.0);
  CHECK(p.data_bound == 1.0);
  CHECK(p.output_bound == 2.0);
  CHECK(p.resolution == 0.01);
  const double lb = log_covering_bound(p);
  CHECK(std::isfinite(lb));
  CHECK(lb > 0.0);
}

// ---------------------------------------------------- intrinsic dimension

TEST_CASE("dimension estimator recovers lines, spheres, and cubes") {
  // A segment in R^10.
  {
    Rng rng(4242);
    std::vector<double> dir = rng.normal_vec(10);
    double norm = 0.0;
    for (double c : dir) norm += c * c;
    norm = std::sqrt(norm);
    for (double& c : dir) c /= norm;
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 2000; ++i) {
      const double t = rng.uniform();
      std::vector<double> p(10);
      for (int c = 0; c < 10; ++c) p[c] = t * dir[c];
      pts.push_back(p);
    }
    const double id = estimate_intrinsic_dim(pts, 30);
    std::printf("[id] segment in R^10: %.3f\n", id);
    CHECK(std::fabs(id - 1.0) <= 0.3);
  }
  // A 2-sphere in R^50.
  {
    const ManifoldSpec s2 = make_sphere(50, 515151);
    const std::vector<TubePoint> draw = sample_tube(s2, 0.0, 2500, 616161);
    std::vector<std::vector<double>> pts;
    for (const TubePoint& p : draw) pts.push_back(p.x);
    const double id = estimate_intrinsic_dim(pts, 30);
    std::printf("[id] 2-sphere in R^50: %.3f\n", id);
    CHECK(std::fabs(id - 2.0) <= 0.5);
  }
  // A solid 5-cube (full-dimensional sample).
  {
    Rng rng(939393);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 3000; ++i) pts.push_back(rng.uniform_vec(5, 0.0, 1.0));
    const double id = estimate_intrinsic_dim(pts, 30);
    std::printf("[id] solid cube in R^5: %.3f\n", id);
    CHECK(std::fabs(id - 5.0) <= 1.0);
  }
}

TEST_CASE("dimension estimator survives duplicated points") {
  Rng rng(11);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 40; ++i) pts.push_back({0.25, 0.5, 0.75});  // one duplicated mass
  for (int i = 0; i < 160; ++i) {
    const double t = rng.uniform(1.0, 2.0);
    pts.push_back({t, 2.0 * t, -t});
  }
  int skipped = 0;
  const double id = estimate_intrinsic_dim(pts, 5, &skipped);
  CHECK(std::isfinite(id));
  CHECK(skipped >= 40 * 4);  // every duplicate's whole neighborhood collapses
  CHECK(std::fabs(id - 1.0) <= 0.4);

  // All-coincident data has no usable neighborhood at all.
  std::vector<std::vector<double>> same(20, std::vector<double>{1.0, 2.0});
  try {
    estimate_intrinsic_dim(same, 3);
    FAIL("fully degenerate data must throw");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::usage);
  }
}

TEST_CASE("dimension estimator rejects malformed calls") {
  std::vector<std::vector<double>> pts(10, std::vector<double>{0.0, 0.0});
  try {
    estimate_intrinsic_dim(pts, 2);
    FAIL("k < 3 must throw");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::usage);
  }
  try {
    estimate_intrinsic_dim(pts, 10);
    FAIL("n <= k must throw");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::usage);
  }
  pts.back() = {1.0};
  try {
    estimate_intrinsic_dim(pts, 3);
    FAIL("ragged dimensions must throw");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::usage);
  }
}

TEST_CASE("ambient noise inflates the estimated dimension") {
  const ManifoldSpec s2 = make_sphere(50, 717171);
  const std::vector<double> sigmas = {0.0, 0.02, 0.3};
  const std::vector<IdSweepRow> rows = noise_id_sweep(s2, sigmas, 1200, 25, 818181);
  REQUIRE(rows.size() == sigmas.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].sigma == sigmas[i]);
    CHECK(rows[i].id_clean == rows[0].id_clean);  // baseline computed once
  }
  std::printf("[id] noise sweep: clean %.3f, sigma=0.02 -> %.3f, sigma=0.3 -> %.3f\n",
              rows[0].id_clean, rows[1].id_noisy, rows[2].id_noisy);
  // Zero noise reproduces the clean estimate bit for bit.
  CHECK(rows[0].id_noisy == rows[0].id_clean);
  CHECK(std::fabs(rows[0].id_noisy - 2.0) <= 0.5);
  // Full-dimensional noise swamps the local scale and the estimate climbs.
  CHECK(rows[1].id_noisy > rows[0].id_noisy);
  CHECK(rows[2].id_noisy > rows[0].id_noisy + 0.5);

  // Determinism: the same call reproduces every number exactly.
  const std::vector<IdSweepRow> again = noise_id_sweep(s2, sigmas, 1200, 25, 818181);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].id_noisy == again[i].id_noisy);
    CHECK(rows[i].id_clean == again[i].id_clean);
  }
}

// --------------------------------------------------------- approximation

TEST_CASE("approximation sweep tracks the planned scale for a Lipschitz target") {
  const ManifoldSpec m = wide_circle(3, 0.45);
  const TargetFunction target = make_abs_coordinate_target(m, 1.0);
  // Error targets stay beneath this circle's feasibility cap reach/2.
  const ApproxSweepResult sweep =
      approximation_sweep(m, 0.0, target, {0.2, 0.15, 0.11, 0.085}, 10000, 6101);

  REQUIRE(sweep.points.size() == 4);
  for (std::size_t i = 0; i < sweep.points.size(); ++i) {
    const ApproxPoint& pt = sweep.points[i];
    REQUIRE(pt.sup_err <= pt.eps);  // the sup-norm contract, per network
    CHECK(pt.sup_err > 0.0);
    CHECK(pt.blocks > 0);
    CHECK(pt.ell > 0);
    CHECK(pt.kappa > 0.0);
    if (i > 0) {
      CHECK(sweep.points[i - 1].delta < pt.delta);
      CHECK(sweep.points[i - 1].ell >= pt.ell);  // finer scale costs more tokens
    }
    std::printf("[approx] eps %.3f delta %.3e sup_err %.3e ell %d heads %d\n", pt.eps, pt.delta,
                pt.sup_err, pt.ell, pt.max_heads);
  }
  std::printf("[approx] alpha=1 slope %.3f +- %.3f\n", sweep.rates.slope,
              sweep.rates.half_width);
  CHECK(std::fabs(sweep.rates.slope - 1.0) <= 0.3);
  CHECK(sweep.rates.config["alpha"] == 1.0);
  CHECK(sweep.rates.config["samples"] == 10000);
  REQUIRE(sweep.rates.axis.size() == sweep.rates.errors.size());
}

TEST_CASE("approximation sweep tracks a fractional Hölder exponent") {
  const ManifoldSpec m = wide_circle(3, 0.45);
  const TargetFunction target = make_abs_coordinate_target(m, 0.5);
  // A reduced cloud: the four builds at alpha = 0.5 are the heavy part.
  const ApproxSweepResult sweep =
      approximation_sweep(m, 0.0, target, {0.45, 0.40, 0.35, 0.30}, 5000, 6202);
  for (const ApproxPoint& pt : sweep.points) REQUIRE(pt.sup_err <= pt.eps);
  std::printf("[approx] alpha=0.5 slope %.3f +- %.3f\n", sweep.rates.slope,
              sweep.rates.half_width);
  CHECK(std::fabs(sweep.rates.slope - 0.5) <= 0.3);
}

TEST_CASE("approximation sweep flags constant targets instead of fitting noise") {
  const ManifoldSpec m = wide_circle(3, 0.45);
  TargetFunction target;
  target.name = "constant";
  target.g = [](const std::vector<double>&) { return 0.7; };
  target.alpha = 1.0;
  target.L = 0.0;
  target.R = 0.7;
  const ApproxSweepResult sweep =
      approximation_sweep(m, 0.0, target, {0.2, 0.17, 0.14, 0.11}, 2000, 6303);
  for (const ApproxPoint& pt : sweep.points) {
    // The only error left is the normalization series' floor.
    REQUIRE(pt.sup_err <= 0.7 * pt.eps + 1e-9);
  }
  CHECK(std::isnan(sweep.rates.slope));
  CHECK(sweep.rates.config.contains("slope_skipped"));
}

TEST_CASE("approximation sweep rejects thin and malformed requests") {
  const ManifoldSpec m = wide_circle(3, 0.45);
  const TargetFunction target = make_abs_coordinate_target(m, 1.0);
  try {
    approximation_sweep(m, 0.0, target, {0.3, 0.2, 0.1}, 100, 1);
    FAIL("three error targets must throw");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::usage);
  }
  try {
    approximation_sweep(m, 0.0, target, {0.3, 0.2, 0.1, -0.05}, 100, 1);
    FAIL("negative error target must throw");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::usage);
  }
}

// ------------------------------------------------------- sample complexity

TEST_CASE("least-squares error over compiled features follows the sample rate") {
  const ManifoldSpec m = make_circle(3, 29);
  // The rate claim needs a target whose oscillation saturates the Lipschitz
  // modulus at every scale the sweep visits; a single-kink target lets the
  // fit superconverge on the smooth arcs and the slope overshoots.
  const TargetFunction target = make_multiscale_target(m, 0.4, 6);
  const GenSweepResult sweep =
      generalization_sweep(m, target, {200, 800, 3000, 10000}, 0.40, 5150, 10000);

  REQUIRE(sweep.points.size() == 4);
  for (std::size_t i = 0; i < sweep.points.size(); ++i) {
    const GenPoint& pt = sweep.points[i];
    REQUIRE(pt.l2_err > 0.0);
    CHECK(pt.centers > 0);
    CHECK(pt.delta < m.reach / 2.0);
    CHECK_FALSE(pt.rank_warning);
    if (i > 0) CHECK(sweep.points[i - 1].n < pt.n);
    std::printf("[gen] n %5d delta %.4f centers %3d mse %.3e\n", pt.n, pt.delta, pt.centers,
                pt.l2_err);
  }
  std::printf("[gen] circle slope %.3f +- %.3f (squared-error rate)\n", sweep.rates.slope,
              sweep.rates.half_width);
  // Squared risk decays like n^(-2/(2+d)) = n^(-2/3) on a curve.
  CHECK(std::fabs(sweep.rates.slope - (-2.0 / 3.0)) <= 0.3);
  CHECK(sweep.rates.config["ridge"] == 1e-8);
  CHECK(sweep.rates.config["labels"] == "target");
}

TEST_CASE("swapping training labels for the oracle vote moves errors within the gap") {
  const ManifoldSpec m = make_circle(3, 31);
  const TargetFunction target = make_abs_coordinate_target(m, 1.0);
  const std::vector<int> ns = {60, 200, 700, 2000};
  const GenSweepResult with_f =
      generalization_sweep(m, target, ns, 0.40, 7272, 2000, LabelSource::target);
  const GenSweepResult with_vote =
      generalization_sweep(m, target, ns, 0.40, 7272, 2000, LabelSource::oracle_vote);

  // The two label functions differ by at most the oracle's approximation
  // gap; the fitted predictors are label-local averages, so the measured
  // root errors must track within a small multiple of that gap.  The gap is
  // measured empirically on a fresh cloud at each n's scale.
  const std::vector<TubePoint> probe = sample_tube(m, 0.0, 2000, 424242);
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double delta_n = with_f.points[i].delta;
    const PartitionAtlas atlas = build_atlas(m, delta_n, 0.0);
    double gap = 0.0;
    for (const TubePoint& p : probe) {
      const double diff =
          std::fabs(oracle_f_hat(atlas, target, p.x) - target_value(m, target, p.x));
      gap = std::max(gap, diff);
    }
    const double rms_f = std::sqrt(with_f.points[i].l2_err);
    const double rms_v = std::sqrt(with_vote.points[i].l2_err);
    std::printf("[gen] n %5d |rms_f - rms_vote| %.3e vs gap %.3e\n", ns[i],
                std::fabs(rms_f - rms_v), gap);
    REQUIRE(std::fabs(rms_f - rms_v) <= 2.0 * gap + 1e-6);
  }

  // Determinism: an identical call reproduces every error bit for bit.
  const GenSweepResult rerun =
      generalization_sweep(m, target, ns, 0.40, 7272, 2000, LabelSource::target);
  for (std::size_t i = 0; i < ns.size(); ++i) {
    CHECK(rerun.points[i].l2_err == with_f.points[i].l2_err);
    CHECK(rerun.points[i].delta == with_f.points[i].delta);
  }
}

TEST_CASE("label noise degrades errors without breaking the pipeline") {
  const ManifoldSpec m = make_circle(3, 31);
  const TargetFunction target = make_abs_coordinate_target(m, 1.0);
  const std::vector<int> ns = {60, 200, 700, 2000};
  const GenSweepResult clean =
      generalization_sweep(m, target, ns, 0.40, 9090, 2000, LabelSource::target, 0.0);
  const GenSweepResult noisy =
      generalization_sweep(m, target, ns, 0.40, 9090, 2000, LabelSource::target, 0.1);
  // No rate is claimed under noise; the errors just have to be finite,
  // strictly worse than the clean run, and exactly reproducible.
  for (std::size_t i = 0; i < ns.size(); ++i) {
    CHECK(std::isfinite(noisy.points[i].l2_err));
    CHECK(noisy.points[i].l2_err > clean.points[i].l2_err);
  }
  CHECK(noisy.rates.config["label_noise"] == 0.1);
  const GenSweepResult again =
      generalization_sweep(m, target, ns, 0.40, 9090, 2000, LabelSource::target, 0.1);
  for (std::size_t i = 0; i < ns.size(); ++i)
    CHECK(noisy.points[i].l2_err == again.points[i].l2_err);
}

TEST_CASE("sample-complexity sweep rejects thin designs") {
  const ManifoldSpec m = make_circle(3, 29);
  const TargetFunction target = make_abs_coordinate_target(m, 1.0);
  try {
    generalization_sweep(m, target, {200, 500, 1000}, 0.4, 1);
    FAIL("three sample sizes must throw");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::usage);
  }
  try {
    generalization_sweep(m, target, {200, 400, 800, 1600}, 0.4, 1);
    FAIL("a short lever arm must throw");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::usage);
  }
}

// ------------------------------------------------------------ ridge solve

TEST_CASE("ridge solver matches closed forms and rejects indefinite systems") {
  Matrix A(2, 2);
  A(0, 0) = 4.0;
  A(0, 1) = 1.0;
  A(1, 0) = 1.0;
  A(1, 1) = 3.0;
  const double r = 1e-8;
  const std::vector<double> g = analysis::detail::solve_ridge(A, {1.0, 2.0}, r);
  // Closed-form inverse of the ridged 2x2 system.
  const double a = 4.0 + r, d = 3.0 + r, det = a * d - 1.0;
  const double x0 = (d * 1.0 - 1.0 * 2.0) / det;
  const double x1 = (a * 2.0 - 1.0 * 1.0) / det;
  CHECK(std::fabs(g[0] - x0) <= 1e-12);
  CHECK(std::fabs(g[1] - x1) <= 1e-12);

  Matrix B(2, 2);
  B(0, 0) = 1.0;
  B(0, 1) = 2.0;
  B(1, 0) = 2.0;
  B(1, 1) = 1.0;  // eigenvalues 3 and -1: not positive definite
  try {
    analysis::detail::solve_ridge(B, {1.0, 1.0}, 1e-8);
    FAIL("an indefinite system must throw");
  } catch (const relic::error& e) {
    CHECK(e.kind() == errc::verification);
  }
}
