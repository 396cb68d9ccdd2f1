#pragma once
// Measurement harness over the synthesized networks: log-log rate fits for
// the approximation and sample-complexity claims, a closed-form covering-
// number bound on the realized weight class (evaluated in log space so that
// desk-scale parameter counts do not overflow), and a nearest-neighbor
// intrinsic-dimension estimator with a noise-robustness sweep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "relic/errors.hpp"
#include "relic/geometry.hpp"
#include "relic/matrix.hpp"
#include "relic/net.hpp"
#include "relic/oracle.hpp"
#include "relic/random.hpp"
#include "relic/synthesis.hpp"

namespace relic::analysis {

// ------------------------------------------------------------ rate fitting

// Least-squares line through (ln x, ln y) with a crude confidence width:
// half_width is twice the standard error of the slope (zero when only two
// points are given, since the residual estimate needs a spare degree of
// freedom).
struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double half_width = 0.0;
};

inline SlopeFit fit_loglog(const std::vector<double>& xs, const std::vector<double>& ys) {
  require(xs.size() == ys.size(), errc::usage, "slope fit needs matching x/y lengths");
  const int n = static_cast<int>(xs.size());
  require(n >= 2, errc::usage, "slope fit needs at least two points");
  std::vector<double> lx(n), ly(n);
  for (int i = 0; i < n; ++i) {
    require(std::isfinite(xs[i]) && xs[i] > 0.0, errc::usage,
            "log-log fit needs positive finite x values");
    require(std::isfinite(ys[i]) && ys[i] > 0.0, errc::usage,
            "log-log fit needs positive finite y values");
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  require(sxx > 0.0, errc::usage, "slope fit needs at least two distinct x values");
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double rss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double r = ly[i] - f.intercept - f.slope * lx[i];
      rss += r * r;
    }
    f.half_width = 2.0 * std::sqrt(std::max(rss, 0.0) / ((n - 2) * sxx));
  }
  return f;
}

// One measured rate: the independent axis (ascending), the errors, the
// fitted log-log slope with its width, and a JSON snapshot of every knob
// that produced the numbers so reruns are reproducible from the record.
struct RateSweepResult {
  std::vector<double> axis;
  std::vector<double> errors;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double half_width = 0.0;
  nlohmann::json config;
};

// -------------------------------------------------------- rank correlation

// Spearman rank correlation with average ranks on ties.  Returns 0 when
// either side has constant ranks (no monotone association is measurable).
inline double spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys) {
  require(xs.size() == ys.size() && xs.size() >= 2, errc::usage,
          "rank correlation needs two equal-length series");
  const int n = static_cast<int>(xs.size());
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    int i = 0;
    while (i < n) {
      int j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * (i + j) + 1.0;
      for (int t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(xs), ry = ranks(ys);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
    sxy += (rx[i] - mx) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// ----------------------------------------------------------- covering bound

// Size measurements of the realized weight class.  Structural counts enter
// as doubles because they only ever feed logarithms and products; all fields
// must be positive.  output_bound rides along for reporting symmetry but the
// count itself does not consume it (the class is metrized before decoding).
struct CoveringBoundParams {
  double blocks = 1.0;        // residual attention blocks (depth)
  double heads = 1.0;         // widest block's head count
  double d_embed = 1.0;       // embedding rows
  double ell = 1.0;           // token columns
  double ffn_depth = 1.0;     // feed-forward layers per block
  double ffn_width = 1.0;     // widest feed-forward layer
  double input_dim = 1.0;     // ambient data dimension
  double output_bound = 1.0;  // decoder clamp (carried, not consumed)
  double kappa = 1.0;         // largest parameter magnitude
  double data_bound = 1.0;    // sup norm of admissible inputs
  double resolution = 1.0;    // covering radius in sup distance
};

namespace detail {

inline void check_covering_params(const CoveringBoundParams& p) {
  const double fields[] = {p.blocks, p.heads,      p.d_embed,     p.ell,
                           p.ffn_depth, p.ffn_width, p.input_dim, p.output_bound,
                           p.kappa,  p.data_bound, p.resolution};
  for (double v : fields)
    require(std::isfinite(v) && v > 0.0, errc::usage,
            "covering bound parameters must be positive and finite");
}

}  // namespace detail

// Natural log of the covering-number bound
//   N <= (2^(B+1) * Lf * M^(3B) * de^(18B^2) * wf^(18B^2Lf) * kappa^(6B^2Lf)
//         * m^(B^2) * ell^(B^2) / res) ^ (4 de^2 wf^2 D (m + Lf) B)
// with B = blocks, Lf/wf = feed-forward depth/width, de = embedding rows,
// m = widest head count, D = input dimension.  Evaluated as exponent times
// the log of the base so realistic budgets (kappa ~ 1e30, ell ~ 1e5) stay
// finite.
inline double log_covering_bound(const CoveringBoundParams& p) {
  detail::check_covering_params(p);
  const double b = p.blocks;
  const double b2 = b * b;
  const double ln2 = std::log(2.0);
  const double bracket = (b + 1.0) * ln2 + std::log(p.ffn_depth) +
                         3.0 * b * std::log(p.data_bound) + 18.0 * b2 * std::log(p.d_embed) +
                         18.0 * b2 * p.ffn_depth * std::log(p.ffn_width) +
                         6.0 * b2 * p.ffn_depth * std::log(p.kappa) + b2 * std::log(p.heads) +
                         b2 * std::log(p.ell) - std::log(p.resolution);
  const double exponent = 4.0 * p.d_embed * p.d_embed * p.ffn_width * p.ffn_width * p.input_dim *
                          (p.heads + p.ffn_depth) * b;
  return exponent * bracket;
}

// The same bound evaluated literally with pow chains.  Overflows to infinity
// for anything but small parameters; it exists purely to cross-check the
// log-space evaluation.
inline double covering_bound_direct(const CoveringBoundParams& p) {
  detail::check_covering_params(p);
  const double b = p.blocks;
  const double b2 = b * b;
  const double base = std::pow(2.0, b + 1.0) * p.ffn_depth * std::pow(p.data_bound, 3.0 * b) *
                      std::pow(p.d_embed, 18.0 * b2) *
                      std::pow(p.ffn_width, 18.0 * b2 * p.ffn_depth) *
                      std::pow(p.kappa, 6.0 * b2 * p.ffn_depth) * std::pow(p.heads, b2) *
                      std::pow(p.ell, b2) / p.resolution;
  const double exponent = 4.0 * p.d_embed * p.d_embed * p.ffn_width * p.ffn_width * p.input_dim *
                          (p.heads + p.ffn_depth) * b;
  return std::pow(base, exponent);
}

// Fills the structural fields from an audited program; the caller supplies
// the data regime (input dimension, input sup bound, decoder clamp) and the
// covering radius.
inline CoveringBoundParams covering_params(const synth::AuditReport& a, double input_dim,
                                           double data_bound, double output_bound,
                                           double resolution) {
  CoveringBoundParams p;
  p.blocks = a.blocks;
  p.heads = a.max_heads;
  p.d_embed = net::kEmbedDim;
  p.ell = a.ell;
  p.ffn_depth = a.ffn_depth;
  p.ffn_width = a.ffn_width;
  p.input_dim = input_dim;
  p.output_bound = output_bound;
  p.kappa = a.kappa;
  p.data_bound = data_bound;
  p.resolution = resolution;
  return p;
}

// ------------------------------------------------- intrinsic-dimension MLE

// Per-point maximum-likelihood dimension from the k nearest-neighbor
// distances T_1 <= ... <= T_k:
//   m(x) = [ (1/(k-2)) * sum_{j<k} ln(T_k / T_j) ]^(-1),
// aggregated over points by averaging the inverses 1/m(x) and inverting the
// mean, which is the consistent way to pool the per-point likelihoods.
// Duplicate points make some T_j zero; those pairs are skipped (shrinking
// the divisor with them), and a point whose k-th neighbor itself coincides
// is dropped entirely.  skipped_pairs, when supplied, reports how many
// log-ratios the duplicates removed.
inline double estimate_intrinsic_dim(const std::vector<std::vector<double>>& pts, int k,
                                     int* skipped_pairs = nullptr) {
  const int n = static_cast<int>(pts.size());
  require(k >= 3, errc::usage, "the dimension MLE needs at least three neighbors");
  require(n > k, errc::usage, "the dimension MLE needs more points than neighbors");
  const std::size_t dim = pts.front().size();
  require(dim >= 1, errc::usage, "points must have at least one coordinate");
  for (const std::vector<double>& p : pts)
    require(p.size() == dim, errc::usage, "all points must share one dimension");

  int skipped = 0;
  double inv_sum = 0.0;
  int used_points = 0;
  std::vector<double> d2(n - 1);
  for (int i = 0; i < n; ++i) {
    int w = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double diff = pts[i][c] - pts[j][c];
        s += diff * diff;
      }
      d2[w++] = s;
    }
    std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.end());
    std::sort(d2.begin(), d2.begin() + k);
    const double tk2 = d2[k - 1];
    if (tk2 == 0.0) {  // the whole neighborhood is one duplicated point
      skipped += k - 1;
      continue;
    }
    double acc = 0.0;
    int kept = 0;
    for (int j = 0; j < k - 1; ++j) {
      if (d2[j] == 0.0) {
        ++skipped;
        continue;
      }
      acc += 0.5 * std::log(tk2 / d2[j]);  // ln(T_k/T_j) via squared distances
      ++kept;
    }
    if (kept < 2) continue;  // too few ratios for the unbiased divisor
    inv_sum += acc / (kept - 1);
    ++used_points;
  }
  if (skipped_pairs != nullptr) *skipped_pairs = skipped;
  require(used_points > 0, errc::usage, "every neighborhood was degenerate");
  require(inv_sum > 0.0, errc::usage, "degenerate geometry: all neighbor ratios are one");
  return used_points / inv_sum;
}

// -------------------------------------------------------- noise robustness

// One row of the noise sweep: the estimator on ambient-noise-corrupted
// manifold samples next to the clean baseline (computed once and repeated,
// so the CSV carries the comparison on every row).
struct IdSweepRow {
  double sigma = 0.0;
  double id_noisy = 0.0;
  double id_clean = 0.0;
};

// Draws n on-manifold points once, then re-estimates the dimension after
// adding isotropic Gaussian coordinate noise at each sigma.  Each sigma owns
// its seeded generator, so inserting or removing levels never shifts the
// others' draws.
inline std::vector<IdSweepRow> noise_id_sweep(const geo::ManifoldSpec& m,
                                              const std::vector<double>& sigmas, int n, int k,
                                              std::uint64_t seed) {
  require(!sigmas.empty(), errc::usage, "noise sweep needs at least one noise level");
  for (double s : sigmas)
    require(std::isfinite(s) && s >= 0.0, errc::usage, "noise levels must be nonnegative");
  const std::vector<geo::TubePoint> draw = geo::sample_tube(m, 0.0, n, seed);
  std::vector<std::vector<double>> clean;
  clean.reserve(draw.size());
  for (const geo::TubePoint& p : draw) clean.push_back(p.x);
  const double id_clean = estimate_intrinsic_dim(clean, k);

  std::vector<IdSweepRow> rows;
  rows.reserve(sigmas.size());
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    Rng noise(seed + 1000003ULL * (i + 1));
    std::vector<std::vector<double>> noisy = clean;
    for (std::vector<double>& p : noisy)
      for (double& c : p) c += sigmas[i] * noise.normal();
    rows.push_back({sigmas[i], estimate_intrinsic_dim(noisy, k), id_clean});
  }
  return rows;
}

// ------------------------------------------------------ approximation rate

// One synthesized network measured against its target: the planned scale,
// the worst error over the shared test cloud, and the audited budgets.
struct ApproxPoint {
  double eps = 0.0;
  double delta = 0.0;
  double sup_err = 0.0;
  int blocks = 0;
  int max_heads = 0;
  int ell = 0;
  double kappa = 0.0;
};

struct ApproxSweepResult {
  std::vector<ApproxPoint> points;  // ascending in delta
  RateSweepResult rates;            // sup_err against delta
};

// Synthesizes one regressor per error target, measures the sup error over a
// single shared tube cloud (common draws keep the slope fit quiet), and fits
// ln(sup_err) against ln(delta).  Constant targets have no rate to measure
// (the planner collapses delta to eps itself), so their slope is left NaN
// and the config says why.  Each network is discarded before the next is
// built, which keeps the peak footprint at one materialized program.
inline ApproxSweepResult approximation_sweep(const geo::ManifoldSpec& m, double q,
                                             const oracle::TargetFunction& target,
                                             std::vector<double> eps_list, int samples = 10000,
                                             std::uint64_t seed = 6101) {
  require(eps_list.size() >= 4, errc::usage, "a rate fit needs at least four error targets");
  for (double e : eps_list)
    require(std::isfinite(e) && e > 0.0, errc::usage, "error targets must be positive");
  require(samples > 0, errc::usage, "sup error needs a positive sample count");
  std::sort(eps_list.begin(), eps_list.end());
  const std::vector<geo::TubePoint> cloud = geo::sample_tube(m, q, samples, seed);

  ApproxSweepResult out;
  for (double eps : eps_list) {
    ApproxPoint pt;
    pt.eps = eps;
    {
      const synth::RegressorBundle bundle = synth::synthesize_regressor(m, q, target, eps);
      const synth::AuditReport a = synth::audit(bundle.program, bundle.stages);
      pt.delta = bundle.plan.delta;
      pt.blocks = a.blocks;
      pt.max_heads = a.max_heads;
      pt.ell = a.ell;
      pt.kappa = a.kappa;
      const synth::Evaluator ev(bundle.program);
      for (const geo::TubePoint& p : cloud) {
        const double err = std::fabs(ev.value(p.x) - oracle::target_value(m, target, p.x));
        pt.sup_err = std::max(pt.sup_err, err);
      }
    }
    out.points.push_back(pt);
  }
  std::sort(out.points.begin(), out.points.end(),
            [](const ApproxPoint& a, const ApproxPoint& b) { return a.delta < b.delta; });

  RateSweepResult& r = out.rates;
  for (const ApproxPoint& pt : out.points) {
    r.axis.push_back(pt.delta);
    r.errors.push_back(pt.sup_err);
  }
  r.config["manifold"] = geo::kind_name(m.kind);
  r.config["ambient_dim"] = m.D;
  r.config["intrinsic_dim"] = m.d;
  r.config["q"] = q;
  r.config["target"] = target.name;
  r.config["alpha"] = target.alpha;
  r.config["holder_constant"] = target.L;
  r.config["sup_bound"] = target.R;
  r.config["eps_list"] = eps_list;
  r.config["samples"] = samples;
  r.config["seed"] = seed;
  if (target.L == 0.0) {
    r.config["slope_skipped"] = "constant target: errors sit at the division floor";
  } else {
    const SlopeFit f = fit_loglog(r.axis, r.errors);
    r.slope = f.slope;
    r.half_width = f.half_width;
  }
  return out;
}

// ---------------------------------------------------- sample-complexity fit

namespace detail {

// Solves (A + ridge*I) g = b for symmetric positive semidefinite A by an
// in-place Cholesky factorization; the ridge makes the factor unconditional.
inline std::vector<double> solve_ridge(Matrix A, std::vector<double> b, double ridge) {
  const int n = A.rows;
  require(A.cols == n && static_cast<int>(b.size()) == n, errc::usage,
          "ridge solve needs a square system");
  for (int j = 0; j < n; ++j) {
    A(j, j) += ridge;
    for (int t = 0; t < j; ++t) A(j, j) -= A(j, t) * A(j, t);
    require(A(j, j) > 0.0, errc::verification, "ridge system lost positive definiteness");
    A(j, j) = std::sqrt(A(j, j));
    for (int i = j + 1; i < n; ++i) {
      for (int t = 0; t < j; ++t) A(i, j) -= A(i, t) * A(j, t);
      A(i, j) /= A(j, j);
    }
  }
  for (int i = 0; i < n; ++i) {  // L y = b
    for (int t = 0; t < i; ++t) b[i] -= A(i, t) * b[t];
    b[i] /= A(i, i);
  }
  for (int i = n - 1; i >= 0; --i) {  // L^T g = y
    for (int t = i + 1; t < n; ++t) b[i] -= A(t, i) * b[t];
    b[i] /= A(i, i);
  }
  return b;
}

}  // namespace detail

// Training labels for the least-squares stage: the target itself, or the
// oracle's weighted center vote (the function the feature class actually
// realizes).  Switching to the vote moves every measured error by at most
// the approximation gap, which is the coupling the tests pin down.
enum class LabelSource { target, oracle_vote };

struct GenPoint {
  int n = 0;            // training sample count
  double delta = 0.0;   // scale chosen for this n
  int centers = 0;      // partition size at that scale
  double l2_err = 0.0;  // mean squared error on the fresh test cloud
  bool rank_warning = false;
};

struct GenSweepResult {
  std::vector<GenPoint> points;  // ascending in n
  RateSweepResult rates;         // l2_err against n
};

// Empirical sample-complexity curve for least squares over the compiled
// normalized-weight features.  This is a surrogate protocol: the learner
// fits coefficients over the synthesized feature class rather than running
// full empirical risk minimization over all transformer weights, so the
// measured rate certifies the feature class the construction realizes, not
// the abstract class.  For each n the scale is delta = coeff * n^(-1/(2a+d)),
// the partition and features are rebuilt, coefficients solve the ridge
// normal equations (lambda = 1e-8, always applied: stage-parallel bumps
// leave empty columns rank-deficient whenever a center sees no sample), and
// the error is the mean squared residual against the true target on a fresh
// shared test cloud.  Training draws live on the manifold (thickness 0);
// errors are squared, so the fitted slope doubles the root-mean-square rate.
// label_noise adds i.i.d. Gaussian corruption to the training labels only;
// the rate claims are for the clean protocol, the flag exists to probe
// robustness and carries no slope guarantee.
inline GenSweepResult generalization_sweep(const geo::ManifoldSpec& m,
                                           const oracle::TargetFunction& target,
                                           std::vector<int> n_list, double delta_coeff,
                                           std::uint64_t seed, int test_samples = 10000,
                                           LabelSource labels = LabelSource::target,
                                           double label_noise = 0.0) {
  require(n_list.size() >= 4, errc::usage, "a rate fit needs at least four sample sizes");
  std::sort(n_list.begin(), n_list.end());
  require(n_list.front() > 2, errc::usage, "sample sizes must exceed two");
  require(static_cast<double>(n_list.back()) >=
              31.6227766016837933 * static_cast<double>(n_list.front()),
          errc::usage, "sample sizes must span at least one and a half decades");
  require(std::isfinite(delta_coeff) && delta_coeff > 0.0, errc::usage,
          "the scale coefficient must be positive");
  require(test_samples > 0, errc::usage, "the test cloud must be nonempty");
  require(std::isfinite(label_noise) && label_noise >= 0.0, errc::usage,
          "label noise must be nonnegative");

  const double rate_exp = -1.0 / (2.0 * target.alpha + m.d);
  const std::vector<geo::TubePoint> test =
      geo::sample_tube(m, 0.0, test_samples, seed ^ 0x7e57c10dULL);
  std::vector<double> truth(test.size());
  for (std::size_t i = 0; i < test.size(); ++i)
    truth[i] = oracle::target_value(m, target, test[i].x);

  GenSweepResult out;
  for (std::size_t idx = 0; idx < n_list.size(); ++idx) {
    const int n = n_list[idx];
    GenPoint pt;
    pt.n = n;
    pt.delta = delta_coeff * std::pow(static_cast<double>(n), rate_exp);
    {
      const oracle::PartitionAtlas atlas = oracle::build_atlas(m, pt.delta, 0.0);
      const int K = atlas.size();
      pt.centers = K;
      const std::vector<geo::TubePoint> train =
          geo::sample_tube(m, 0.0, n, seed + 7919ULL * (idx + 1));
      std::vector<std::vector<double>> xs;
      xs.reserve(train.size());
      for (const geo::TubePoint& p : train) xs.push_back(p.x);
      const auto [mass_lo, mass_hi] = oracle::eta_tilde_l1_bounds(atlas, xs);
      require(mass_lo > 0.0, errc::infeasible,
              "a training point fell outside the partition support");
      const compile::CompiledProgram prog =
          synth::synthesize_eta_vector(atlas, 1e-6, 0, mass_lo, mass_hi);
      const synth::Evaluator ev(prog);

      // Normal equations accumulated streaming so the design matrix never
      // materializes; only the upper triangle is summed, then mirrored.
      Matrix A(K, K);
      std::vector<double> rhs(K, 0.0);
      Rng noise(seed + 6007ULL * (idx + 1));
      for (const std::vector<double>& x : xs) {
        const std::vector<double> phi = ev.outputs(x);
        double y = labels == LabelSource::target ? oracle::target_value(m, target, x)
                                                 : oracle::oracle_f_hat(atlas, target, x);
        if (label_noise > 0.0) y += label_noise * noise.normal();
        for (int c1 = 0; c1 < K; ++c1) {
          if (phi[c1] == 0.0) continue;
          rhs[c1] += y * phi[c1];
          for (int c2 = c1; c2 < K; ++c2) A(c1, c2) += phi[c1] * phi[c2];
        }
      }
      for (int c1 = 0; c1 < K; ++c1) {
        if (A(c1, c1) == 0.0) pt.rank_warning = true;  // a center saw no sample
        for (int c2 = 0; c2 < c1; ++c2) A(c1, c2) = A(c2, c1);
      }
      const std::vector<double> g = detail::solve_ridge(std::move(A), std::move(rhs), 1e-8);

      double sq = 0.0;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const std::vector<double> phi = ev.outputs(test[i].x);
        double pred = 0.0;
        for (int c = 0; c < K; ++c) pred += g[c] * phi[c];
        const double r = pred - truth[i];
        sq += r * r;
      }
      pt.l2_err = sq / static_cast<double>(test.size());
    }
    out.points.push_back(pt);
  }

  RateSweepResult& r = out.rates;
  for (const GenPoint& pt : out.points) {
    r.axis.push_back(static_cast<double>(pt.n));
    r.errors.push_back(pt.l2_err);
  }
  const SlopeFit f = fit_loglog(r.axis, r.errors);
  r.slope = f.slope;
  r.half_width = f.half_width;
  r.config["manifold"] = geo::kind_name(m.kind);
  r.config["ambient_dim"] = m.D;
  r.config["intrinsic_dim"] = m.d;
  r.config["target"] = target.name;
  r.config["alpha"] = target.alpha;
  r.config["holder_constant"] = target.L;
  r.config["sup_bound"] = target.R;
  r.config["n_list"] = n_list;
  r.config["delta_coeff"] = delta_coeff;
  r.config["test_samples"] = test_samples;
  r.config["seed"] = seed;
  r.config["ridge"] = 1e-8;
  r.config["labels"] = labels == LabelSource::target ? "target" : "oracle_vote";
  r.config["label_noise"] = label_noise;
  r.config["protocol"] = "surrogate: least squares over compiled features";
  return out;
}

}  // namespace relic::analysis
