#pragma once

// Synthesis of explicit transformer programs that evaluate partition-of-unity
// regressors over a tubular neighborhood of an embedded manifold.  The
// construction stacks fixed stages:
//
//   1. per-center bump programs (d+8 blocks, run stage-parallel across all
//      centers so depth never depends on the net cardinality),
//   2. a truncated-geometric-series reciprocal of the total bump mass,
//   3. componentwise products that turn raw bumps into normalized weights,
//   4. optionally a weighted vote over center values that emits the
//      regression estimate at the final token.
//
// Columns are grouped stage-major across centers so every block needs at
// most two decrement windows with uniform amounts.  All score offsets are
// powers of two: window amounts are then exactly representable and cancel
// offset contributions exactly, so distinguished inputs (a net center, say)
// evaluate bitwise-exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "relic/compile.hpp"
#include "relic/errors.hpp"
#include "relic/geometry.hpp"
#include "relic/net.hpp"
#include "relic/oracle.hpp"

namespace relic::synth {

using compile::CompiledProgram;

// Empirical mass bounds are widened by these factors before sizing the
// reciprocal series, so the certified range survives sampling error.
inline constexpr double kMassMarginLo = 0.8;
inline constexpr double kMassMarginHi = 1.2;

// Auto-allocated token budgets leave this much headroom over the minimum.
inline constexpr double kTokenHeadroom = 1.1;

// Envelope constant for the predicted parameter magnitude
// kappa <= kKappaEnvelope * D^2 * delta^-(2d+8) * (1-q)^-(2d+8),
// calibrated against audited circle/sphere/torus builds.  The binding corner
// is coarse delta near reach/2, where the delta-free ambient scale 1/(p tau)^2
// dominates the parameters while the delta powers credit none of it (worst
// audited ratio 6.9e10, sphere at delta = 0.96 * reach/2); 2^40 leaves a 16x
// margin there and is very loose in the small-delta regime, whose growth the
// exponent itself captures (audited ratios track (2d+8) within 2%).
inline constexpr double kKappaEnvelope = 1099511627776.0;

// ------------------------------------------------------------------ records

struct StageCount {
  std::string stage;
  int blocks = 0;
  int heads = 0;
};

// Geometry of the truncated-series mass reciprocal.
struct SeriesMeta {
  double c1 = 0.0, c2 = 0.0;  // certified mass range (margins applied)
  double c = 0.0;             // series center 2 / (c1 + c2)
  double q0 = 0.0;            // contraction ratio (c2 - c1) / (c2 + c1)
  int r = 1;                  // truncation order
  int s = 0;                  // power-doubling stages, ceil(log2 r)
  double tolerance = 0.0;     // relative error bound q0^(r+1)
};

struct SynthesisPlan {
  // driving quantities
  double eps = 0.0;     // sup-norm error target
  double alpha = 1.0;   // target smoothness exponent
  double L = 0.0;       // target smoothness constant
  double q = 0.0;       // tube half-width fraction
  int d = 0, D = 0;     // intrinsic / ambient dimension
  double volume = 0.0;  // manifold volume (net cardinality scale)
  // derived scales: delta solves (1 + L (72/(1-q)^2)^alpha) delta^alpha = eps
  double delta = 0.0;
  double eps_div = 0.0;  // = delta^alpha, the normalization error budget
  // mass reciprocal
  double c1 = 0.0, c2 = 0.0, q0 = 0.0, c = 0.0;
  int r = 1, s = 0;
  // predicted budgets
  int K = 0;       // net cardinality (packing estimate)
  int ell = 0;     // token budget, with headroom
  int blocks = 0;  // network depth
  int heads = 0;   // widest block
  double kappa = 0.0;
  int ambient_extra_cols = 0;  // columns the ambient-distance branch adds per center
  bool series_dominates = false;
  std::string warning;
  std::vector<std::pair<std::string, int>> stage_slots;  // per-stage column counts
};

struct AuditReport {
  int blocks = 0;       // depth
  int max_heads = 0;    // widest block
  int total_heads = 0;  // heads across all blocks
  int ell = 0;
  int ffn_depth = 0, ffn_width = 0;
  double kappa = 0.0;  // largest parameter magnitude in the materialized net
  std::vector<StageCount> stages;
};

// ------------------------------------------------------------------ detail

namespace detail {

using compile::DecWindow;
using compile::HeadSpec;
using compile::detail::add_block;
using compile::detail::cadd_head;
using compile::detail::cmul_head;
using compile::detail::mult_head;
using compile::detail::square_head;
using compile::detail::sum_head;

// Smallest power of two >= x.  Offsets drawn from this grid make window
// amounts (count * offset) exactly representable, so offset cancellation is
// exact wherever the data values themselves are exact.
inline double pow2_ge(double x) {
  require(std::isfinite(x) && x > 0.0, errc::usage, "offset bound must be positive and finite");
  double p = 1.0;
  while (p < x) p *= 2.0;
  while (p * 0.5 >= x) p *= 0.5;
  return p;
}

// Column map for K stage-parallel bump chunks over one shared input group.
// Columns 1..D hold the input; each later group is contiguous across all
// chunks so a single uniform decrement window covers a whole stage.
struct StackLayout {
  int D = 0, d = 0, K = 0;
  int wbase = 0;  // differences x - z, K*D columns
  int cbase = 0;  // difference copies (linear-term cancellation), K*D
  int pbase = 0;  // tangent-row products, d groups of K*D
  int tbase = 0;  // tangent sums + copies, 2*K*d
  int sbase = 0;  // scalar cascade S1..S7, 7 groups of K

  int w(int c, int k) const { return wbase + c * D + k; }
  int wc(int c, int k) const { return cbase + c * D + k; }
  int prod(int c, int j, int k) const { return pbase + (j - 1) * K * D + c * D + k; }
  int t(int c, int j) const { return tbase + c * d + j; }
  int tc(int c, int j) const { return tbase + K * d + c * d + j; }
  int s(int stage, int c) const { return sbase + (stage - 1) * K + c + 1; }
  int bump_end() const { return sbase + 7 * K; }
};

inline StackLayout make_layout(int D, int d, int K) {
  require(D >= 1 && d >= 1 && d <= D, errc::usage, "invalid dimensions for the bump layout");
  require(K >= 1, errc::usage, "need at least one center");
  StackLayout ly;
  ly.D = D;
  ly.d = d;
  ly.K = K;
  ly.wbase = D;
  ly.cbase = D + K * D;
  ly.pbase = D + 2 * K * D;
  ly.tbase = D + (2 + d) * K * D;
  ly.sbase = ly.tbase + 2 * K * d;
  return ly;
}

inline void mark_stage(std::vector<StageCount>* log, const char* name, const CompiledProgram& prog,
                       std::size_t first_block) {
  if (log == nullptr) return;
  int heads = 0;
  for (std::size_t b = first_block; b < prog.blocks.size(); ++b)
    heads += static_cast<int>(prog.blocks[b].heads.size());
  log->push_back({name, static_cast<int>(prog.blocks.size() - first_block), heads});
}

// Appends the d+8 bump stages for the selected centers.  After them, column
// s(7, c) holds relu(1 - |x-z_c|^2/(p tau_c)^2 - |P_c^T (x-z_c)|^2/(h delta)^2)
// exactly (up to roundoff).  All offsets are powers of two, so a center
// input with coordinates in (0, 1) evaluates to exactly 1.0: the difference
// scores land bitwise on their offsets (round-to-nearest-even absorbs the
// half-ulp perturbation) and every later stage cancels exactly at zero.
// Scores stay nonnegative for any input with |x_k| <= zmax + 1, which covers
// both the unit cube and the full tube of every admissible placement.
inline void append_bump_stages(CompiledProgram& prog, const oracle::PartitionAtlas& atlas,
                               const std::vector<int>& centers, const StackLayout& ly,
                               std::vector<StageCount>* log) {
  const int D = ly.D, d = ly.d, K = ly.K;
  require(static_cast<int>(centers.size()) == K, errc::usage, "center list does not match layout");
  const double hd = atlas.h * atlas.delta;
  double tau_min = atlas.net.centers[static_cast<std::size_t>(centers[0])].tau;
  double zmax = 0.0;
  for (int c : centers) {
    const geo::NetCenter& zc = atlas.net.centers[static_cast<std::size_t>(c)];
    tau_min = std::min(tau_min, zc.tau);
    for (double zk : zc.z) zmax = std::max(zmax, std::fabs(zk));
  }
  const double xbound = zmax + 1.0;   // certified input range per coordinate
  const double wmax = xbound + zmax;  // |x_k - z_k| bound on that range
  const double sq_d = std::sqrt(static_cast<double>(D));
  const double tan_scale = 1.0 / (hd * hd);
  const double amb_max = 1.0 / ((atlas.p * tau_min) * (atlas.p * tau_min));
  const double sq_cap = static_cast<double>(D) * wmax * wmax;  // S1, S2 bound
  const double level = sq_cap * (tan_scale + amb_max);         // |S3|+|S4| bound
  const double off_w = pow2_ge(wmax + 1.0);
  const double off_tc = pow2_ge(sq_d * wmax + 1.0);

  // B1: differences x - z, two copies per coordinate.  The second copy feeds
  // the linear-term cancellation once squares land in place.
  {
    const std::size_t first = prog.blocks.size();
    std::vector<HeadSpec> heads;
    heads.reserve(static_cast<std::size_t>(2 * K * D));
    for (int c = 0; c < K; ++c) {
      const geo::NetCenter& z = atlas.net.centers[static_cast<std::size_t>(centers[c])];
      for (int k = 1; k <= D; ++k) {
        const double zk = z.z[static_cast<std::size_t>(k - 1)];
        heads.push_back(cadd_head(ly.w(c, k), k, -zk, off_w, off_w + xbound + 1.0));
        heads.push_back(cadd_head(ly.wc(c, k), k, -zk, off_w, off_w + xbound + 1.0));
      }
    }
    add_block(prog, std::move(heads), {DecWindow{1, 1, ly.wbase, ly.cbase + K * D + 1, off_w}});
    mark_stage(log, "differences", prog, first);
  }

  // B2..B_{d+1}: one block per tangent direction, products P(., j) .* w.
  {
    const std::size_t first = prog.blocks.size();
    for (int j = 1; j <= d; ++j) {
      std::vector<HeadSpec> heads;
      heads.reserve(static_cast<std::size_t>(K * D));
      for (int c = 0; c < K; ++c) {
        const geo::NetCenter& z = atlas.net.centers[static_cast<std::size_t>(centers[c])];
        for (int k = 1; k <= D; ++k)
          heads.push_back(cmul_head(ly.prod(c, j, k), ly.w(c, k), z.P(k - 1, j - 1), off_w,
                                    off_w + wmax + 1.0));
      }
      const int lo = ly.pbase + (j - 1) * K * D;
      add_block(prog, std::move(heads), {DecWindow{1, 1, lo, lo + K * D + 1, off_w}});
    }
    mark_stage(log, "tangent-products", prog, first);
  }

  // B_{d+2}: tangent coordinates t_j = sum_k P(k,j) w_k, plus exact copies
  // (same head sequence, so both columns round identically).
  {
    const std::size_t first = prog.blocks.size();
    std::vector<HeadSpec> heads;
    heads.reserve(static_cast<std::size_t>(2 * K * d * D));
    for (int c = 0; c < K; ++c)
      for (int j = 1; j <= d; ++j) {
        for (int k = 1; k <= D; ++k)
          heads.push_back(sum_head(ly.t(c, j), ly.prod(c, j, k), off_w, off_w + wmax + 1.0));
        for (int k = 1; k <= D; ++k)
          heads.push_back(sum_head(ly.tc(c, j), ly.prod(c, j, k), off_w, off_w + wmax + 1.0));
      }
    add_block(prog, std::move(heads),
              {DecWindow{1, 1, ly.tbase, ly.tbase + 2 * K * d + 1,
                         static_cast<double>(D) * off_w}});
    mark_stage(log, "tangent-sums", prog, first);
  }

  // B_{d+3}: squares in place (value -> value + value^2); the ambient branch
  // shares this block, squaring the difference columns directly.
  {
    const std::size_t first = prog.blocks.size();
    std::vector<HeadSpec> heads;
    heads.reserve(static_cast<std::size_t>(K * (D + d)));
    for (int c = 0; c < K; ++c) {
      for (int k = 1; k <= D; ++k) heads.push_back(square_head(ly.w(c, k), wmax + 1.0));
      for (int j = 1; j <= d; ++j) heads.push_back(square_head(ly.t(c, j), sq_d * wmax + 1.0));
    }
    add_block(prog, std::move(heads), {});
    mark_stage(log, "squares", prog, first);
  }

  // B_{d+4}: sums of squares.  S1 = sum_j t_j^2 (tangential), S2 = |w|^2
  // (ambient); each term arrives as (v + v^2) - v via the copies.  The
  // summed value v + v^2 is at least -1/4, so a fixed offset of 2 suffices.
  {
    const std::size_t first = prog.blocks.size();
    std::vector<HeadSpec> heads;
    heads.reserve(static_cast<std::size_t>(2 * K * (D + d)));
    const double vb_t = sq_cap + sq_d * wmax + off_tc + 2.0;
    const double vb_w = wmax * wmax + wmax + off_w + 2.0;
    for (int c = 0; c < K; ++c) {
      for (int j = 1; j <= d; ++j) {
        heads.push_back(sum_head(ly.s(1, c), ly.t(c, j), 2.0, vb_t));
        heads.push_back(cmul_head(ly.s(1, c), ly.tc(c, j), -1.0, off_tc, vb_t));
      }
      for (int k = 1; k <= D; ++k) {
        heads.push_back(sum_head(ly.s(2, c), ly.w(c, k), 2.0, vb_w));
        heads.push_back(cmul_head(ly.s(2, c), ly.wc(c, k), -1.0, off_w, vb_w));
      }
    }
    add_block(prog, std::move(heads),
              {DecWindow{1, 1, ly.sbase, ly.sbase + K + 1, static_cast<double>(d) * (2.0 + off_tc)},
               DecWindow{1, 1, ly.sbase + K, ly.sbase + 2 * K + 1,
                         static_cast<double>(D) * (2.0 + off_w)}});
    mark_stage(log, "mass-sums", prog, first);
  }

  // B_{d+5}: scale both branches.  The multiplier varies per center (local
  // reach), the offsets are uniform global bounds so one window per group.
  {
    const std::size_t first = prog.blocks.size();
    const double off_tan = pow2_ge(sq_cap * tan_scale + 1.0);
    const double off_amb = pow2_ge(sq_cap * amb_max + 1.0);
    std::vector<HeadSpec> heads;
    heads.reserve(static_cast<std::size_t>(2 * K));
    for (int c = 0; c < K; ++c) {
      const geo::NetCenter& z = atlas.net.centers[static_cast<std::size_t>(centers[c])];
      const double pt = atlas.p * z.tau;
      heads.push_back(
          cmul_head(ly.s(3, c), ly.s(1, c), -tan_scale, off_tan, off_tan + sq_cap + tan_scale));
      heads.push_back(cmul_head(ly.s(4, c), ly.s(2, c), -1.0 / (pt * pt), off_amb,
                                off_amb + sq_cap + amb_max));
    }
    add_block(prog, std::move(heads),
              {DecWindow{1, 1, ly.sbase + 2 * K, ly.sbase + 3 * K + 1, off_tan},
               DecWindow{1, 1, ly.sbase + 3 * K, ly.sbase + 4 * K + 1, off_amb}});
    mark_stage(log, "scales", prog, first);
  }

  const double off_lvl = pow2_ge(level + 1.0);

  // B_{d+6}: combine the two scaled branches.
  {
    const std::size_t first = prog.blocks.size();
    std::vector<HeadSpec> heads;
    heads.reserve(static_cast<std::size_t>(2 * K));
    for (int c = 0; c < K; ++c) {
      heads.push_back(sum_head(ly.s(5, c), ly.s(3, c), off_lvl, level + off_lvl + 1.0));
      heads.push_back(sum_head(ly.s(5, c), ly.s(4, c), off_lvl, level + off_lvl + 1.0));
    }
    add_block(prog, std::move(heads),
              {DecWindow{1, 1, ly.sbase + 4 * K, ly.sbase + 5 * K + 1, 2.0 * off_lvl}});
    mark_stage(log, "combine", prog, first);
  }

  // B_{d+7}: add one, forming the bump argument.
  {
    const std::size_t first = prog.blocks.size();
    std::vector<HeadSpec> heads;
    heads.reserve(static_cast<std::size_t>(K));
    for (int c = 0; c < K; ++c)
      heads.push_back(cadd_head(ly.s(6, c), ly.s(5, c), 1.0, off_lvl, level + off_lvl + 2.0));
    add_block(prog, std::move(heads),
              {DecWindow{1, 1, ly.sbase + 5 * K, ly.sbase + 6 * K + 1, off_lvl}});
    mark_stage(log, "level", prog, first);
  }

  // B_{d+8}: rectify.  An offset-free head forwards only positive scores, so
  // the attention nonlinearity itself realizes relu(argument).
  {
    const std::size_t first = prog.blocks.size();
    std::vector<HeadSpec> heads;
    heads.reserve(static_cast<std::size_t>(K));
    for (int c = 0; c < K; ++c)
      heads.push_back(sum_head(ly.s(7, c), ly.s(6, c), 0.0, level + 2.0));
    add_block(prog, std::move(heads), {});
    mark_stage(log, "rectify", prog, first);
  }
}

// Smallest r >= 1 with q0^(r+1) / min(c1, 1) <= tol.  Dividing by c1 when
// c1 < 1 matches the planning identity; the min(., 1) guard additionally
// keeps the componentwise relative error at most tol when c1 > 1.
inline int series_order(double q0, double c1, double tol) {
  require(std::isfinite(tol) && tol > 0.0, errc::usage, "series tolerance must be positive");
  require(q0 >= 0.0 && q0 < 1.0, errc::infeasible, "mass range admits no contracting series");
  const double floor_c = std::min(c1, 1.0);
  int r = 1;
  while (std::pow(q0, r + 1) / floor_c > tol) {
    ++r;
    require(r <= (1 << 20), errc::infeasible,
            "mass range too wide: the reciprocal series will not reach tolerance");
  }
  return r;
}

// Appends the mass reciprocal (3s+5 blocks) and the normalization products
// (3 blocks).  Returns the first column of the weight outputs minus one.
inline int append_weight_stages(CompiledProgram& prog, const StackLayout& ly,
                                const SeriesMeta& sm, std::vector<StageCount>* log) {
  const int K = ly.K;
  const int div0 = ly.bump_end();
  auto dv = [&](int local) { return div0 + local - 1; };  // series scratch, locals 2..4+2^s
  const int top = 1 << sm.s;
  const int f0 = dv(4 + top);  // weights live at f0+1 .. f0+K
  const double rec_max = sm.c * static_cast<double>(sm.r + 1);

  // Mass: fold the l1 sum of the bumps into the first series step, scoring
  // -c * eta~_c per center straight into one column.
  {
    const std::size_t first = prog.blocks.size();
    const double off = pow2_ge(sm.c + 1.0);
    std::vector<HeadSpec> heads;
    heads.reserve(static_cast<std::size_t>(K));
    for (int c = 0; c < K; ++c)
      heads.push_back(cmul_head(dv(2), ly.s(7, c), -sm.c, off, off + sm.c + 1.0));
    add_block(prog, std::move(heads),
              {DecWindow{1, 1, dv(2) - 1, dv(2) + 1, static_cast<double>(K) * off}});
    mark_stage(log, "mass", prog, first);
  }

  // Recenter: y = 1 - c * mass; |y| <= q0 on the certified range.
  {
    const std::size_t first = prog.blocks.size();
    add_block(prog, {cadd_head(dv(3), dv(2), 1.0, 4.0, sm.c * sm.c2 + 6.0)},
              {DecWindow{1, 1, dv(3) - 1, dv(3) + 1, 4.0}});
    mark_stage(log, "recenter", prog, first);
  }

  // Power table: after stage k, dv(2+m) holds y^m for m <= 2^k.
  {
    const std::size_t first = prog.blocks.size();
    for (int k = 1; k <= sm.s; ++k) {
      const int half = 1 << (k - 1);
      const int lo = dv(2 + half + 1) - 1, hi = dv(2 + 2 * half) + 1;
      std::vector<HeadSpec> copy, mult, fix;
      for (int m = 1; m <= half; ++m) {
        copy.push_back(cmul_head(dv(2 + half + m), dv(2 + m), 1.0, 2.0, 3.0));
        mult.push_back(mult_head(dv(2 + half + m), dv(2 + half), 2.0, 3.0));
        fix.push_back(cmul_head(dv(2 + half + m), dv(2 + m), -1.0, 2.0, 3.0));
      }
      add_block(prog, std::move(copy), {DecWindow{1, 1, lo, hi, 2.0}});
      add_block(prog, std::move(mult), {DecWindow{1, 1, lo, hi, 2.0}});
      add_block(prog, std::move(fix), {DecWindow{1, 1, lo, hi, 2.0}});
    }
    mark_stage(log, "powers", prog, first);
  }

  // Fold the tail powers onto y (an empty block keeps the stage schedule
  // fixed when r = 1).
  {
    const std::size_t first = prog.blocks.size();
    std::vector<HeadSpec> heads;
    for (int j = 2; j <= sm.r; ++j) heads.push_back(sum_head(dv(3), dv(2 + j), 2.0, 3.0));
    std::vector<DecWindow> decs;
    if (sm.r >= 2)
      decs.push_back(DecWindow{1, 1, dv(3) - 1, dv(3) + 1, 2.0 * static_cast<double>(sm.r - 1)});
    add_block(prog, std::move(heads), std::move(decs));
    mark_stage(log, "fold", prog, first);
  }

  // Tail: + 1 completes sum_{j=0..r} y^j.
  {
    const std::size_t first = prog.blocks.size();
    const double off = pow2_ge(static_cast<double>(sm.r) + 2.0);
    add_block(prog, {cadd_head(dv(3 + top), dv(3), 1.0, off, off + static_cast<double>(sm.r) + 2.0)},
              {DecWindow{1, 1, dv(3 + top) - 1, dv(3 + top) + 1, off}});
    mark_stage(log, "tail", prog, first);
  }

  // Reciprocal: multiply by the series center.
  {
    const std::size_t first = prog.blocks.size();
    const double off = pow2_ge(rec_max + 1.0);
    add_block(prog, {cmul_head(dv(4 + top), dv(3 + top), sm.c, off, off + rec_max + 1.0)},
              {DecWindow{1, 1, dv(4 + top) - 1, dv(4 + top) + 1, off}});
    mark_stage(log, "reciprocal", prog, first);
  }

  // Normalization: weights T_c = eta~_c * reciprocal (copy, multiply, fix).
  {
    const std::size_t first = prog.blocks.size();
    const double off_m = pow2_ge(rec_max + 1.0);
    std::vector<HeadSpec> copy, mult, fix;
    for (int c = 0; c < K; ++c) {
      copy.push_back(cmul_head(f0 + c + 1, ly.s(7, c), 1.0, 1.0, 2.0));
      mult.push_back(mult_head(f0 + c + 1, dv(4 + top), off_m, off_m + rec_max + 1.0));
      fix.push_back(cmul_head(f0 + c + 1, ly.s(7, c), -1.0, 1.0, 2.0));
    }
    add_block(prog, std::move(copy), {DecWindow{1, 1, f0, f0 + K + 1, 1.0}});
    add_block(prog, std::move(mult), {DecWindow{1, 1, f0, f0 + K + 1, off_m}});
    add_block(prog, std::move(fix), {DecWindow{1, 1, f0, f0 + K + 1, 1.0}});
    mark_stage(log, "weights", prog, first);
  }

  return f0;
}

// Appends the weighted vote: scale each weight by its center value, then sum
// into the readout column.
inline void append_vote_stages(CompiledProgram& prog, const StackLayout& ly, int f0,
                               const std::vector<double>& votes, double weight_bound, int out_col,
                               std::vector<StageCount>* log) {
  const int K = ly.K;
  require(static_cast<int>(votes.size()) == K, errc::usage, "vote list does not match layout");
  const int g0 = f0 + K;
  require(out_col > g0 + K, errc::usage, "readout column must follow the vote columns");
  double gmax = 1.0;
  for (double g : votes) gmax = std::max(gmax, std::fabs(g));
  const double off = pow2_ge(gmax * weight_bound + 1.0);
  {
    const std::size_t first = prog.blocks.size();
    std::vector<HeadSpec> heads;
    heads.reserve(static_cast<std::size_t>(K));
    for (int c = 0; c < K; ++c)
      heads.push_back(cmul_head(g0 + c + 1, f0 + c + 1, votes[static_cast<std::size_t>(c)], off,
                                off + gmax * weight_bound + 1.0));
    add_block(prog, std::move(heads), {DecWindow{1, 1, g0, g0 + K + 1, off}});
    mark_stage(log, "votes", prog, first);
  }
  {
    const std::size_t first = prog.blocks.size();
    std::vector<HeadSpec> heads;
    heads.reserve(static_cast<std::size_t>(K));
    for (int c = 0; c < K; ++c)
      heads.push_back(sum_head(out_col, g0 + c + 1, off, off + gmax * weight_bound + 1.0));
    add_block(prog, std::move(heads),
              {DecWindow{1, 1, out_col - 1, out_col + 1, static_cast<double>(K) * off}});
    mark_stage(log, "readout", prog, first);
  }
}

}  // namespace detail

// ---------------------------------------------------------------- programs

// Compiles the raw bump of center i: d+8 blocks, (d+3)D + 2d + 7 columns.
// The output token equals the oracle bump up to roundoff, and equals 1
// bitwise when x is the center itself.
inline CompiledProgram synthesize_eta_tilde(const oracle::PartitionAtlas& atlas, int i, int ell = 0,
                                            std::vector<StageCount>* stage_log = nullptr) {
  require(i >= 0 && i < atlas.size(), errc::usage, "center index out of range");
  const int D = atlas.manifold.D, d = atlas.manifold.d;
  const detail::StackLayout ly = detail::make_layout(D, d, 1);
  CompiledProgram prog;
  prog.contract.op = "bump";
  for (int k = 1; k <= D; ++k) prog.contract.input_slots.push_back(k);
  prog.contract.output_slots = {ly.s(7, 0)};
  prog.contract.bound_M = 1.0;
  prog.contract.claimed_tolerance = 0.0;
  detail::append_bump_stages(prog, atlas, {i}, ly, stage_log);
  prog.min_ell = ly.bump_end();
  compile::detail::materialize(prog, ell == 0 ? prog.min_ell : ell, 2.0);
  return prog;
}

// Compiles the full normalized-weight vector: K stage-parallel bumps, a
// truncated-series reciprocal of their total mass, and K products.  On the
// certified mass range each output satisfies |T_c - eta_c| <= tol * eta_c
// with tol = q0^(r+1) <= eps_div, and the outputs sum to within tol of 1.
inline CompiledProgram synthesize_eta_vector(const oracle::PartitionAtlas& atlas, double eps_div,
                                             int ell, double mass_lo, double mass_hi,
                                             SeriesMeta* meta = nullptr,
                                             std::vector<StageCount>* stage_log = nullptr) {
  require(std::isfinite(eps_div) && eps_div > 0.0, errc::usage,
          "normalization tolerance must be positive");
  require(std::isfinite(mass_lo) && std::isfinite(mass_hi) && mass_hi >= mass_lo, errc::usage,
          "mass bounds must be finite and ordered");
  const int K = atlas.size();
  const int D = atlas.manifold.D, d = atlas.manifold.d;

  SeriesMeta sm;
  sm.c1 = kMassMarginLo * mass_lo;
  sm.c2 = kMassMarginHi * mass_hi;
  require(sm.c1 > 0.0, errc::infeasible,
          "bump mass lower bound must be positive: the reciprocal is undefined");
  sm.c = 2.0 / (sm.c1 + sm.c2);
  sm.q0 = (sm.c2 - sm.c1) / (sm.c2 + sm.c1);
  sm.r = detail::series_order(sm.q0, sm.c1, eps_div);
  sm.s = compile::ceil_log2(sm.r);
  sm.tolerance = std::pow(sm.q0, sm.r + 1);

  const detail::StackLayout ly = detail::make_layout(D, d, K);
  CompiledProgram prog;
  prog.contract.op = "eta_vector";
  for (int k = 1; k <= D; ++k) prog.contract.input_slots.push_back(k);
  prog.contract.bound_M = 1.0;
  prog.contract.claimed_tolerance = sm.tolerance;

  std::vector<int> centers(static_cast<std::size_t>(K));
  for (int c = 0; c < K; ++c) centers[static_cast<std::size_t>(c)] = c;
  detail::append_bump_stages(prog, atlas, centers, ly, stage_log);
  const int f0 = detail::append_weight_stages(prog, ly, sm, stage_log);
  for (int c = 0; c < K; ++c) prog.contract.output_slots.push_back(f0 + c + 1);

  {
    compile::ProgramContract bumps;
    bumps.op = "bumps";
    bumps.input_slots = prog.contract.input_slots;
    for (int c = 0; c < K; ++c) bumps.output_slots.push_back(ly.s(7, c));
    bumps.bound_M = 1.0;
    bumps.claimed_tolerance = 0.0;
    prog.sub_contracts.push_back(std::move(bumps));

    compile::ProgramContract recip;
    recip.op = "mass_reciprocal";
    for (int c = 0; c < K; ++c) recip.input_slots.push_back(ly.s(7, c));
    recip.output_slots = {ly.bump_end() + 3 + (1 << sm.s)};
    recip.bound_M = sm.c2;
    recip.claimed_tolerance = sm.tolerance / sm.c1;
    prog.sub_contracts.push_back(std::move(recip));
  }

  prog.min_ell = f0 + K;
  compile::detail::materialize(prog, ell == 0 ? prog.min_ell : ell, 2.0);
  if (meta != nullptr) *meta = sm;
  return prog;
}

// ------------------------------------------------------------------- plan

inline SynthesisPlan plan_from_epsilon(const geo::ManifoldSpec& m, double q, double alpha, double L,
                                       double eps, double mass_lo, double mass_hi) {
  require(std::isfinite(eps) && eps > 0.0, errc::usage, "error target must be positive");
  require(alpha > 0.0 && alpha <= 1.0, errc::usage, "smoothness exponent must lie in (0, 1]");
  require(std::isfinite(L) && L >= 0.0, errc::usage, "smoothness constant must be nonnegative");
  require(q >= 0.0 && q < 1.0, errc::usage, "tube fraction must lie in [0, 1)");
  require(m.d >= 1 && m.d <= 3, errc::usage, "cardinality estimate covers d <= 3");

  SynthesisPlan p;
  p.eps = eps;
  p.alpha = alpha;
  p.L = L;
  p.q = q;
  p.d = m.d;
  p.D = m.D;
  p.volume = m.volume;

  const double shrink = (1.0 - q) * (1.0 - q);
  const double amplif = 1.0 + L * std::pow(72.0 / shrink, alpha);
  p.eps_div = eps / amplif;
  p.delta = (alpha == 1.0) ? p.eps_div : std::pow(p.eps_div, 1.0 / alpha);

  p.c1 = kMassMarginLo * mass_lo;
  p.c2 = kMassMarginHi * mass_hi;
  require(p.c1 > 0.0 && std::isfinite(p.c2) && p.c2 >= p.c1, errc::infeasible,
          "bump mass range must be positive to size the reciprocal series");
  p.c = 2.0 / (p.c1 + p.c2);
  p.q0 = (p.c2 - p.c1) / (p.c2 + p.c1);
  p.r = detail::series_order(p.q0, p.c1, p.eps_div);
  p.s = compile::ceil_log2(p.r);

  // Net cardinality from delta-separation packing: K <= 2^d Vol / (w_d delta^d).
  static constexpr double kUnitBall[3] = {2.0, 3.141592653589793238462643383279502884,
                                          4.188790204786390984616857844372670512};
  const double packing =
      std::pow(2.0, m.d) * m.volume / (kUnitBall[m.d - 1] * std::pow(p.delta, m.d));
  require(std::isfinite(packing) && packing < 1e9, errc::infeasible,
          "predicted net cardinality is out of desk scale");
  p.K = std::max(1, static_cast<int>(std::ceil(packing)));

  const int chunk = (m.d + 2) * m.D + 2 * m.d + 9;  // per-center columns, weights included
  const int series_cols = (1 << p.s) + 3;
  p.ell = static_cast<int>(
      std::ceil(kTokenHeadroom * static_cast<double>(m.D + p.K * chunk + series_cols + 1)));
  p.blocks = m.d + 3 * p.s + 18;
  p.heads = 2 * p.K * m.d * m.D;
  p.kappa = kKappaEnvelope * static_cast<double>(m.D) * static_cast<double>(m.D) *
            std::pow(p.delta, -(2.0 * m.d + 8.0)) * std::pow(1.0 - q, -(2.0 * m.d + 8.0));
  p.ambient_extra_cols = m.D + 2;
  p.series_dominates = series_cols > p.K * m.D;
  if (p.series_dominates)
    p.warning = "series stage needs " + std::to_string(series_cols) +
                " columns, more than the K*D bump budget of " + std::to_string(p.K * m.D) +
                "; depth and width are dominated by the reciprocal, not the net";

  p.stage_slots = {{"inputs", m.D},
                   {"differences", 2 * p.K * m.D},
                   {"tangent-products", p.K * m.d * m.D},
                   {"tangent-sums", 2 * p.K * m.d},
                   {"mass-sums", 2 * p.K},
                   {"scales", 2 * p.K},
                   {"combine", p.K},
                   {"level", p.K},
                   {"rectify", p.K},
                   {"series", series_cols},
                   {"weights", p.K},
                   {"votes", p.K},
                   {"readout", 1}};
  return p;
}

// -------------------------------------------------------------- regressor

struct RegressorBundle {
  SynthesisPlan plan;
  oracle::PartitionAtlas atlas;
  CompiledProgram program;
  SeriesMeta series;
  double mass_lo = 0.0, mass_hi = 0.0;  // empirical bounds behind the margins
  std::vector<double> votes;            // target values at the centers
  std::vector<StageCount> stages;
};

// End-to-end synthesis: plan delta from eps, build the net and atlas, bound
// the bump mass empirically, then stack bumps, reciprocal, weights, and the
// weighted vote.  The readout column is the final token; the decoder clamp
// is the target's sup bound.
inline RegressorBundle synthesize_regressor(const geo::ManifoldSpec& m, double q,
                                            const oracle::TargetFunction& target, double eps,
                                            int ell = 0, int mass_samples = 2000,
                                            std::uint64_t seed = 9001) {
  require(std::isfinite(eps) && eps > 0.0, errc::usage, "error target must be positive");
  const double eps_cap = std::min(1.0, std::pow(m.reach / 2.0, target.alpha));
  require(eps < eps_cap, errc::infeasible,
          "error target must lie below min(1, (reach/2)^alpha) for this manifold");

  RegressorBundle out;

  // Scales first; the mass bounds need the atlas.
  const double shrink = (1.0 - q) * (1.0 - q);
  const double amplif = 1.0 + target.L * std::pow(72.0 / shrink, target.alpha);
  const double eps_div = eps / amplif;
  const double delta = (target.alpha == 1.0) ? eps_div : std::pow(eps_div, 1.0 / target.alpha);
  require(delta < m.reach / 2.0, errc::infeasible,
          "planned net scale collides with the reach; raise the error target");

  geo::DeltaNet net = geo::build_delta_net(m, delta);
  out.atlas = oracle::make_atlas(m, std::move(net), q);
  const int K = out.atlas.size();

  std::vector<geo::TubePoint> pts = geo::sample_tube(m, q, mass_samples, seed);
  std::vector<std::vector<double>> xs;
  xs.reserve(pts.size());
  for (const geo::TubePoint& tp : pts) xs.push_back(tp.x);
  const std::pair<double, double> bounds = oracle::eta_tilde_l1_bounds(out.atlas, xs);
  out.mass_lo = bounds.first;
  out.mass_hi = bounds.second;

  out.plan = plan_from_epsilon(m, q, target.alpha, target.L, eps, out.mass_lo, out.mass_hi);

  SeriesMeta sm;
  sm.c1 = out.plan.c1;
  sm.c2 = out.plan.c2;
  sm.c = out.plan.c;
  sm.q0 = out.plan.q0;
  sm.r = out.plan.r;
  sm.s = out.plan.s;
  sm.tolerance = std::pow(sm.q0, sm.r + 1);
  out.series = sm;

  out.votes.resize(static_cast<std::size_t>(K));
  for (int c = 0; c < K; ++c)
    out.votes[static_cast<std::size_t>(c)] =
        target.g(out.atlas.net.centers[static_cast<std::size_t>(c)].z);

  const detail::StackLayout ly = detail::make_layout(m.D, m.d, K);
  CompiledProgram prog;
  prog.contract.op = "manifold_regressor";
  for (int k = 1; k <= m.D; ++k) prog.contract.input_slots.push_back(k);
  prog.contract.bound_M = 1.0;
  prog.contract.claimed_tolerance = eps;

  std::vector<int> centers(static_cast<std::size_t>(K));
  for (int c = 0; c < K; ++c) centers[static_cast<std::size_t>(c)] = c;
  detail::append_bump_stages(prog, out.atlas, centers, ly, &out.stages);
  const int f0 = detail::append_weight_stages(prog, ly, sm, &out.stages);
  const int min_ell = f0 + 2 * K + 1;
  const int ell_final =
      ell > 0 ? ell
              : static_cast<int>(std::ceil(kTokenHeadroom * static_cast<double>(min_ell)));
  require(ell_final >= min_ell, errc::infeasible,
          "token budget too small: the regressor needs " + std::to_string(min_ell) + " columns");
  detail::append_vote_stages(prog, ly, f0, out.votes, sm.c * static_cast<double>(sm.r + 1),
                             ell_final, &out.stages);
  prog.contract.output_slots = {ell_final};
  prog.min_ell = ell_final;

  {
    compile::ProgramContract bumps;
    bumps.op = "bumps";
    bumps.input_slots = prog.contract.input_slots;
    for (int c = 0; c < K; ++c) bumps.output_slots.push_back(ly.s(7, c));
    bumps.bound_M = 1.0;
    prog.sub_contracts.push_back(std::move(bumps));

    compile::ProgramContract weights;
    weights.op = "eta_vector";
    weights.input_slots = prog.contract.input_slots;
    for (int c = 0; c < K; ++c) weights.output_slots.push_back(f0 + c + 1);
    weights.bound_M = 1.0;
    weights.claimed_tolerance = sm.tolerance;
    prog.sub_contracts.push_back(std::move(weights));
  }

  compile::detail::materialize(prog, ell_final, target.R);
  out.program = std::move(prog);
  return out;
}

// ---------------------------------------------------------------- evaluate

// Reusable evaluator: clones one positional embedding template per network
// and fills only the data row, sparing the per-point cos/sin sweep.  Results
// are bit-identical to CompiledProgram::forward.
class Evaluator {
 public:
  explicit Evaluator(const CompiledProgram& prog)
      : prog_(&prog), tmpl_(net::embed_input({}, prog.network.ell)) {}

  Matrix run(const std::vector<double>& x) const {
    require(static_cast<int>(x.size()) <= tmpl_.cols, errc::usage,
            "input exceeds the token budget");
    Matrix H = tmpl_;
    for (std::size_t i = 0; i < x.size(); ++i) H(0, static_cast<int>(i)) = x[i];
    return prog_->forward_embedded(std::move(H));
  }

  // Values at the program's output slots.
  std::vector<double> outputs(const std::vector<double>& x) const {
    const Matrix H = run(x);
    std::vector<double> out;
    out.reserve(prog_->contract.output_slots.size());
    for (int slot : prog_->contract.output_slots) out.push_back(H(0, slot - 1));
    return out;
  }

  // Decoder semantics: the final token's value, clamped to the output bound.
  double value(const std::vector<double>& x) const {
    const Matrix H = run(x);
    const double bound = prog_->network.output_bound;
    return std::clamp(H(0, prog_->network.ell - 1), -bound, bound);
  }

 private:
  const CompiledProgram* prog_;
  Matrix tmpl_;
};

// ------------------------------------------------------------------- audit

inline AuditReport audit(const CompiledProgram& prog, std::vector<StageCount> stages = {}) {
  AuditReport a;
  a.blocks = static_cast<int>(prog.blocks.size());
  for (const compile::BlockSpec& bs : prog.blocks) {
    const int h = static_cast<int>(bs.heads.size());
    a.total_heads += h;
    a.max_heads = std::max(a.max_heads, h);
  }
  a.ell = prog.network.ell;
  a.kappa = prog.network.kappa_obs();
  for (const net::TransformerBlock& blk : prog.network.blocks) {
    a.ffn_depth = std::max(a.ffn_depth, blk.ffn.depth());
    a.ffn_width = std::max(a.ffn_width, blk.ffn.width());
  }
  a.stages = std::move(stages);
  return a;
}

// ------------------------------------------------------------------- json

inline nlohmann::json plan_to_json(const SynthesisPlan& p) {
  nlohmann::json j;
  j["eps"] = p.eps;
  j["alpha"] = p.alpha;
  j["L"] = p.L;
  j["q"] = p.q;
  j["d"] = p.d;
  j["D"] = p.D;
  j["volume"] = p.volume;
  j["delta"] = p.delta;
  j["eps_div"] = p.eps_div;
  j["series"] = {{"c1", p.c1}, {"c2", p.c2}, {"q0", p.q0}, {"c", p.c}, {"r", p.r}, {"s", p.s}};
  j["budgets"] = {{"K", p.K},
                  {"ell", p.ell},
                  {"blocks", p.blocks},
                  {"heads", p.heads},
                  {"kappa", p.kappa}};
  j["ambient_extra_cols"] = p.ambient_extra_cols;
  j["series_dominates"] = p.series_dominates;
  j["warning"] = p.warning;
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& [name, count] : p.stage_slots) slots.push_back({{"stage", name}, {"columns", count}});
  j["stage_slots"] = slots;
  return j;
}

inline SynthesisPlan plan_from_json(const nlohmann::json& j) {
  SynthesisPlan p;
  p.eps = j.at("eps").get<double>();
  p.alpha = j.at("alpha").get<double>();
  p.L = j.at("L").get<double>();
  p.q = j.at("q").get<double>();
  p.d = j.at("d").get<int>();
  p.D = j.at("D").get<int>();
  p.volume = j.at("volume").get<double>();
  p.delta = j.at("delta").get<double>();
  p.eps_div = j.at("eps_div").get<double>();
  const nlohmann::json& s = j.at("series");
  p.c1 = s.at("c1").get<double>();
  p.c2 = s.at("c2").get<double>();
  p.q0 = s.at("q0").get<double>();
  p.c = s.at("c").get<double>();
  p.r = s.at("r").get<int>();
  p.s = s.at("s").get<int>();
  const nlohmann::json& b = j.at("budgets");
  p.K = b.at("K").get<int>();
  p.ell = b.at("ell").get<int>();
  p.blocks = b.at("blocks").get<int>();
  p.heads = b.at("heads").get<int>();
  p.kappa = b.at("kappa").get<double>();
  p.ambient_extra_cols = j.at("ambient_extra_cols").get<int>();
  p.series_dominates = j.at("series_dominates").get<bool>();
  p.warning = j.at("warning").get<std::string>();
  for (const auto& e : j.at("stage_slots"))
    p.stage_slots.emplace_back(e.at("stage").get<std::string>(), e.at("columns").get<int>());
  return p;
}

inline nlohmann::json audit_to_json(const AuditReport& a) {
  nlohmann::json j;
  j["blocks"] = a.blocks;
  j["max_heads"] = a.max_heads;
  j["total_heads"] = a.total_heads;
  j["ell"] = a.ell;
  j["ffn"] = {{"depth", a.ffn_depth}, {"width", a.ffn_width}};
  j["kappa"] = a.kappa;
  nlohmann::json st = nlohmann::json::array();
  for (const StageCount& sc : a.stages)
    st.push_back({{"stage", sc.stage}, {"blocks", sc.blocks}, {"heads", sc.heads}});
  j["stages"] = st;
  return j;
}

}  // namespace relic::synth
