#pragma once

// Weight compiler: turns arithmetic programs into explicit transformer
// weights for the runtime in net.hpp.
//
// Every operation is assembled from three primitives:
//   * interaction heads — one attention head that moves sigma(<Qd h_t1, Kd h_t2>)
//     into a chosen row of a chosen target token and provably touches nothing
//     else.  The positional part of the score is cancelled at the aligned
//     pair by probing the runtime's own score function, so the surviving
//     score is bit-identical to the data part alone.
//   * decrement networks — six-layer MLPs whose token gates saturate to exact
//     {0,1}, subtracting a constant from data rows strictly inside a token
//     window (at most two windows per block).
//   * gating networks — four-layer MLPs that zero data rows outside a kept
//     prefix/suffix of tokens, exactly.
//
// Programs carry their block-level layout next to the materialized network;
// forward() evaluates that layout directly (one score per head instead of an
// ell-squared scan) and reproduces the dense runtime bit for bit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "relic/errors.hpp"
#include "relic/matrix.hpp"
#include "relic/net.hpp"

namespace relic::compile {

using net::kEmbedDim;

// ------------------------------------------------------------------ pieces

// Smallest s with 2^s >= r.
inline int ceil_log2(int r) {
  int s = 0;
  while ((1 << s) < r) ++s;
  return s;
}

// One attention head delivering sigma(<Qd h_t1, Kd h_t2>) to row `out_row`
// of token t1.  `value_bound` bounds the data-row magnitudes the head may
// read; the positional weight lambda is sized from it so that the positional
// deficit dominates any admissible data score at every misaligned pair.
inline net::AttentionHead build_interaction_head(int t1, int t2, int out_row, const Matrix& Qd,
                                                 const Matrix& Kd, int ell, double value_bound) {
  require(ell >= 1, errc::infeasible, "interaction head needs a positive token budget");
  require(t1 >= 1 && t1 <= ell && t2 >= 1 && t2 <= ell, errc::usage,
          "interaction head token index out of range");
  require(out_row == 1 || out_row == 2, errc::usage, "interaction head output row must be 1 or 2");
  require(Qd.rows == 2 && Qd.cols == kEmbedDim && Kd.rows == 2 && Kd.cols == kEmbedDim,
          errc::usage, "data kernels must be 2 x 5");
  require(std::isfinite(value_bound) && value_bound >= 0.0, errc::usage,
          "value bound must be finite and non-negative");

  double mu = 1.0;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < kEmbedDim; ++c)
      mu = std::max({mu, std::fabs(Qd(r, c)), std::fabs(Kd(r, c))});
  const double mbar = std::max(value_bound, 1.0);
  const double gap = 1.0 - net::token_cos(1, ell);
  // One positional step costs lambda*gap; the inflation term keeps the
  // deficit above the data score even after ~1e-16 relative noise in the
  // huge positional products.
  const double lambda =
      (2.0 * (25.0 * mu * mu * mbar * mbar + 1.0) / gap) * (1.0 + 2e-13 / gap);

  net::AttentionHead head;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < kEmbedDim; ++c) {
      head.Q(r, c) = Qd(r, c);
      head.K(r, c) = Kd(r, c);
    }
  // Query side: row 3 matches the target's angle, rows 4-5 read the constant.
  head.Q(2, 2) = lambda * net::token_cos(t1, ell);
  head.Q(2, 3) = lambda * net::token_sin(t1, ell);
  head.Q(3, 4) = 1.0;
  head.Q(4, 4) = 1.0;
  // Key side: row 3 reads the constant, row 4 matches the source's angle.
  head.K(2, 4) = 1.0;
  head.K(3, 2) = lambda * net::token_cos(t2, ell);
  head.K(3, 3) = lambda * net::token_sin(t2, ell);

  // Bake the cancellation constant by probing the runtime itself: evaluate
  // the positional part at the aligned pair and negate it, so the aligned
  // score collapses to exactly +0 plus the data part.  The probe only reads
  // the two aligned columns, so a two-column embedding reproduces the full
  // pass bit for bit without an O(ell) template.
  net::AttentionHead probe = head;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < kEmbedDim; ++c) {
      probe.Q(r, c) = 0.0;
      probe.K(r, c) = 0.0;
    }
  Matrix ph(kEmbedDim, 2);
  ph(2, 0) = net::token_cos(t1, ell);
  ph(3, 0) = net::token_sin(t1, ell);
  ph(4, 0) = 1.0;
  ph(2, 1) = net::token_cos(t2, ell);
  ph(3, 1) = net::token_sin(t2, ell);
  ph(4, 1) = 1.0;
  head.K(4, 4) = -net::attention_score(probe, ph, 0, 1);

  head.V(out_row - 1, 4) = 1.0;
  return head;
}

// Token window decremented by `amount` on rows [row_lo, row_hi], strictly
// between col_lo and col_hi (1-based; col_lo = 0 and col_hi = ell + 1 leave
// that side unbounded).
struct DecWindow {
  int row_lo = 1;
  int row_hi = 1;
  int col_lo = 0;
  int col_hi = 0;
  double amount = 0.0;
};

inline bool window_contains(const DecWindow& w, int col) {
  return col > w.col_lo && col < w.col_hi;
}

// Six-layer decrement network.  Layer 1 ramps off the interaction cosine at
// window edges, layer 2 saturates the ramps to exact {0,1}, layer 3 takes
// the window indicator, layers 4-5 carry it (ReLU is exact on {0,1}), and
// the final linear layer subtracts amount * indicator from the gated rows.
inline net::FeedForward build_decrement_ffn_multi(const std::vector<DecWindow>& windows,
                                                  int ell) {
  std::vector<DecWindow> live;
  for (const DecWindow& w : windows) {
    require(w.row_lo >= 1 && w.row_lo <= w.row_hi && w.row_hi <= 2, errc::usage,
            "decrement rows must lie in the data rows 1..2");
    require(std::isfinite(w.amount), errc::usage, "decrement amount must be finite");
    const int lo = std::max(w.col_lo + 1, 1), hi = std::min(w.col_hi - 1, ell);
    if (w.amount == 0.0 || lo > hi) continue;  // nothing to subtract
    live.push_back(w);
  }
  require(live.size() <= 2, errc::infeasible, "at most two decrement windows per block");

  net::FeedForward ffn;
  // layer 1: edge ramps m = sigma(+-(cos - threshold)); thresholds midway
  // between consecutive token cosines so gates have room on both sides.
  struct Ramp {
    double sign, theta, sharp;  // m = sigma(sign * cos + theta), gate slope
  };
  std::vector<std::vector<int>> ramp_of(live.size());
  std::vector<Ramp> ramps;
  for (std::size_t wi = 0; wi < live.size(); ++wi) {
    const DecWindow& w = live[wi];
    if (w.col_lo >= 1) {
      const double a = net::token_cos(w.col_lo, ell), b = net::token_cos(w.col_lo + 1, ell);
      const double theta = (a + b) / 2.0;
      const double g = theta - b;  // half the local cosine gap, always > 0
      ramp_of[wi].push_back(static_cast<int>(ramps.size()));
      ramps.push_back({-1.0, theta, 2.0 / g});
    }
    if (w.col_hi <= ell) {
      const double a = net::token_cos(w.col_hi - 1, ell), b = net::token_cos(w.col_hi, ell);
      const double theta = (a + b) / 2.0;
      const double g = a - theta;
      ramp_of[wi].push_back(static_cast<int>(ramps.size()));
      ramps.push_back({1.0, -theta, 2.0 / g});
    }
  }

  const int nr = std::max<int>(static_cast<int>(ramps.size()), 1);
  net::FfnLayer l1{Matrix(nr, kEmbedDim), std::vector<double>(static_cast<std::size_t>(nr), 0.0)};
  for (std::size_t i = 0; i < ramps.size(); ++i) {
    l1.W(static_cast<int>(i), 2) = ramps[i].sign;
    l1.b[i] = ramps[i].theta;
  }
  // layer 2: n = sigma(1 - sharp * m) saturates to 1 outside, 0 inside.
  net::FfnLayer l2{Matrix(nr, nr), std::vector<double>(static_cast<std::size_t>(nr), 0.0)};
  for (std::size_t i = 0; i < ramps.size(); ++i) {
    l2.W(static_cast<int>(i), static_cast<int>(i)) = -ramps[i].sharp;
    l2.b[i] = 1.0;
  }
  if (ramps.empty()) l2.b[0] = 0.0;
  // layer 3: one indicator per window, w = sigma(1 - sum of its edge n's).
  const int nw = std::max<int>(static_cast<int>(live.size()), 1);
  net::FfnLayer l3{Matrix(nw, nr), std::vector<double>(static_cast<std::size_t>(nw), 0.0)};
  for (std::size_t wi = 0; wi < live.size(); ++wi) {
    l3.b[wi] = 1.0;
    for (int ri : ramp_of[wi]) l3.W(static_cast<int>(wi), ri) = -1.0;
  }
  // layers 4-5: identity on the exact {0,1} indicators.
  net::FfnLayer l4{Matrix(nw, nw), std::vector<double>(static_cast<std::size_t>(nw), 0.0)};
  for (int i = 0; i < nw; ++i) l4.W(i, i) = 1.0;
  net::FfnLayer l5 = l4;
  // layer 6: subtract amounts on the gated rows.
  net::FfnLayer l6{Matrix(kEmbedDim, nw), std::vector<double>(kEmbedDim, 0.0)};
  for (std::size_t wi = 0; wi < live.size(); ++wi)
    for (int r = live[wi].row_lo; r <= live[wi].row_hi; ++r)
      l6.W(r - 1, static_cast<int>(wi)) = -live[wi].amount;

  ffn.layers = {l1, l2, l3, l4, l5, l6};
  return ffn;
}

inline net::FeedForward build_decrement_ffn(int row_lo, int row_hi, int col_lo, int col_hi,
                                            double amount, int ell) {
  return build_decrement_ffn_multi({DecWindow{row_lo, row_hi, col_lo, col_hi, amount}}, ell);
}

// Six layers of zeros: keeps the block-FFN depth uniform without touching
// the residual stream.
inline net::FeedForward zero_ffn() {
  net::FeedForward ffn;
  ffn.layers.push_back({Matrix(1, kEmbedDim), {0.0}});
  for (int i = 0; i < 4; ++i) ffn.layers.push_back({Matrix(1, 1), {0.0}});
  ffn.layers.push_back({Matrix(kEmbedDim, 1), std::vector<double>(kEmbedDim, 0.0)});
  return ffn;
}

enum class GateSide { keep_prefix, keep_suffix };

// Four-layer gate: zeroes rows [row_lo, row_hi] on every token outside the
// kept prefix (tokens <= k) or suffix (tokens >= k).  `value_bound` must
// exceed any magnitude the gated rows can hold.
inline net::FeedForward build_gating_ffn(int row_lo, int row_hi, int k, GateSide side, int ell,
                                         double value_bound = 1e6) {
  require(row_lo >= 1 && row_lo <= row_hi && row_hi <= 2, errc::usage,
          "gating rows must lie in the data rows 1..2");
  require(k >= 1 && k <= ell, errc::usage, "gating threshold out of range");
  const int g = row_hi - row_lo + 1;

  // m ramps up on the zeroed side of the threshold.
  double theta, gaphalf, sign;
  if (side == GateSide::keep_prefix) {
    const double a = net::token_cos(k, ell), b = net::token_cos(k + 1, ell);
    theta = (a + b) / 2.0;
    gaphalf = theta - b;
    sign = -1.0;  // m = sigma(theta - cos)
  } else {
    const double a = net::token_cos(k - 1, ell), b = net::token_cos(k, ell);
    theta = (a + b) / 2.0;
    gaphalf = a - theta;
    sign = 1.0;  // m = sigma(cos - theta)
  }
  const double sharp = 2.0 / gaphalf;

  const int n1 = 1 + 2 * g;
  net::FfnLayer l1{Matrix(n1, kEmbedDim), std::vector<double>(static_cast<std::size_t>(n1), 0.0)};
  l1.W(0, 2) = sign;
  l1.b[0] = sign * -theta;
  for (int i = 0; i < g; ++i) {
    l1.W(1 + 2 * i, row_lo - 1 + i) = 1.0;   // z+ = sigma(h)
    l1.W(2 + 2 * i, row_lo - 1 + i) = -1.0;  // z- = sigma(-h)
  }
  // mm = sigma(1 - sharp * m): exact 1 on the kept side, exact 0 elsewhere.
  net::FfnLayer l2{Matrix(n1, n1), std::vector<double>(static_cast<std::size_t>(n1), 0.0)};
  l2.W(0, 0) = -sharp;
  l2.b[0] = 1.0;
  for (int i = 1; i < n1; ++i) l2.W(i, i) = 1.0;
  // w+- = sigma(z+- - bound * mm): the kept side suppresses both halves.
  net::FfnLayer l3{Matrix(2 * g, n1), std::vector<double>(static_cast<std::size_t>(2 * g), 0.0)};
  for (int i = 0; i < 2 * g; ++i) {
    l3.W(i, 0) = -value_bound;
    l3.W(i, i + 1) = 1.0;
  }
  // residual -w+ + w- equals -h exactly where zeroed, 0 where kept.
  net::FfnLayer l4{Matrix(kEmbedDim, 2 * g), std::vector<double>(kEmbedDim, 0.0)};
  for (int i = 0; i < g; ++i) {
    l4.W(row_lo - 1 + i, 2 * i) = -1.0;
    l4.W(row_lo - 1 + i, 2 * i + 1) = 1.0;
  }
  net::FeedForward ffn;
  ffn.layers = {l1, l2, l3, l4};
  return ffn;
}

// --------------------------------------------------------------- programs

// Head recipe in program coordinates: deliver sigma(data score) to row
// `out_row` of token `target`, reading token `source`.
struct HeadSpec {
  int target = 0;
  int source = 0;
  int out_row = 1;
  Matrix Qd{2, kEmbedDim};
  Matrix Kd{2, kEmbedDim};
  double value_bound = 1.0;
};

struct BlockSpec {
  std::vector<HeadSpec> heads;
  std::vector<DecWindow> decs;
};

struct ProgramContract {
  std::string op;
  std::vector<int> input_slots;   // 1-based token columns, values in row 1
  std::vector<int> output_slots;
  double bound_M = 1.0;           // operand magnitude bound the caller promised
  double claimed_tolerance = 0.0; // worst-case |output - exact| in exact arithmetic
};

struct CompiledProgram {
  std::vector<BlockSpec> blocks;
  ProgramContract contract;
  std::vector<ProgramContract> sub_contracts;  // per chunk, for compositions
  int min_ell = 0;
  double data_bound = 1.0;    // largest data-row magnitude any head reads
  double kernel_bound = 1.0;  // largest data-kernel entry
  net::TransformerNetwork network;

  // Layout-directed evaluation: one score per head, windowed decrements.
  // Bit-identical to net::forward_embedding on the materialized network.
  Matrix forward(const std::vector<double>& x) const {
    return forward_embedded(net::embed_input(x, network.ell));
  }

  // Same evaluation on a caller-prepared embedding (e.g. a reused positional
  // template with fresh data rows); H must match the materialized shape.
  Matrix forward_embedded(Matrix H) const {
    const int ell = network.ell;
    require(H.rows == kEmbedDim && H.cols == ell, errc::usage,
            "embedding shape does not match the materialized network");
    std::vector<std::array<long double, kEmbedDim>> acc(static_cast<std::size_t>(ell));
    std::vector<char> hit(static_cast<std::size_t>(ell), 0);
    std::vector<int> touched;
    for (const BlockSpec& bs : blocks) {
      touched.clear();
      auto touch = [&](int col) {
        if (!hit[static_cast<std::size_t>(col)]) {
          hit[static_cast<std::size_t>(col)] = 1;
          acc[static_cast<std::size_t>(col)] = {};
          touched.push_back(col);
        }
      };
      for (const HeadSpec& h : bs.heads) {
        const int t = h.target - 1, s = h.source - 1;
        double q0 = 0.0, q1 = 0.0, k0 = 0.0, k1 = 0.0;
        for (int c = 0; c < kEmbedDim; ++c) {
          q0 += h.Qd(0, c) * H(c, t);
          q1 += h.Qd(1, c) * H(c, t);
          k0 += h.Kd(0, c) * H(c, s);
          k1 += h.Kd(1, c) * H(c, s);
        }
        double score = q0 * k0;
        score += q1 * k1;
        if (score > 0.0) {
          touch(t);
          acc[static_cast<std::size_t>(t)][static_cast<std::size_t>(h.out_row - 1)] +=
              static_cast<long double>(score) * 1.0;
        }
      }
      for (const DecWindow& w : bs.decs) {
        if (w.amount == 0.0) continue;
        const int lo = std::max(w.col_lo + 1, 1), hi = std::min(w.col_hi - 1, ell);
        for (int col = lo; col <= hi; ++col) touch(col - 1);
      }
      for (int col : touched) {
        std::array<long double, kEmbedDim> z;
        for (int r = 0; r < kEmbedDim; ++r)
          z[static_cast<std::size_t>(r)] = acc[static_cast<std::size_t>(col)][static_cast<std::size_t>(r)] + H(r, col);
        std::array<long double, kEmbedDim> f{};
        for (const DecWindow& w : bs.decs) {
          if (w.amount == 0.0 || !window_contains(w, col + 1)) continue;
          for (int r = w.row_lo; r <= w.row_hi; ++r)
            f[static_cast<std::size_t>(r - 1)] += static_cast<long double>(-w.amount) * 1.0L;
        }
        for (int r = 0; r < kEmbedDim; ++r)
          H(r, col) = static_cast<double>(z[static_cast<std::size_t>(r)] + f[static_cast<std::size_t>(r)]);
        hit[static_cast<std::size_t>(col)] = 0;
      }
    }
    return H;
  }

  // Convenience: place operand values at the contract's input slots and read
  // the output slots (row 1) back.
  std::vector<double> outputs(const std::vector<double>& values) const {
    require(values.size() == contract.input_slots.size(), errc::usage,
            "operand count does not match the program's input slots");
    std::vector<double> x(static_cast<std::size_t>(network.ell), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i)
      x[static_cast<std::size_t>(contract.input_slots[i] - 1)] = values[i];
    const Matrix H = forward(x);
    std::vector<double> out;
    out.reserve(contract.output_slots.size());
    for (int slot : contract.output_slots) out.push_back(H(0, slot - 1));
    return out;
  }
};

// ----------------------------------------------------------- materialization

namespace detail {

inline void materialize(CompiledProgram& prog, int ell, double output_bound) {
  require(ell >= prog.min_ell, errc::infeasible,
          "token budget too small: program needs " + std::to_string(prog.min_ell) +
              " columns, got " + std::to_string(ell));
  prog.network.ell = ell;
  prog.network.output_bound = output_bound;
  prog.network.blocks.clear();
  for (const BlockSpec& bs : prog.blocks) {
    net::TransformerBlock blk;
    for (const HeadSpec& h : bs.heads)
      blk.heads.push_back(
          build_interaction_head(h.target, h.source, h.out_row, h.Qd, h.Kd, ell, h.value_bound));
    blk.ffn = bs.decs.empty() ? zero_ffn() : build_decrement_ffn_multi(bs.decs, ell);
    prog.network.blocks.push_back(std::move(blk));
  }
}

inline void note_head(CompiledProgram& prog, const HeadSpec& h) {
  prog.data_bound = std::max(prog.data_bound, h.value_bound);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < kEmbedDim; ++c)
      prog.kernel_bound =
          std::max({prog.kernel_bound, std::fabs(h.Qd(r, c)), std::fabs(h.Kd(r, c))});
}

// Kernel factories.  Scores, in the runtime's evaluation order:
//   sum:   x_source + offset
//   cadd:  x_source + (c + offset)
//   cmul:  c * x_source + offset
//   mult:  x_target * x_source + offset
//   square:x_target^2 (source = target, no offset needed: squares are >= 0)
inline HeadSpec sum_head(int target, int source, double offset, double vb) {
  HeadSpec h;
  h.target = target;
  h.source = source;
  h.Qd(0, 4) = 1.0;
  h.Kd(0, 0) = 1.0;
  h.Qd(1, 4) = 1.0;
  h.Kd(1, 4) = offset;
  h.value_bound = vb;
  return h;
}

inline HeadSpec cadd_head(int target, int source, double c, double offset, double vb) {
  HeadSpec h;
  h.target = target;
  h.source = source;
  h.Qd(1, 4) = 1.0;
  h.Kd(1, 0) = 1.0;
  h.Kd(1, 4) = c + offset;
  h.value_bound = vb;
  return h;
}

inline HeadSpec cmul_head(int target, int source, double c, double offset, double vb) {
  HeadSpec h;
  h.target = target;
  h.source = source;
  h.Qd(0, 4) = c;
  h.Kd(0, 0) = 1.0;
  h.Qd(1, 4) = 1.0;
  h.Kd(1, 4) = offset;
  h.value_bound = vb;
  return h;
}

inline HeadSpec mult_head(int target, int source, double offset, double vb) {
  HeadSpec h;
  h.target = target;
  h.source = source;
  h.Qd(0, 0) = 1.0;
  h.Kd(0, 0) = 1.0;
  h.Qd(1, 4) = 1.0;
  h.Kd(1, 4) = offset;
  h.value_bound = vb;
  return h;
}

inline HeadSpec square_head(int target, double vb) {
  HeadSpec h;
  h.target = target;
  h.source = target;
  h.Qd(0, 0) = 1.0;
  h.Kd(0, 0) = 1.0;
  h.value_bound = vb;
  return h;
}

inline void add_block(CompiledProgram& prog, std::vector<HeadSpec> heads,
                      std::vector<DecWindow> decs) {
  for (const HeadSpec& h : heads) note_head(prog, h);
  prog.blocks.push_back(BlockSpec{std::move(heads), std::move(decs)});
}

inline void check_bound(double M) {
  require(std::isfinite(M) && M > 0.0, errc::usage, "magnitude bound must be positive and finite");
}

}  // namespace detail

// ----------------------------------------------------------------- operations

// Sum of D operands into column D+1.
inline CompiledProgram compile_sum_tokens(int D, int ell, double M) {
  require(D >= 1, errc::usage, "need at least one operand");
  detail::check_bound(M);
  CompiledProgram prog;
  prog.contract.op = "sum_tokens";
  prog.contract.bound_M = M;
  prog.min_ell = D + 1;
  std::vector<HeadSpec> heads;
  for (int i = 1; i <= D; ++i) {
    heads.push_back(detail::sum_head(D + 1, i, M, M));
    prog.contract.input_slots.push_back(i);
  }
  prog.contract.output_slots = {D + 1};
  detail::add_block(prog, std::move(heads), {DecWindow{1, 1, D, D + 2, D * M}});
  detail::materialize(prog, ell, D * M + 1.0);
  return prog;
}

// Componentwise x + c into columns D+1..2D.
inline CompiledProgram compile_const_add(const std::vector<double>& c, int D, int ell, double M) {
  require(static_cast<int>(c.size()) == D && D >= 1, errc::usage,
          "constant vector must have one entry per operand");
  detail::check_bound(M);
  double cmax = 0.0;
  for (double v : c) {
    require(std::isfinite(v), errc::usage, "constants must be finite");
    cmax = std::max(cmax, std::fabs(v));
  }
  CompiledProgram prog;
  prog.contract.op = "const_add";
  prog.contract.bound_M = M;
  prog.min_ell = 2 * D;
  std::vector<HeadSpec> heads;
  for (int i = 1; i <= D; ++i) {
    heads.push_back(detail::cadd_head(D + i, i, c[static_cast<std::size_t>(i - 1)], M, M));
    prog.contract.input_slots.push_back(i);
    prog.contract.output_slots.push_back(D + i);
  }
  detail::add_block(prog, std::move(heads), {DecWindow{1, 1, D, 2 * D + 1, M}});
  detail::materialize(prog, ell, M + cmax + 1.0);
  return prog;
}

// Componentwise c * x into columns D+1..2D.
inline CompiledProgram compile_const_mul(const std::vector<double>& c, int D, int ell, double M) {
  require(static_cast<int>(c.size()) == D && D >= 1, errc::usage,
          "constant vector must have one entry per operand");
  detail::check_bound(M);
  double cmax = 0.0;
  for (double v : c) {
    require(std::isfinite(v), errc::usage, "constants must be finite");
    cmax = std::max(cmax, std::fabs(v));
  }
  CompiledProgram prog;
  prog.contract.op = "const_mul";
  prog.contract.bound_M = M;
  prog.min_ell = 2 * D;
  std::vector<HeadSpec> heads;
  for (int i = 1; i <= D; ++i) {
    heads.push_back(detail::cmul_head(D + i, i, c[static_cast<std::size_t>(i - 1)], M, M));
    prog.contract.input_slots.push_back(i);
    prog.contract.output_slots.push_back(D + i);
  }
  detail::add_block(prog, std::move(heads), {DecWindow{1, 1, D, 2 * D + 1, M}});
  detail::materialize(prog, ell, std::max(cmax, 1.0) * M + 1.0);
  return prog;
}

// Componentwise x^2 into columns D+1..2D: copy, square in place, remove the
// copied linear term.
inline CompiledProgram compile_square(int D, int ell, double M) {
  require(D >= 1, errc::usage, "need at least one operand");
  detail::check_bound(M);
  CompiledProgram prog;
  prog.contract.op = "square";
  prog.contract.bound_M = M;
  prog.min_ell = 2 * D;
  std::vector<HeadSpec> copy, sq, fix;
  for (int i = 1; i <= D; ++i) {
    copy.push_back(detail::cmul_head(D + i, i, 1.0, M, M));
    sq.push_back(detail::square_head(D + i, M));
    fix.push_back(detail::cmul_head(D + i, i, -1.0, M, M));
    prog.contract.input_slots.push_back(i);
    prog.contract.output_slots.push_back(D + i);
  }
  const DecWindow w{1, 1, D, 2 * D + 1, M};
  detail::add_block(prog, std::move(copy), {w});
  detail::add_block(prog, std::move(sq), {});
  detail::add_block(prog, std::move(fix), {w});
  detail::materialize(prog, ell, M * M + 1.0);
  return prog;
}

// Componentwise x * y into columns 2D+1..3D (x at 1..D, y at D+1..2D).
inline CompiledProgram compile_product(int D, int ell, double M) {
  require(D >= 1, errc::usage, "need at least one operand");
  detail::check_bound(M);
  CompiledProgram prog;
  prog.contract.op = "product";
  prog.contract.bound_M = M;
  prog.min_ell = 3 * D;
  std::vector<HeadSpec> copy, mul, fix;
  for (int i = 1; i <= D; ++i) {
    copy.push_back(detail::cmul_head(2 * D + i, i, 1.0, M, M));
    mul.push_back(detail::mult_head(2 * D + i, D + i, M, M));
    fix.push_back(detail::cmul_head(2 * D + i, i, -1.0, M, M));
    prog.contract.output_slots.push_back(2 * D + i);
  }
  for (int i = 1; i <= 2 * D; ++i) prog.contract.input_slots.push_back(i);
  const DecWindow w{1, 1, 2 * D, 3 * D + 1, M};
  detail::add_block(prog, std::move(copy), {w});
  detail::add_block(prog, std::move(mul), {w});
  detail::add_block(prog, std::move(fix), {w});
  detail::materialize(prog, ell, M * M + 1.0);
  return prog;
}

namespace detail {

// Repeated-squaring power table over a column range: after stage k, column
// base + m holds v^m for m = 1..2^k (v = value at column base + 1).  Each
// stage is copy / multiply-by-v^(2^(k-1)) / remove-copy, with one decrement
// window over the fresh columns.  `vmax` bounds |v| (>= its true bound).
inline void add_power_stages(CompiledProgram& prog, int base, int stages, double vmax) {
  const double vb = std::max(vmax, 1.0);
  for (int k = 1; k <= stages; ++k) {
    const int half = 1 << (k - 1);
    const double P = std::pow(vb, half), P2 = P * P;
    std::vector<HeadSpec> copy, mul, fix;
    for (int m = 1; m <= half; ++m) {
      const int src = base + m, dst = base + half + m;
      copy.push_back(cmul_head(dst, src, 1.0, P, P));
      mul.push_back(mult_head(dst, base + half, P2, P));
      fix.push_back(cmul_head(dst, src, -1.0, P, P));
    }
    const int lo = base + half, hi = base + 2 * half + 1;
    add_block(prog, std::move(copy), {DecWindow{1, 1, lo, hi, P}});
    add_block(prog, std::move(mul), {DecWindow{1, 1, lo, hi, P2}});
    add_block(prog, std::move(fix), {DecWindow{1, 1, lo, hi, P}});
  }
}

}  // namespace detail

// Componentwise x^r into columns (r-1)D+1..rD via repeated squaring; column
// (m-1)D+i holds x_i^m throughout.
inline CompiledProgram compile_rth_power(int r, int D, int ell, double M) {
  require(r >= 2, errc::usage, "power exponent must be at least 2");
  require(D >= 1, errc::usage, "need at least one operand");
  detail::check_bound(M);
  const int s = ceil_log2(r);
  CompiledProgram prog;
  prog.contract.op = "rth_power";
  prog.contract.bound_M = M;
  prog.min_ell = (1 << s) * D;
  const double vb = std::max(M, 1.0);
  for (int k = 1; k <= s; ++k) {
    const int half = 1 << (k - 1);
    const double P = std::pow(vb, half), P2 = P * P;
    std::vector<HeadSpec> copy, mul, fix;
    for (int m = 1; m <= half; ++m)
      for (int i = 1; i <= D; ++i) {
        const int src = (m - 1) * D + i, dst = (half + m - 1) * D + i;
        copy.push_back(detail::cmul_head(dst, src, 1.0, P, P));
        mul.push_back(detail::mult_head(dst, (half - 1) * D + i, P2, P));
        fix.push_back(detail::cmul_head(dst, src, -1.0, P, P));
      }
    const int lo = half * D, hi = 2 * half * D + 1;
    detail::add_block(prog, std::move(copy), {DecWindow{1, 1, lo, hi, P}});
    detail::add_block(prog, std::move(mul), {DecWindow{1, 1, lo, hi, P2}});
    detail::add_block(prog, std::move(fix), {DecWindow{1, 1, lo, hi, P}});
  }
  for (int i = 1; i <= D; ++i) {
    prog.contract.input_slots.push_back(i);
    prog.contract.output_slots.push_back((r - 1) * D + i);
  }
  detail::materialize(prog, ell, std::pow(vb, r) + 1.0);
  return prog;
}

// Scalar partial sum x + x^2 + ... + x^r, folded back into column 1.
inline CompiledProgram compile_power_series(int r, int ell, double M) {
  require(r >= 1, errc::usage, "series order must be at least 1");
  detail::check_bound(M);
  const int s = ceil_log2(r);
  CompiledProgram prog;
  prog.contract.op = "power_series";
  prog.contract.bound_M = M;
  prog.min_ell = 1 << s;
  prog.contract.input_slots = {1};
  prog.contract.output_slots = {1};
  detail::add_power_stages(prog, 0, s, M);
  const double vb = std::max(M, 1.0);
  const double A = std::pow(vb, r);
  std::vector<HeadSpec> sums;
  for (int j = 2; j <= r; ++j) sums.push_back(detail::sum_head(1, j, A, A));
  detail::add_block(prog, std::move(sums),
                    r >= 2 ? std::vector<DecWindow>{DecWindow{1, 1, 0, 2, (r - 1) * A}}
                           : std::vector<DecWindow>{});
  detail::materialize(prog, ell, r * A + 1.0);
  return prog;
}

// Truncated reciprocal c * sum_{i=0..r} (1 - c x)^i of the value at column 1,
// valid on x in [x_lo, x_hi] where |1 - c x| must stay below 1.  The result
// lands at column 4 + 2^ceil(log2 r).
inline CompiledProgram compile_division(double c, int r, int ell, double x_lo, double x_hi) {
  require(r >= 1, errc::usage, "truncation order must be at least 1");
  require(std::isfinite(c) && c != 0.0, errc::usage, "series constant must be finite and nonzero");
  require(x_lo > 0.0 && x_lo <= x_hi && std::isfinite(x_hi), errc::infeasible,
          "reciprocal range must be positive");
  const double qhat = std::max(std::fabs(1.0 - c * x_lo), std::fabs(1.0 - c * x_hi));
  require(qhat < 1.0, errc::infeasible, "series does not contract on the given range");

  const int s = ceil_log2(r);
  CompiledProgram prog;
  prog.contract.op = "division";
  prog.contract.bound_M = x_hi;
  prog.contract.claimed_tolerance = std::pow(qhat, r + 1) / x_lo;
  prog.min_ell = (1 << s) + 4;
  prog.contract.input_slots = {1};
  prog.contract.output_slots = {4 + (1 << s)};

  const double cx = std::fabs(c) * x_hi;
  const double A1 = cx + 1.0, A2 = cx + 2.0;
  detail::add_block(prog, {detail::cmul_head(2, 1, -c, A1, x_hi)}, {DecWindow{1, 1, 1, 3, A1}});
  detail::add_block(prog, {detail::cadd_head(3, 2, 1.0, A2, cx)}, {DecWindow{1, 1, 2, 4, A2}});
  detail::add_power_stages(prog, 2, s, 1.0);
  std::vector<HeadSpec> sums;
  for (int j = 2; j <= r; ++j) sums.push_back(detail::sum_head(3, 2 + j, 1.0, 1.0));
  detail::add_block(prog, std::move(sums),
                    r >= 2 ? std::vector<DecWindow>{DecWindow{1, 1, 2, 4, static_cast<double>(r - 1)}}
                           : std::vector<DecWindow>{});
  const double A3 = r + 2.0, A4 = std::fabs(c) * (r + 1.0) + 1.0;
  const int top = 1 << s;
  detail::add_block(prog, {detail::cadd_head(3 + top, 3, 1.0, A3, static_cast<double>(r))},
                    {DecWindow{1, 1, 2 + top, 4 + top, A3}});
  detail::add_block(prog, {detail::cmul_head(4 + top, 3 + top, c, A4, r + 1.0)},
                    {DecWindow{1, 1, 3 + top, 5 + top, A4}});
  detail::materialize(prog, ell, std::fabs(c) * (r + 1.0) + 1.0);
  return prog;
}

// --------------------------------------------------------------- composition

namespace detail {

// Rebuild the merged program under a per-program column relabeling.  Fails
// (infeasible) if some decrement window lands on non-contiguous columns or a
// block ends up with more than two distinct windows.
inline CompiledProgram compose_with_map(const std::vector<CompiledProgram>& progs,
                                        const std::vector<std::map<int, int>>& cmap) {
  CompiledProgram out;
  out.contract.op = "parallel";
  std::size_t max_blocks = 0;
  for (const auto& p : progs) max_blocks = std::max(max_blocks, p.blocks.size());

  for (std::size_t b = 0; b < max_blocks; ++b) {
    BlockSpec nb;
    std::map<std::tuple<double, int, int>, std::vector<int>> groups;
    for (std::size_t p = 0; p < progs.size(); ++p) {
      if (b >= progs[p].blocks.size()) continue;
      const BlockSpec& bs = progs[p].blocks[b];
      for (const HeadSpec& h : bs.heads) {
        HeadSpec nh = h;
        nh.target = cmap[p].at(h.target);
        nh.source = cmap[p].at(h.source);
        note_head(out, nh);
        nb.heads.push_back(std::move(nh));
      }
      for (const DecWindow& w : bs.decs) {
        if (w.amount == 0.0) continue;
        const int lo = std::max(w.col_lo + 1, 1);
        const int hi = std::min(w.col_hi - 1, progs[p].min_ell);
        auto& cols = groups[{w.amount, w.row_lo, w.row_hi}];
        for (int col = lo; col <= hi; ++col) cols.push_back(cmap[p].at(col));
      }
    }
    for (auto& [key, cols] : groups) {
      std::sort(cols.begin(), cols.end());
      for (std::size_t i = 1; i < cols.size(); ++i)
        require(cols[i] == cols[i - 1] + 1, errc::infeasible,
                "composition scatters a decrement window across non-adjacent columns");
      nb.decs.push_back(DecWindow{std::get<1>(key), std::get<2>(key), cols.front() - 1,
                                  cols.back() + 1, std::get<0>(key)});
    }
    require(nb.decs.size() <= 2, errc::infeasible,
            "composition needs more than two decrement windows in one block");
    out.blocks.push_back(std::move(nb));
  }

  int width = 0;
  double R = 1.0;
  for (std::size_t p = 0; p < progs.size(); ++p) {
    ProgramContract sc = progs[p].contract;
    for (int& slot : sc.input_slots) slot = cmap[p].at(slot);
    for (int& slot : sc.output_slots) slot = cmap[p].at(slot);
    out.contract.input_slots.insert(out.contract.input_slots.end(), sc.input_slots.begin(),
                                    sc.input_slots.end());
    out.contract.output_slots.insert(out.contract.output_slots.end(), sc.output_slots.begin(),
                                     sc.output_slots.end());
    out.contract.bound_M = std::max(out.contract.bound_M, sc.bound_M);
    out.contract.claimed_tolerance = std::max(out.contract.claimed_tolerance, sc.claimed_tolerance);
    out.sub_contracts.push_back(std::move(sc));
    out.data_bound = std::max(out.data_bound, progs[p].data_bound);
    out.kernel_bound = std::max(out.kernel_bound, progs[p].kernel_bound);
    R = std::max(R, progs[p].network.output_bound);
    for (const auto& [old_col, new_col] : cmap[p]) width = std::max(width, new_col);
  }
  out.min_ell = width;
  out.network.output_bound = R;
  return out;
}

}  // namespace detail

// Run several programs side by side in one network.  Chunks are laid out
// contiguously when their decrement windows stay whole; otherwise columns
// are regrouped stage by stage so windows with equal amounts share one span.
inline CompiledProgram parallel_compose(const std::vector<CompiledProgram>& progs, int ell) {
  require(!progs.empty(), errc::usage, "nothing to compose");
  int total = 0;
  for (const auto& p : progs) total += p.min_ell;
  require(ell >= total, errc::infeasible,
          "token budget too small for composition: need " + std::to_string(total) + ", got " +
              std::to_string(ell));

  const std::size_t P = progs.size();
  CompiledProgram out;
  bool done = false;
  {
    // contiguous chunks: program p occupies [base+1, base+min_ell]
    std::vector<std::map<int, int>> cmap(P);
    int base = 0;
    for (std::size_t p = 0; p < P; ++p) {
      for (int col = 1; col <= progs[p].min_ell; ++col) cmap[p][col] = base + col;
      base += progs[p].min_ell;
    }
    try {
      out = detail::compose_with_map(progs, cmap);
      done = true;
    } catch (const error& e) {
      if (e.kind() != errc::infeasible) throw;
    }
  }
  if (!done) {
    // stage-major: inputs first (program-major), then each block's fresh
    // targets grouped by their decrement window so equal windows fuse.
    std::vector<std::map<int, int>> cmap(P);
    int next = 1;
    for (std::size_t p = 0; p < P; ++p)
      for (int slot : progs[p].contract.input_slots) cmap[p][slot] = next++;
    std::size_t max_blocks = 0;
    for (const auto& p : progs) max_blocks = std::max(max_blocks, p.blocks.size());
    for (std::size_t b = 0; b < max_blocks; ++b) {
      std::map<std::tuple<double, int, int>, std::vector<std::pair<std::size_t, int>>> keyed;
      std::vector<std::pair<std::size_t, int>> plain;
      for (std::size_t p = 0; p < P; ++p) {
        if (b >= progs[p].blocks.size()) continue;
        const BlockSpec& bs = progs[p].blocks[b];
        std::set<int> seen;
        for (const HeadSpec& h : bs.heads) {
          if (cmap[p].count(h.target) || !seen.insert(h.target).second) continue;
          const DecWindow* home = nullptr;
          for (const DecWindow& w : bs.decs)
            if (window_contains(w, h.target)) home = &w;
          if (home)
            keyed[{home->amount, home->row_lo, home->row_hi}].push_back({p, h.target});
          else
            plain.push_back({p, h.target});
        }
      }
      for (auto& [key, cols] : keyed)
        for (auto& [p, col] : cols) cmap[p][col] = next++;
      for (auto& [p, col] : plain) cmap[p][col] = next++;
    }
    out = detail::compose_with_map(progs, cmap);
  }
  detail::materialize(out, ell, out.network.output_bound);
  return out;
}

// -------------------------------------------------------------------- json

inline nlohmann::json contract_to_json(const ProgramContract& c) {
  nlohmann::json j;
  j["op"] = c.op;
  j["slots"] = {{"inputs", c.input_slots}, {"outputs", c.output_slots}};
  j["bound_M"] = c.bound_M;
  j["claimed_tolerance"] = c.claimed_tolerance;
  return j;
}

inline ProgramContract contract_from_json(const nlohmann::json& j) {
  ProgramContract c;
  c.op = j.at("op").get<std::string>();
  c.input_slots = j.at("slots").at("inputs").get<std::vector<int>>();
  c.output_slots = j.at("slots").at("outputs").get<std::vector<int>>();
  c.bound_M = j.at("bound_M").get<double>();
  c.claimed_tolerance = j.at("claimed_tolerance").get<double>();
  return c;
}

inline nlohmann::json program_to_json(const CompiledProgram& prog) {
  nlohmann::json j;
  j["contract"] = contract_to_json(prog.contract);
  if (!prog.sub_contracts.empty()) {
    nlohmann::json subs = nlohmann::json::array();
    for (const auto& sc : prog.sub_contracts) subs.push_back(contract_to_json(sc));
    j["sub_contracts"] = subs;
  }
  nlohmann::json blocks = nlohmann::json::array();
  for (const BlockSpec& bs : prog.blocks) {
    nlohmann::json hb = nlohmann::json::array();
    for (const HeadSpec& h : bs.heads)
      hb.push_back({{"target", h.target},
                    {"source", h.source},
                    {"row", h.out_row},
                    {"Qd", net::matrix_to_json(h.Qd)},
                    {"Kd", net::matrix_to_json(h.Kd)},
                    {"value_bound", h.value_bound}});
    nlohmann::json wb = nlohmann::json::array();
    for (const DecWindow& w : bs.decs)
      wb.push_back({{"rows", {w.row_lo, w.row_hi}},
                    {"span", {w.col_lo, w.col_hi}},
                    {"amount", w.amount}});
    blocks.push_back({{"heads", hb}, {"windows", wb}});
  }
  j["layout"] = {{"blocks", blocks},
                 {"min_ell", prog.min_ell},
                 {"data_bound", prog.data_bound},
                 {"kernel_bound", prog.kernel_bound}};
  j["network"] = net::to_json(prog.network);
  return j;
}

inline CompiledProgram program_from_json(const nlohmann::json& j) {
  CompiledProgram prog;
  prog.contract = contract_from_json(j.at("contract"));
  if (j.count("sub_contracts"))
    for (const auto& sj : j.at("sub_contracts")) prog.sub_contracts.push_back(contract_from_json(sj));
  const nlohmann::json& layout = j.at("layout");
  for (const auto& bj : layout.at("blocks")) {
    BlockSpec bs;
    for (const auto& hj : bj.at("heads")) {
      HeadSpec h;
      h.target = hj.at("target").get<int>();
      h.source = hj.at("source").get<int>();
      h.out_row = hj.at("row").get<int>();
      h.Qd = net::matrix_from_json(hj.at("Qd"));
      h.Kd = net::matrix_from_json(hj.at("Kd"));
      h.value_bound = hj.at("value_bound").get<double>();
      bs.heads.push_back(std::move(h));
    }
    for (const auto& wj : bj.at("windows")) {
      DecWindow w;
      w.row_lo = wj.at("rows")[0].get<int>();
      w.row_hi = wj.at("rows")[1].get<int>();
      w.col_lo = wj.at("span")[0].get<int>();
      w.col_hi = wj.at("span")[1].get<int>();
      w.amount = wj.at("amount").get<double>();
      bs.decs.push_back(w);
    }
    prog.blocks.push_back(std::move(bs));
  }
  prog.min_ell = layout.at("min_ell").get<int>();
  prog.data_bound = layout.at("data_bound").get<double>();
  prog.kernel_bound = layout.at("kernel_bound").get<double>();
  prog.network = net::network_from_json(j.at("network"));
  return prog;
}

}  // namespace relic::compile
