#pragma once
// ReLU-attention transformer runtime.
//
// Embedding layout (rows, 1-based in comments, 0-based in code):
//   row 1-2: data rows (row 1 carries operands/results; row 2 is spare)
//   row 3-4: interaction coordinates of token t: (cos, sin)(t*pi/(2*ell))
//   row 5  : constant 1
//
// Attention is score-ReLU'd, not softmaxed: one head contributes
//   out[:,t] = sum_s sigma(<Q h_t, K h_s>) * (V h_s),
// a block is FFN(MHA(H)+H) + MHA(H) + H, and the decoder reads entry
// (row 1, column ell) clamped to [-R, R].
//
// Numeric contract (compiled constructions depend on it):
//   * scores are evaluated in plain double with a pinned summation order —
//     interaction rows (3,4,5) first, then data rows (1,2) — so that weights
//     baked from a probe evaluation cancel bit-exactly;
//   * value accumulation, the residual add and the FFN run in long double
//     with a single rounding to double per block-output entry, so columns a
//     block does not touch are reproduced bit-for-bit.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relic/errors.hpp"
#include "relic/matrix.hpp"

namespace relic::net {

inline constexpr int kEmbedDim = 5;
inline constexpr int kMaxFfnDepth = 6;
inline constexpr int kMaxFfnWidth = 5;
inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Interaction coordinates of token t (1-based) in a length-ell context.
// Single source of truth: weight construction bakes these exact doubles.
inline double token_angle(int t, int ell) {
  return kPi * 0.5 * (static_cast<double>(t) / static_cast<double>(ell));
}
inline double token_cos(int t, int ell) { return std::cos(token_angle(t, ell)); }
inline double token_sin(int t, int ell) { return std::sin(token_angle(t, ell)); }

inline Matrix embed_input(const std::vector<double>& x, int ell) {
  const int D = static_cast<int>(x.size());
  require(ell >= D, errc::infeasible,
          "token budget too small: need ell >= " + std::to_string(D) + ", got " +
              std::to_string(ell));
  for (double v : x) require(std::isfinite(v), errc::usage, "input vector must be finite");
  Matrix h(kEmbedDim, ell);
  for (int i = 0; i < D; ++i) h(0, i) = x[i];
  for (int t = 1; t <= ell; ++t) {
    h(2, t - 1) = token_cos(t, ell);
    h(3, t - 1) = token_sin(t, ell);
    h(4, t - 1) = 1.0;
  }
  return h;
}

struct AttentionHead {
  Matrix Q{kEmbedDim, kEmbedDim};
  Matrix K{kEmbedDim, kEmbedDim};
  Matrix V{kEmbedDim, kEmbedDim};
};

struct FfnLayer {
  Matrix W;
  std::vector<double> b;
};

// Tokenwise MLP; ReLU between layers, last layer linear. An empty layer list
// contributes nothing (identity residual).
struct FeedForward {
  std::vector<FfnLayer> layers;

  bool empty() const { return layers.empty(); }
  int depth() const { return static_cast<int>(layers.size()); }

  int width() const {
    int w = 0;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) w = std::max(w, layers[i].W.rows);
    return w;
  }

  // Evaluate on one token column (length kEmbedDim), in long double.
  std::array<long double, kEmbedDim> apply(const std::array<long double, kEmbedDim>& h) const {
    std::vector<long double> z(h.begin(), h.end());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const FfnLayer& layer = layers[i];
      require(layer.W.cols == static_cast<int>(z.size()), errc::usage,
              "feed-forward layer shape mismatch");
      std::vector<long double> nz(static_cast<std::size_t>(layer.W.rows));
      for (int r = 0; r < layer.W.rows; ++r) {
        long double acc = layer.b[static_cast<std::size_t>(r)];
        for (int c = 0; c < layer.W.cols; ++c) acc += static_cast<long double>(layer.W(r, c)) * z[c];
        nz[static_cast<std::size_t>(r)] = (i + 1 < layers.size() && acc < 0.0L) ? 0.0L : acc;
      }
      z.swap(nz);
    }
    std::array<long double, kEmbedDim> out{};
    if (!layers.empty()) {
      require(z.size() == kEmbedDim, errc::usage, "feed-forward must map back to embedding width");
      for (int r = 0; r < kEmbedDim; ++r) out[static_cast<std::size_t>(r)] = z[static_cast<std::size_t>(r)];
    }
    return out;
  }
};

struct TransformerBlock {
  std::vector<AttentionHead> heads;
  FeedForward ffn;
};

struct TransformerNetwork {
  int ell = 0;
  std::vector<TransformerBlock> blocks;
  double output_bound = 1.0;  // R: decoder clamp

  double kappa_obs() const {
    double k = 0.0;
    for (const auto& blk : blocks) {
      for (const auto& head : blk.heads)
        k = std::max({k, head.Q.max_abs(), head.K.max_abs(), head.V.max_abs()});
      for (const auto& layer : blk.ffn.layers) {
        k = std::max(k, layer.W.max_abs());
        for (double v : layer.b) k = std::max(k, std::fabs(v));
      }
    }
    return k;
  }
};

// Pinned-order attention score between query token t and key token s
// (0-based columns). Interaction rows first, then data rows; plain double.
inline double attention_score(const AttentionHead& head, const Matrix& H, int t, int s) {
  double qv[kEmbedDim], kv[kEmbedDim];
  for (int r = 0; r < kEmbedDim; ++r) {
    double q = 0.0, k = 0.0;
    for (int c = 0; c < kEmbedDim; ++c) {
      q += head.Q(r, c) * H(c, t);
      k += head.K(r, c) * H(c, s);
    }
    qv[r] = q;
    kv[r] = k;
  }
  double pos = qv[2] * kv[2];
  pos += qv[3] * kv[3];
  pos += qv[4] * kv[4];
  double data = qv[0] * kv[0];
  data += qv[1] * kv[1];
  return pos + data;
}

inline Matrix forward_block(const TransformerBlock& block, const Matrix& H) {
  require(H.rows == kEmbedDim, errc::usage, "embedding must have 5 rows");
  const int ell = H.cols;
  Matrix out(kEmbedDim, ell);
  std::vector<double> vh(kEmbedDim);
  for (int t = 0; t < ell; ++t) {
    std::array<long double, kEmbedDim> acc{};
    for (const auto& head : block.heads) {
      for (int s = 0; s < ell; ++s) {
        const double score = attention_score(head, H, t, s);
        if (score > 0.0) {
          for (int r = 0; r < kEmbedDim; ++r) {
            double v = 0.0;
            for (int c = 0; c < kEmbedDim; ++c) v += head.V(r, c) * H(c, s);
            vh[static_cast<std::size_t>(r)] = v;
          }
          for (int r = 0; r < kEmbedDim; ++r)
            acc[static_cast<std::size_t>(r)] +=
                static_cast<long double>(score) * vh[static_cast<std::size_t>(r)];
        }
      }
    }
    std::array<long double, kEmbedDim> z{};
    for (int r = 0; r < kEmbedDim; ++r)
      z[static_cast<std::size_t>(r)] = acc[static_cast<std::size_t>(r)] + H(r, t);
    const std::array<long double, kEmbedDim> f = block.ffn.apply(z);
    for (int r = 0; r < kEmbedDim; ++r)
      out(r, t) = static_cast<double>(z[static_cast<std::size_t>(r)] + f[static_cast<std::size_t>(r)]);
  }
  return out;
}

// Runs all blocks; throws a verification error naming the first block that
// produces a non-finite entry.
inline Matrix forward_embedding(const TransformerNetwork& net, Matrix H) {
  for (std::size_t b = 0; b < net.blocks.size(); ++b) {
    H = forward_block(net.blocks[b], H);
    for (double v : H.a)
      if (!std::isfinite(v))
        fail_verification("non-finite value in block " + std::to_string(b + 1));
  }
  return H;
}

inline double decode(const TransformerNetwork& net, const Matrix& H) {
  const double v = H(0, H.cols - 1);
  return std::min(std::max(v, -net.output_bound), net.output_bound);
}

inline double forward_network(const TransformerNetwork& net, const std::vector<double>& x) {
  return decode(net, forward_embedding(net, embed_input(x, net.ell)));
}

// ---- JSON (stable schema: {d_embed, ell, blocks:[{heads:[{Q,K,V}], ffn:[{W,b}]}], R}) ----

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < m.rows; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols; ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  require(j.is_array() && !j.empty(), errc::usage, "matrix json must be a nonempty array of rows");
  Matrix m(static_cast<int>(j.size()), static_cast<int>(j[0].size()));
  for (int r = 0; r < m.rows; ++r) {
    require(static_cast<int>(j[static_cast<std::size_t>(r)].size()) == m.cols, errc::usage,
            "ragged matrix json");
    for (int c = 0; c < m.cols; ++c)
      m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline nlohmann::json to_json(const TransformerNetwork& net) {
  nlohmann::json j;
  j["d_embed"] = kEmbedDim;
  j["ell"] = net.ell;
  j["R"] = net.output_bound;
  j["blocks"] = nlohmann::json::array();
  for (const auto& blk : net.blocks) {
    nlohmann::json jb;
    jb["heads"] = nlohmann::json::array();
    for (const auto& head : blk.heads)
      jb["heads"].push_back({{"Q", matrix_to_json(head.Q)},
                             {"K", matrix_to_json(head.K)},
                             {"V", matrix_to_json(head.V)}});
    jb["ffn"] = nlohmann::json::array();
    for (const auto& layer : blk.ffn.layers)
      jb["ffn"].push_back({{"W", matrix_to_json(layer.W)}, {"b", layer.b}});
    j["blocks"].push_back(jb);
  }
  return j;
}

inline TransformerNetwork network_from_json(const nlohmann::json& j) {
  require(j.value("d_embed", 0) == kEmbedDim, errc::usage, "unsupported embedding width");
  TransformerNetwork net;
  net.ell = j.at("ell").get<int>();
  net.output_bound = j.at("R").get<double>();
  for (const auto& jb : j.at("blocks")) {
    TransformerBlock blk;
    for (const auto& jh : jb.at("heads")) {
      AttentionHead head;
      head.Q = matrix_from_json(jh.at("Q"));
      head.K = matrix_from_json(jh.at("K"));
      head.V = matrix_from_json(jh.at("V"));
      require(head.Q.rows == kEmbedDim && head.Q.cols == kEmbedDim, errc::usage,
              "attention matrices must be 5x5");
      blk.heads.push_back(std::move(head));
    }
    for (const auto& jl : jb.at("ffn")) {
      FfnLayer layer;
      layer.W = matrix_from_json(jl.at("W"));
      layer.b = jl.at("b").get<std::vector<double>>();
      require(static_cast<int>(layer.b.size()) == layer.W.rows, errc::usage,
              "feed-forward bias length must match rows");
      blk.ffn.layers.push_back(std::move(layer));
    }
    net.blocks.push_back(std::move(blk));
  }
  return net;
}

}  // namespace relic::net
