#pragma once

// Synthetic manifolds embedded in the unit cube: circles, spheres, tori and
// affine patches, each carried by a random (or caller-supplied) orthonormal
// frame.  Everything downstream builds on four primitives:
//   * project        — analytic nearest-point projection onto the manifold,
//   * geodesic_distance — closed forms where they exist, a relaxed discrete
//                      path on the torus,
//   * build_delta_net — greedy separated net over a dense parameter grid,
//   * sample_tube    — uniform base point plus a uniform normal offset of
//                      bounded radius.
//
// All randomness flows through relic::Rng seeds, so every construction here
// is reproducible bit for bit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "relic/errors.hpp"
#include "relic/matrix.hpp"
#include "relic/net.hpp"
#include "relic/random.hpp"

namespace relic::geo {

inline constexpr double kPi = net::kPi;
inline constexpr double kOnManifoldTol = 1e-10;

enum class Kind { circle, sphere, torus, affine };

inline std::string kind_name(Kind k) {
  switch (k) {
    case Kind::circle: return "circle";
    case Kind::sphere: return "sphere";
    case Kind::torus: return "torus";
    case Kind::affine: return "affine_subspace";
  }
  fail_usage("unknown manifold kind");
}

inline Kind kind_from_name(const std::string& s) {
  if (s == "circle") return Kind::circle;
  if (s == "sphere") return Kind::sphere;
  if (s == "torus") return Kind::torus;
  if (s == "affine_subspace") return Kind::affine;
  fail_usage("unknown manifold kind: " + s);
}

struct ManifoldSpec {
  Kind kind = Kind::circle;
  int d = 0;  // intrinsic dimension
  int D = 0;  // ambient dimension
  double rho = 0.0;                 // circle/sphere radius
  double a = 0.0, b = 0.0;          // torus: core radius / tube radius
  std::vector<double> half_widths;  // affine box half-sides (size d)
  std::vector<double> center;       // size D
  Matrix frame;       // D x m orthonormal columns spanning the model space
  Matrix frame_perp;  // D x (D - m) orthonormal completion
  double reach = 0.0;   // global reach (affine: configured tube radius)
  double volume = 0.0;  // d-dimensional volume

  int model_dim() const {
    switch (kind) {
      case Kind::circle: return 2;
      case Kind::sphere: return 3;
      case Kind::torus: return 3;
      case Kind::affine: return d;
    }
    fail_usage("unknown manifold kind");
  }
};

struct TubePoint {
  std::vector<double> x;  // sampled point, v + u
  std::vector<double> v;  // base point on the manifold
  std::vector<double> u;  // normal offset
  double offset_ratio = 0.0;  // |u| / local reach at v, in [0, q)
};

struct NetCenter {
  std::vector<double> z;  // center on the manifold
  double tau = 0.0;       // local reach at z
  Matrix P;               // D x d orthonormal tangent basis at z
};

struct DeltaNet {
  double delta = 0.0;
  double grid_spacing = 0.0;
  std::vector<NetCenter> centers;
};

// ------------------------------------------------------------------ helpers

namespace detail {

inline std::vector<double> to_local(const ManifoldSpec& s, const std::vector<double>& x) {
  require(static_cast<int>(x.size()) == s.D, errc::usage, "point has wrong ambient dimension");
  const int m = s.frame.cols;
  std::vector<double> y(static_cast<std::size_t>(m), 0.0);
  for (int j = 0; j < m; ++j) {
    double acc = 0.0;
    for (int r = 0; r < s.D; ++r) acc += s.frame(r, j) * (x[static_cast<std::size_t>(r)] - s.center[static_cast<std::size_t>(r)]);
    y[static_cast<std::size_t>(j)] = acc;
  }
  return y;
}

inline std::vector<double> from_local(const ManifoldSpec& s, const std::vector<double>& y) {
  std::vector<double> x = s.center;
  for (int r = 0; r < s.D; ++r) {
    double acc = 0.0;
    for (int j = 0; j < s.frame.cols; ++j) acc += s.frame(r, j) * y[static_cast<std::size_t>(j)];
    x[static_cast<std::size_t>(r)] += acc;
  }
  return x;
}

// distance from x to the model plane (everything the frame cannot express)
inline double perp_residual(const ManifoldSpec& s, const std::vector<double>& x,
                            const std::vector<double>& y) {
  double total = 0.0;
  for (int r = 0; r < s.D; ++r) {
    double rec = s.center[static_cast<std::size_t>(r)];
    for (int j = 0; j < s.frame.cols; ++j) rec += s.frame(r, j) * y[static_cast<std::size_t>(j)];
    const double diff = x[static_cast<std::size_t>(r)] - rec;
    total += diff * diff;
  }
  return std::sqrt(total);
}

// in-chart defect: how far the local coordinates are from the model surface
inline double chart_defect(const ManifoldSpec& s, const std::vector<double>& y) {
  switch (s.kind) {
    case Kind::circle:
      return std::fabs(std::hypot(y[0], y[1]) - s.rho);
    case Kind::sphere:
      return std::fabs(std::sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]) - s.rho);
    case Kind::torus: {
      const double rxy = std::hypot(y[0], y[1]);
      return std::fabs(std::hypot(rxy - s.a, y[2]) - s.b);
    }
    case Kind::affine: {
      double worst = 0.0;
      for (int i = 0; i < s.d; ++i)
        worst = std::max(worst, std::fabs(y[static_cast<std::size_t>(i)]) -
                                    s.half_widths[static_cast<std::size_t>(i)]);
      return std::max(worst, 0.0);
    }
  }
  fail_usage("unknown manifold kind");
}

inline std::vector<double> require_on_manifold(const ManifoldSpec& s,
                                               const std::vector<double>& x) {
  std::vector<double> y = to_local(s, x);
  require(perp_residual(s, x, y) <= kOnManifoldTol && chart_defect(s, y) <= kOnManifoldTol,
          errc::usage, "point is not on the manifold");
  return y;
}

// torus chart angles from local coordinates
inline std::pair<double, double> torus_angles(const ManifoldSpec& s, const std::vector<double>& y) {
  const double psi = std::atan2(y[1], y[0]);
  const double rxy = std::hypot(y[0], y[1]);
  const double phi = std::atan2(y[2], rxy - s.a);
  return {psi, phi};
}

inline double wrap_pi(double t) {
  while (t >= kPi) t -= 2.0 * kPi;
  while (t < -kPi) t += 2.0 * kPi;
  return t;
}

// length of the straight chart segment (psi1,phi1)->(psi1+dpsi,phi1+dphi)
// under ds^2 = (a + b cos phi)^2 dpsi^2 + b^2 dphi^2, 4-point Gauss-Legendre
inline double torus_segment_length(double a, double b, double phi1, double dpsi, double dphi) {
  static constexpr double kNode[2] = {0.3399810435848563, 0.8611363115940526};
  static constexpr double kWeight[2] = {0.6521451548625461, 0.3478548451374538};
  double len = 0.0;
  for (int k = 0; k < 2; ++k) {
    for (int sgn = -1; sgn <= 1; sgn += 2) {
      const double t = 0.5 + 0.5 * sgn * kNode[k];
      const double A = a + b * std::cos(phi1 + t * dphi);
      len += 0.5 * kWeight[k] * std::sqrt(A * A * dpsi * dpsi + b * b * dphi * dphi);
    }
  }
  return len;
}

// straight-chart upper bound for one unwrapping class
inline double torus_straight_length(double a, double b, double phi1, double dpsi, double dphi) {
  return torus_segment_length(a, b, phi1, dpsi, dphi);
}

inline double torus_path_length(double a, double b, const std::vector<double>& psi,
                                const std::vector<double>& phi) {
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < psi.size(); ++i)
    len += torus_segment_length(a, b, phi[i], psi[i + 1] - psi[i], phi[i + 1] - phi[i]);
  return len;
}

// Closed-form integral of A(phi)^2 = (a + b cos phi)^2 along a straight
// chart segment, with analytic derivatives in the endpoint angles.  Written
// with series branches near zero sweep so the derivatives stay accurate to
// O(1e-15) instead of cancelling catastrophically.
struct A2Integral {
  double I = 0, d0 = 0, d1 = 0;
};

inline A2Integral torus_a2_integral(double a, double b, double f0, double f1) {
  const double d = f1 - f0;
  double S1, S1d0, S1d1, S2, S2d0, S2d1;
  if (std::fabs(d) < 1e-3) {
    const double fm = 0.5 * (f0 + f1);
    const double c = std::cos(fm), s = std::sin(fm);
    const double c2 = std::cos(2 * fm), s2 = std::sin(2 * fm);
    const double d2 = d * d;
    S1 = c * (1.0 - d2 / 24.0);
    S1d0 = -0.5 * s * (1.0 - d2 / 24.0) + (c * d / 12.0) * (1.0 - d2 / 40.0);
    S1d1 = -0.5 * s * (1.0 - d2 / 24.0) - (c * d / 12.0) * (1.0 - d2 / 40.0);
    S2 = c2 * (1.0 - d2 / 6.0);
    S2d0 = -s2 * (1.0 - d2 / 6.0) + (c2 * d / 3.0) * (1.0 - d2 / 10.0);
    S2d1 = -s2 * (1.0 - d2 / 6.0) - (c2 * d / 3.0) * (1.0 - d2 / 10.0);
  } else {
    S1 = (std::sin(f1) - std::sin(f0)) / d;
    S1d0 = (S1 - std::cos(f0)) / d;
    S1d1 = (std::cos(f1) - S1) / d;
    S2 = (std::sin(2 * f1) - std::sin(2 * f0)) / (2 * d);
    S2d0 = (S2 - std::cos(2 * f0)) / d;
    S2d1 = (std::cos(2 * f1) - S2) / d;
  }
  A2Integral r;
  r.I = a * a + 0.5 * b * b + 2 * a * b * S1 + 0.5 * b * b * S2;
  r.d0 = 2 * a * b * S1d0 + 0.5 * b * b * S2d0;
  r.d1 = 2 * a * b * S1d1 + 0.5 * b * b * S2d1;
  return r;
}

// Solve a small dense linear system in place; returns false if singular.
inline bool dense_solve(std::vector<double>& A, std::vector<double>& rhs, int n) {
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(A[static_cast<std::size_t>(r) * n + col]) >
          std::fabs(A[static_cast<std::size_t>(pivot) * n + col]))
        pivot = r;
    if (std::fabs(A[static_cast<std::size_t>(pivot) * n + col]) < 1e-14) return false;
    if (pivot != col) {
      for (int c = 0; c < n; ++c)
        std::swap(A[static_cast<std::size_t>(pivot) * n + c],
                  A[static_cast<std::size_t>(col) * n + c]);
      std::swap(rhs[static_cast<std::size_t>(pivot)], rhs[static_cast<std::size_t>(col)]);
    }
    const double inv = 1.0 / A[static_cast<std::size_t>(col) * n + col];
    for (int r = col + 1; r < n; ++r) {
      const double factor = A[static_cast<std::size_t>(r) * n + col] * inv;
      if (factor == 0.0) continue;
      for (int c = col; c < n; ++c)
        A[static_cast<std::size_t>(r) * n + c] -= factor * A[static_cast<std::size_t>(col) * n + c];
      rhs[static_cast<std::size_t>(r)] -= factor * rhs[static_cast<std::size_t>(col)];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double acc = rhs[static_cast<std::size_t>(r)];
    for (int c = r + 1; c < n; ++c) acc -= A[static_cast<std::size_t>(r) * n + c] * rhs[static_cast<std::size_t>(c)];
    rhs[static_cast<std::size_t>(r)] = acc / A[static_cast<std::size_t>(r) * n + r];
  }
  return true;
}

// Discrete geodesic for one unwrapping class.  The length functional is
// invariant under sliding nodes along the path, so its Hessian is singular
// and no length-based iteration can converge tightly.  Minimizing the
// Dirichlet energy of the piecewise-straight chart path instead pins the
// parametrization (the minimizer is the constant-speed geodesic), keeps the
// Hessian positive definite near it, and lets a damped Newton solve reach
// gradient norms ~1e-12.  The returned value is the length quadrature of the
// converged path.
inline double torus_relaxed_length(double a, double b, double psi1, double phi1, double dpsi,
                                   double dphi) {
  constexpr int kSegments = 24;
  constexpr int kInterior = kSegments - 1;
  constexpr int n = 2 * kInterior;

  std::vector<double> P(kSegments + 1), F(kSegments + 1);
  for (int i = 0; i <= kSegments; ++i) {
    const double t = static_cast<double>(i) / kSegments;
    P[static_cast<std::size_t>(i)] = psi1 + t * dpsi;
    F[static_cast<std::size_t>(i)] = phi1 + t * dphi;
  }

  // energy = (N/2) * sum_i (dpsi_i^2 * integral(A^2) + b^2 * dphi_i^2)
  auto energy = [&](const std::vector<double>& p, const std::vector<double>& f) {
    double e = 0.0;
    for (int i = 0; i < kSegments; ++i) {
      const double dp = p[static_cast<std::size_t>(i) + 1] - p[static_cast<std::size_t>(i)];
      const double df = f[static_cast<std::size_t>(i) + 1] - f[static_cast<std::size_t>(i)];
      const A2Integral q =
          torus_a2_integral(a, b, f[static_cast<std::size_t>(i)], f[static_cast<std::size_t>(i) + 1]);
      e += dp * dp * q.I + b * b * df * df;
    }
    return 0.5 * kSegments * e;
  };
  // gradient wrt interior nodes, laid out (psi_1, phi_1, psi_2, phi_2, ...)
  auto gradient = [&](const std::vector<double>& p, const std::vector<double>& f,
                      std::vector<double>& g) {
    std::fill(g.begin(), g.end(), 0.0);
    for (int i = 0; i < kSegments; ++i) {
      const double dp = p[static_cast<std::size_t>(i) + 1] - p[static_cast<std::size_t>(i)];
      const double df = f[static_cast<std::size_t>(i) + 1] - f[static_cast<std::size_t>(i)];
      const A2Integral q =
          torus_a2_integral(a, b, f[static_cast<std::size_t>(i)], f[static_cast<std::size_t>(i) + 1]);
      const double N = kSegments;
      if (i >= 1) {
        g[static_cast<std::size_t>(2 * (i - 1))] += -N * dp * q.I;
        g[static_cast<std::size_t>(2 * (i - 1) + 1)] +=
            0.5 * N * (dp * dp * q.d0 - 2.0 * b * b * df);
      }
      if (i + 1 <= kInterior) {
        g[static_cast<std::size_t>(2 * i)] += N * dp * q.I;
        g[static_cast<std::size_t>(2 * i + 1)] += 0.5 * N * (dp * dp * q.d1 + 2.0 * b * b * df);
      }
    }
  };

  std::vector<double> g(n), gp(n), H(static_cast<std::size_t>(n) * n), step(n);
  std::vector<double> Pt = P, Ft = F;
  double ene = energy(P, F);

  for (int iter = 0; iter < 80; ++iter) {
    gradient(P, F, g);
    double gn = 0.0;
    for (double v : g) gn = std::max(gn, std::fabs(v));
    if (gn < 1e-12) break;

    // Hessian columns by differencing the analytic gradient
    const double h = 1e-6;
    for (int j = 0; j < n; ++j) {
      Pt = P;
      Ft = F;
      const int node = j / 2 + 1;
      if (j % 2 == 0)
        Pt[static_cast<std::size_t>(node)] += h;
      else
        Ft[static_cast<std::size_t>(node)] += h;
      gradient(Pt, Ft, gp);
      for (int r = 0; r < n; ++r)
        H[static_cast<std::size_t>(r) * n + j] =
            (gp[static_cast<std::size_t>(r)] - g[static_cast<std::size_t>(r)]) / h;
    }

    std::vector<double> Hcopy = H;
    step = g;
    for (double& v : step) v = -v;
    bool ok = dense_solve(Hcopy, step, n);
    double descent = 0.0;
    if (ok)
      for (int r = 0; r < n; ++r)
        descent += g[static_cast<std::size_t>(r)] * step[static_cast<std::size_t>(r)];
    if (!ok || descent >= 0.0) {  // fall back to steepest descent
      for (int r = 0; r < n; ++r)
        step[static_cast<std::size_t>(r)] = -g[static_cast<std::size_t>(r)] / gn * 0.01;
    }

    double t = 1.0;
    bool moved = false;
    for (; t > 1e-10; t *= 0.5) {
      Pt = P;
      Ft = F;
      for (int j = 0; j < n; ++j) {
        const int node = j / 2 + 1;
        if (j % 2 == 0)
          Pt[static_cast<std::size_t>(node)] += t * step[static_cast<std::size_t>(j)];
        else
          Ft[static_cast<std::size_t>(node)] += t * step[static_cast<std::size_t>(j)];
      }
      const double cand = energy(Pt, Ft);
      if (cand < ene) {
        P = Pt;
        F = Ft;
        ene = cand;
        moved = true;
        break;
      }
    }
    if (!moved) break;  // below numeric resolution: converged
  }
  return torus_path_length(a, b, P, F);
}

// cheap class-minimum of straight chart segments; lower-bounds nothing but
// upper-bounds the geodesic, and is the metric the net builder certifies in
inline double torus_chart_distance(double a, double b, double psi1, double phi1, double psi2,
                                   double phi2) {
  const double dpsi0 = wrap_pi(psi2 - psi1);
  const double dphi0 = wrap_pi(phi2 - phi1);
  double best = 1e300;
  for (int k = -1; k <= 1; ++k)
    for (int j = -1; j <= 1; ++j)
      best = std::min(best, torus_straight_length(a, b, phi1, dpsi0 + 2 * kPi * k,
                                                  dphi0 + 2 * kPi * j));
  return best;
}

inline double torus_geodesic(double a, double b, double psi1, double phi1, double psi2,
                             double phi2) {
  const double dpsi0 = wrap_pi(psi2 - psi1);
  const double dphi0 = wrap_pi(phi2 - phi1);
  struct Class {
    double dpsi, dphi, straight;
  };
  std::vector<Class> classes;
  for (int k = -1; k <= 1; ++k)
    for (int j = -1; j <= 1; ++j) {
      const double dp = dpsi0 + 2 * kPi * k, df = dphi0 + 2 * kPi * j;
      classes.push_back({dp, df, torus_straight_length(a, b, phi1, dp, df)});
    }
  std::sort(classes.begin(), classes.end(),
            [](const Class& l, const Class& r) { return l.straight < r.straight; });
  double best = classes.front().straight;
  for (const Class& c : classes) {
    // a class cannot beat `best` if even its metric floor exceeds it
    const double floor_len =
        std::sqrt((a - b) * (a - b) * c.dpsi * c.dpsi + b * b * c.dphi * c.dphi);
    if (floor_len >= best) continue;
    best = std::min(best, torus_relaxed_length(a, b, psi1, phi1, c.dpsi, c.dphi));
  }
  return best;
}

// Orthonormal columns via modified Gram-Schmidt over seeded Gaussian draws.
inline void gram_schmidt_columns(Matrix& F, int from_col, Rng& rng) {
  for (int j = from_col; j < F.cols; ++j) {
    for (int attempt = 0;; ++attempt) {
      require(attempt < 64, errc::infeasible, "frame construction failed to converge");
      std::vector<double> v = rng.normal_vec(F.rows);
      for (int prev = 0; prev < j; ++prev) {
        double dot = 0.0;
        for (int r = 0; r < F.rows; ++r) dot += F(r, prev) * v[static_cast<std::size_t>(r)];
        for (int r = 0; r < F.rows; ++r) v[static_cast<std::size_t>(r)] -= dot * F(r, prev);
      }
      double norm = 0.0;
      for (double t : v) norm += t * t;
      norm = std::sqrt(norm);
      if (norm < 1e-6) continue;
      for (int r = 0; r < F.rows; ++r) F(r, j) = v[static_cast<std::size_t>(r)] / norm;
      break;
    }
  }
}

// Complete a caller-supplied frame against the identity basis (deterministic).
inline Matrix complete_frame(const Matrix& frame) {
  const int D = frame.rows, m = frame.cols;
  Matrix full(D, D);
  for (int r = 0; r < D; ++r)
    for (int c = 0; c < m; ++c) full(r, c) = frame(r, c);
  int have = m;
  for (int cand = 0; cand < D && have < D; ++cand) {
    std::vector<double> v(static_cast<std::size_t>(D), 0.0);
    v[static_cast<std::size_t>(cand)] = 1.0;
    for (int prev = 0; prev < have; ++prev) {
      double dot = 0.0;
      for (int r = 0; r < D; ++r) dot += full(r, prev) * v[static_cast<std::size_t>(r)];
      for (int r = 0; r < D; ++r) v[static_cast<std::size_t>(r)] -= dot * full(r, prev);
    }
    double norm = 0.0;
    for (double t : v) norm += t * t;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (int r = 0; r < D; ++r) full(r, have) = v[static_cast<std::size_t>(r)] / norm;
    ++have;
  }
  require(have == D, errc::infeasible, "could not complete the frame to a full basis");
  Matrix perp(D, D - m);
  for (int r = 0; r < D; ++r)
    for (int c = 0; c < D - m; ++c) perp(r, c) = full(r, m + c);
  return perp;
}

inline void check_model_dims(int D, int m) {
  require(D >= m, errc::usage, "ambient dimension too small for this manifold");
}

}  // namespace detail

// ------------------------------------------------------------- constructors

// Random placements center the manifold at 0.5*ones and draw a random
// orthonormal frame; sizes are restricted so the full q<1 tube stays inside
// the unit cube.  The *_at variants take an explicit placement (for worked
// examples and canonical configurations) and skip the cube containment rule.

inline ManifoldSpec make_circle_at(int D, double rho, std::vector<double> center, Matrix frame) {
  detail::check_model_dims(D, 2);
  require(rho > 0.0, errc::usage, "circle radius must be positive");
  require(static_cast<int>(center.size()) == D && frame.rows == D && frame.cols == 2,
          errc::usage, "circle placement has wrong dimensions");
  ManifoldSpec s;
  s.kind = Kind::circle;
  s.d = 1;
  s.D = D;
  s.rho = rho;
  s.center = std::move(center);
  s.frame = std::move(frame);
  s.frame_perp = detail::complete_frame(s.frame);
  s.reach = rho;
  s.volume = 2.0 * kPi * rho;
  return s;
}

inline ManifoldSpec make_circle(int D, std::uint64_t seed, double rho = 0.25) {
  require(rho > 0.0 && rho <= 0.25 + 1e-12, errc::usage,
          "circle radius must lie in (0, 0.25] to keep the tube inside the cube");
  Rng rng(seed);
  Matrix F(D, 2);
  detail::gram_schmidt_columns(F, 0, rng);
  return make_circle_at(D, rho, std::vector<double>(static_cast<std::size_t>(D), 0.5),
                        std::move(F));
}

inline ManifoldSpec make_sphere_at(int D, double rho, std::vector<double> center, Matrix frame) {
  detail::check_model_dims(D, 3);
  require(rho > 0.0, errc::usage, "sphere radius must be positive");
  require(static_cast<int>(center.size()) == D && frame.rows == D && frame.cols == 3,
          errc::usage, "sphere placement has wrong dimensions");
  ManifoldSpec s;
  s.kind = Kind::sphere;
  s.d = 2;
  s.D = D;
  s.rho = rho;
  s.center = std::move(center);
  s.frame = std::move(frame);
  s.frame_perp = detail::complete_frame(s.frame);
  s.reach = rho;
  s.volume = 4.0 * kPi * rho * rho;
  return s;
}

inline ManifoldSpec make_sphere(int D, std::uint64_t seed, double rho = 0.25) {
  require(rho > 0.0 && rho <= 0.25 + 1e-12, errc::usage,
          "sphere radius must lie in (0, 0.25] to keep the tube inside the cube");
  Rng rng(seed);
  Matrix F(D, 3);
  detail::gram_schmidt_columns(F, 0, rng);
  return make_sphere_at(D, rho, std::vector<double>(static_cast<std::size_t>(D), 0.5),
                        std::move(F));
}

inline ManifoldSpec make_torus_at(int D, double a, double b, std::vector<double> center,
                                  Matrix frame) {
  detail::check_model_dims(D, 3);
  require(b > 0.0 && a > b, errc::usage, "torus needs core radius a > tube radius b > 0");
  require(static_cast<int>(center.size()) == D && frame.rows == D && frame.cols == 3,
          errc::usage, "torus placement has wrong dimensions");
  ManifoldSpec s;
  s.kind = Kind::torus;
  s.d = 2;
  s.D = D;
  s.a = a;
  s.b = b;
  s.center = std::move(center);
  s.frame = std::move(frame);
  s.frame_perp = detail::complete_frame(s.frame);
  s.reach = std::min(b, a - b);
  s.volume = 4.0 * kPi * kPi * a * b;
  return s;
}

inline ManifoldSpec make_torus(int D, std::uint64_t seed, double a = 0.12, double b = 0.07) {
  require(a + 2.0 * b <= 0.5 + 1e-12, errc::usage,
          "torus too large: a + 2b must stay within the unit cube margin");
  Rng rng(seed);
  Matrix F(D, 3);
  detail::gram_schmidt_columns(F, 0, rng);
  return make_torus_at(D, a, b, std::vector<double>(static_cast<std::size_t>(D), 0.5),
                       std::move(F));
}

inline ManifoldSpec make_affine_at(int D, int d, std::vector<double> half_widths, double tau,
                                   std::vector<double> center, Matrix frame) {
  require(d >= 1 && d < D, errc::usage, "affine patch needs 1 <= d < D");
  require(static_cast<int>(half_widths.size()) == d, errc::usage,
          "affine patch needs one half-width per intrinsic dimension");
  for (double w : half_widths) require(w > 0.0, errc::usage, "half-widths must be positive");
  require(tau > 0.0, errc::usage, "affine tube radius must be positive");
  require(static_cast<int>(center.size()) == D && frame.rows == D && frame.cols == d,
          errc::usage, "affine placement has wrong dimensions");
  ManifoldSpec s;
  s.kind = Kind::affine;
  s.d = d;
  s.D = D;
  s.half_widths = std::move(half_widths);
  s.center = std::move(center);
  s.frame = std::move(frame);
  s.frame_perp = detail::complete_frame(s.frame);
  s.reach = tau;
  s.volume = 1.0;
  for (double w : s.half_widths) s.volume *= 2.0 * w;
  return s;
}

inline ManifoldSpec make_affine(int D, int d, std::uint64_t seed,
                                std::vector<double> half_widths = {}, double tau = 0.1) {
  require(d >= 1 && d < D, errc::usage, "affine patch needs 1 <= d < D");
  if (half_widths.empty()) half_widths.assign(static_cast<std::size_t>(d), 0.3);
  Rng rng(seed);
  // resample the frame until every coordinate of box + tube stays in the cube
  for (int attempt = 0; attempt < 5000; ++attempt) {
    Matrix F(D, d);
    detail::gram_schmidt_columns(F, 0, rng);
    bool ok = true;
    for (int r = 0; r < D && ok; ++r) {
      double extent = tau;
      for (int j = 0; j < d; ++j) extent += std::fabs(F(r, j)) * half_widths[static_cast<std::size_t>(j)];
      ok = extent <= 0.5 - 1e-9;
    }
    if (ok)
      return make_affine_at(D, d, std::move(half_widths), tau,
                            std::vector<double>(static_cast<std::size_t>(D), 0.5), std::move(F));
  }
  fail_infeasible("no cube-compatible affine placement found; shrink the box or tube");
}

// -------------------------------------------------------------- chart points

inline std::vector<double> circle_point(const ManifoldSpec& s, double theta) {
  require(s.kind == Kind::circle, errc::usage, "circle_point needs a circle");
  return detail::from_local(s, {s.rho * std::cos(theta), s.rho * std::sin(theta)});
}

inline std::vector<double> sphere_point(const ManifoldSpec& s, const std::array<double, 3>& dir) {
  require(s.kind == Kind::sphere, errc::usage, "sphere_point needs a sphere");
  const double n = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
  require(n > 1e-12, errc::usage, "sphere direction must be nonzero");
  return detail::from_local(s, {s.rho * dir[0] / n, s.rho * dir[1] / n, s.rho * dir[2] / n});
}

inline std::vector<double> torus_point(const ManifoldSpec& s, double psi, double phi) {
  require(s.kind == Kind::torus, errc::usage, "torus_point needs a torus");
  const double A = s.a + s.b * std::cos(phi);
  return detail::from_local(s, {A * std::cos(psi), A * std::sin(psi), s.b * std::sin(phi)});
}

inline std::vector<double> affine_point(const ManifoldSpec& s, const std::vector<double>& xi) {
  require(s.kind == Kind::affine, errc::usage, "affine_point needs an affine patch");
  require(static_cast<int>(xi.size()) == s.d, errc::usage, "affine point has wrong dimension");
  for (int i = 0; i < s.d; ++i)
    require(std::fabs(xi[static_cast<std::size_t>(i)]) <=
                s.half_widths[static_cast<std::size_t>(i)] + 1e-12,
            errc::usage, "affine point outside the box");
  return detail::from_local(s, xi);
}

// --------------------------------------------------------------- operations

inline std::vector<double> project(const ManifoldSpec& s, const std::vector<double>& x) {
  const std::vector<double> y = detail::to_local(s, x);
  switch (s.kind) {
    case Kind::circle: {
      const double n = std::hypot(y[0], y[1]);
      require(n > 1e-12 * std::max(1.0, s.rho), errc::usage,
              "projection is not unique: point lies on the medial axis");
      return detail::from_local(s, {s.rho * y[0] / n, s.rho * y[1] / n});
    }
    case Kind::sphere: {
      const double n = std::sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]);
      require(n > 1e-12 * std::max(1.0, s.rho), errc::usage,
              "projection is not unique: point lies on the medial axis");
      return detail::from_local(s, {s.rho * y[0] / n, s.rho * y[1] / n, s.rho * y[2] / n});
    }
    case Kind::torus: {
      const double rxy = std::hypot(y[0], y[1]);
      require(rxy > 1e-12 * std::max(1.0, s.a), errc::usage,
              "projection is not unique: point lies on the torus axis");
      const double cp = y[0] / rxy, sp = y[1] / rxy;
      const double w0 = rxy - s.a, w1 = y[2];
      const double wn = std::hypot(w0, w1);
      require(wn > 1e-12 * std::max(1.0, s.b), errc::usage,
              "projection is not unique: point lies on the core circle");
      const double A = s.a + s.b * w0 / wn;
      return detail::from_local(s, {A * cp, A * sp, s.b * w1 / wn});
    }
    case Kind::affine: {
      std::vector<double> xi = y;
      for (int i = 0; i < s.d; ++i)
        xi[static_cast<std::size_t>(i)] =
            std::clamp(xi[static_cast<std::size_t>(i)], -s.half_widths[static_cast<std::size_t>(i)],
                       s.half_widths[static_cast<std::size_t>(i)]);
      return detail::from_local(s, xi);
    }
  }
  fail_usage("unknown manifold kind");
}

inline double local_reach(const ManifoldSpec& s, const std::vector<double>& v) {
  if (s.kind != Kind::torus) return s.reach;
  const std::vector<double> y = detail::require_on_manifold(s, v);
  const auto [psi, phi] = detail::torus_angles(s, y);
  (void)psi;
  return std::min(s.b, s.a + s.b * std::cos(phi));
}

inline double geodesic_distance(const ManifoldSpec& s, const std::vector<double>& x1,
                                const std::vector<double>& x2) {
  const std::vector<double> y1 = detail::require_on_manifold(s, x1);
  const std::vector<double> y2 = detail::require_on_manifold(s, x2);
  switch (s.kind) {
    case Kind::circle: {
      const double dot = y1[0] * y2[0] + y1[1] * y2[1];
      const double cross = y1[0] * y2[1] - y1[1] * y2[0];
      return s.rho * std::atan2(std::fabs(cross), dot);
    }
    case Kind::sphere: {
      const double cx = y1[1] * y2[2] - y1[2] * y2[1];
      const double cy = y1[2] * y2[0] - y1[0] * y2[2];
      const double cz = y1[0] * y2[1] - y1[1] * y2[0];
      const double cross = std::sqrt(cx * cx + cy * cy + cz * cz);
      const double dot = y1[0] * y2[0] + y1[1] * y2[1] + y1[2] * y2[2];
      return s.rho * std::atan2(cross, dot);
    }
    case Kind::torus: {
      const auto [p1, f1] = detail::torus_angles(s, y1);
      const auto [p2, f2] = detail::torus_angles(s, y2);
      return detail::torus_geodesic(s.a, s.b, p1, f1, p2, f2);
    }
    case Kind::affine: {
      double acc = 0.0;
      for (int i = 0; i < s.d; ++i) {
        const double diff = y1[static_cast<std::size_t>(i)] - y2[static_cast<std::size_t>(i)];
        acc += diff * diff;
      }
      return std::sqrt(acc);
    }
  }
  fail_usage("unknown manifold kind");
}

// The metric the net builder works in: identical to the geodesic except on
// the torus, where the straight-chart class minimum (an upper bound on the
// geodesic) replaces the relaxed path for speed.
inline double net_distance(const ManifoldSpec& s, const std::vector<double>& x1,
                           const std::vector<double>& x2) {
  if (s.kind != Kind::torus) return geodesic_distance(s, x1, x2);
  const std::vector<double> y1 = detail::require_on_manifold(s, x1);
  const std::vector<double> y2 = detail::require_on_manifold(s, x2);
  const auto [p1, f1] = detail::torus_angles(s, y1);
  const auto [p2, f2] = detail::torus_angles(s, y2);
  return detail::torus_chart_distance(s.a, s.b, p1, f1, p2, f2);
}

inline Matrix tangent_basis(const ManifoldSpec& s, const std::vector<double>& v) {
  const std::vector<double> y = detail::require_on_manifold(s, v);
  const int m = s.frame.cols;
  Matrix local(m, s.d);
  switch (s.kind) {
    case Kind::circle: {
      const double inv = 1.0 / std::hypot(y[0], y[1]);
      local(0, 0) = -y[1] * inv;
      local(1, 0) = y[0] * inv;
      break;
    }
    case Kind::sphere: {
      std::array<double, 3> w = {y[0] / s.rho, y[1] / s.rho, y[2] / s.rho};
      // cross with the least-aligned axis for a stable first tangent
      int k = 0;
      for (int i = 1; i < 3; ++i)
        if (std::fabs(w[static_cast<std::size_t>(i)]) < std::fabs(w[static_cast<std::size_t>(k)]))
          k = i;
      std::array<double, 3> e = {0, 0, 0};
      e[static_cast<std::size_t>(k)] = 1.0;
      std::array<double, 3> t1 = {e[1] * w[2] - e[2] * w[1], e[2] * w[0] - e[0] * w[2],
                                  e[0] * w[1] - e[1] * w[0]};
      const double n1 = std::sqrt(t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]);
      for (double& t : t1) t /= n1;
      const std::array<double, 3> t2 = {w[1] * t1[2] - w[2] * t1[1], w[2] * t1[0] - w[0] * t1[2],
                                        w[0] * t1[1] - w[1] * t1[0]};
      for (int r = 0; r < 3; ++r) {
        local(r, 0) = t1[static_cast<std::size_t>(r)];
        local(r, 1) = t2[static_cast<std::size_t>(r)];
      }
      break;
    }
    case Kind::torus: {
      const auto [psi, phi] = detail::torus_angles(s, y);
      local(0, 0) = -std::sin(psi);
      local(1, 0) = std::cos(psi);
      local(2, 0) = 0.0;
      local(0, 1) = -std::sin(phi) * std::cos(psi);
      local(1, 1) = -std::sin(phi) * std::sin(psi);
      local(2, 1) = std::cos(phi);
      break;
    }
    case Kind::affine:
      return s.frame;
  }
  Matrix P(s.D, s.d);
  for (int r = 0; r < s.D; ++r)
    for (int c = 0; c < s.d; ++c) {
      double acc = 0.0;
      for (int j = 0; j < m; ++j) acc += s.frame(r, j) * local(j, c);
      P(r, c) = acc;
    }
  return P;
}

// --------------------------------------------------------------- tube draws

inline std::vector<TubePoint> sample_tube(const ManifoldSpec& s, double q, int n,
                                          std::uint64_t seed) {
  require(q >= 0.0 && q < 1.0, errc::usage, "tube thickness q must lie in [0, 1)");
  require(n >= 0, errc::usage, "sample count must be nonnegative");
  Rng rng(seed);
  const int codim = s.D - s.d;
  std::vector<TubePoint> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<double> local;   // model coordinates of the base point
    std::vector<double> normal0; // model coordinates of the in-plane normal (if any)
    double tau = s.reach;
    switch (s.kind) {
      case Kind::circle: {
        const double theta = rng.uniform(0.0, 2.0 * kPi);
        local = {s.rho * std::cos(theta), s.rho * std::sin(theta)};
        normal0 = {std::cos(theta), std::sin(theta)};
        break;
      }
      case Kind::sphere: {
        std::vector<double> w;
        double nw = 0.0;
        do {
          w = rng.normal_vec(3);
          nw = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
        } while (nw < 1e-8);
        local = {s.rho * w[0] / nw, s.rho * w[1] / nw, s.rho * w[2] / nw};
        normal0 = {w[0] / nw, w[1] / nw, w[2] / nw};
        break;
      }
      case Kind::torus: {
        const double psi = rng.uniform(0.0, 2.0 * kPi);
        double phi = 0.0;
        // area element is proportional to a + b cos(phi)
        do {
          phi = rng.uniform(0.0, 2.0 * kPi);
        } while (rng.uniform() * (s.a + s.b) > s.a + s.b * std::cos(phi));
        const double A = s.a + s.b * std::cos(phi);
        local = {A * std::cos(psi), A * std::sin(psi), s.b * std::sin(phi)};
        normal0 = {std::cos(phi) * std::cos(psi), std::cos(phi) * std::sin(psi), std::sin(phi)};
        tau = std::min(s.b, s.a + s.b * std::cos(phi));
        break;
      }
      case Kind::affine: {
        local.resize(static_cast<std::size_t>(s.d));
        for (int j = 0; j < s.d; ++j)
          local[static_cast<std::size_t>(j)] =
              rng.uniform(-s.half_widths[static_cast<std::size_t>(j)],
                          s.half_widths[static_cast<std::size_t>(j)]);
        break;
      }
    }

    TubePoint p;
    p.v = detail::from_local(s, local);

    // direction uniform on the normal sphere, radius with the ball-volume law
    std::vector<double> dir;
    double dn = 0.0;
    do {
      dir = rng.normal_vec(codim);
      dn = 0.0;
      for (double t : dir) dn += t * t;
      dn = std::sqrt(dn);
    } while (dn < 1e-8);
    const double radius = q * tau * std::pow(rng.uniform(), 1.0 / codim);

    p.u.assign(static_cast<std::size_t>(s.D), 0.0);
    const int perp_cols = s.frame_perp.cols;
    const bool has_in_plane = !normal0.empty();
    for (int r = 0; r < s.D; ++r) {
      double acc = 0.0;
      int slot = 0;
      if (has_in_plane) {
        double in_plane = 0.0;
        for (int j = 0; j < s.frame.cols; ++j)
          in_plane += s.frame(r, j) * normal0[static_cast<std::size_t>(j)];
        acc += dir[0] / dn * in_plane;
        slot = 1;
      }
      for (int c = 0; c < perp_cols; ++c)
        acc += dir[static_cast<std::size_t>(slot + c)] / dn * s.frame_perp(r, c);
      p.u[static_cast<std::size_t>(r)] = radius * acc;
    }

    p.x = p.v;
    for (int r = 0; r < s.D; ++r) p.x[static_cast<std::size_t>(r)] += p.u[static_cast<std::size_t>(r)];
    p.offset_ratio = radius > 0.0 ? radius / tau : 0.0;
    out.push_back(std::move(p));
  }
  return out;
}

// ------------------------------------------------------------------- grids

namespace detail {

struct GridPt {
  std::vector<double> y;  // model coordinates
  double a0 = 0.0, a1 = 0.0;  // chart angles where relevant
};

inline std::vector<GridPt> grid_charts(const ManifoldSpec& s, double spacing) {
  require(spacing > 0.0, errc::usage, "grid spacing must be positive");
  std::vector<GridPt> grid;
  switch (s.kind) {
    case Kind::circle: {
      const int n = std::max(8, static_cast<int>(std::ceil(2.0 * kPi * s.rho / spacing)));
      for (int i = 0; i < n; ++i) {
        const double t = 2.0 * kPi * i / n;
        grid.push_back({{s.rho * std::cos(t), s.rho * std::sin(t)}, t, 0.0});
      }
      break;
    }
    case Kind::sphere: {
      const double area = 4.0 * kPi * s.rho * s.rho;
      const int n = std::max(32, static_cast<int>(std::ceil(2.0 * area / (spacing * spacing))));
      const double golden = kPi * (3.0 - std::sqrt(5.0));
      for (int i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double az = golden * i;
        grid.push_back(
            {{s.rho * r * std::cos(az), s.rho * r * std::sin(az), s.rho * z}, 0.0, 0.0});
      }
      break;
    }
    case Kind::torus: {
      const int np = std::max(8, static_cast<int>(std::ceil(2.0 * kPi * (s.a + s.b) / spacing)));
      const int nf = std::max(8, static_cast<int>(std::ceil(2.0 * kPi * s.b / spacing)));
      for (int i = 0; i < np; ++i)
        for (int j = 0; j < nf; ++j) {
          const double psi = 2.0 * kPi * i / np;
          const double phi = 2.0 * kPi * j / nf;
          const double A = s.a + s.b * std::cos(phi);
          grid.push_back(
              {{A * std::cos(psi), A * std::sin(psi), s.b * std::sin(phi)}, psi, phi});
        }
      break;
    }
    case Kind::affine: {
      std::vector<int> counts(static_cast<std::size_t>(s.d));
      std::size_t total = 1;
      for (int j = 0; j < s.d; ++j) {
        const double w = s.half_widths[static_cast<std::size_t>(j)];
        // the +2 keeps lattice steps from dividing round-number scales
        // exactly, which would put grid pairs knife-edge at distance delta
        counts[static_cast<std::size_t>(j)] =
            std::max(2, static_cast<int>(std::ceil(2.0 * w / spacing)) + 2);
        total *= static_cast<std::size_t>(counts[static_cast<std::size_t>(j)]);
      }
      require(total <= 50'000'000, errc::infeasible, "affine net grid would be too large");
      std::vector<int> idx(static_cast<std::size_t>(s.d), 0);
      for (std::size_t flat = 0; flat < total; ++flat) {
        GridPt g;
        g.y.resize(static_cast<std::size_t>(s.d));
        for (int j = 0; j < s.d; ++j) {
          const double w = s.half_widths[static_cast<std::size_t>(j)];
          const int c = counts[static_cast<std::size_t>(j)];
          g.y[static_cast<std::size_t>(j)] =
              -w + 2.0 * w * idx[static_cast<std::size_t>(j)] / (c - 1);
        }
        grid.push_back(std::move(g));
        for (int j = s.d - 1; j >= 0; --j) {
          if (++idx[static_cast<std::size_t>(j)] < counts[static_cast<std::size_t>(j)]) break;
          idx[static_cast<std::size_t>(j)] = 0;
        }
      }
      break;
    }
  }
  return grid;
}

inline double chart_metric(const ManifoldSpec& s, const GridPt& p, const GridPt& q) {
  switch (s.kind) {
    case Kind::circle: {
      const double dot = p.y[0] * q.y[0] + p.y[1] * q.y[1];
      const double cross = p.y[0] * q.y[1] - p.y[1] * q.y[0];
      return s.rho * std::atan2(std::fabs(cross), dot);
    }
    case Kind::sphere: {
      const double cx = p.y[1] * q.y[2] - p.y[2] * q.y[1];
      const double cy = p.y[2] * q.y[0] - p.y[0] * q.y[2];
      const double cz = p.y[0] * q.y[1] - p.y[1] * q.y[0];
      const double cross = std::sqrt(cx * cx + cy * cy + cz * cz);
      const double dot = p.y[0] * q.y[0] + p.y[1] * q.y[1] + p.y[2] * q.y[2];
      return s.rho * std::atan2(cross, dot);
    }
    case Kind::torus:
      return torus_chart_distance(s.a, s.b, p.a0, p.a1, q.a0, q.a1);
    case Kind::affine: {
      double acc = 0.0;
      for (std::size_t i = 0; i < p.y.size(); ++i) {
        const double diff = p.y[i] - q.y[i];
        acc += diff * diff;
      }
      return std::sqrt(acc);
    }
  }
  fail_usage("unknown manifold kind");
}

inline double chord_sq(const GridPt& p, const GridPt& q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.y.size(); ++i) {
    const double diff = p.y[i] - q.y[i];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace detail

inline std::vector<std::vector<double>> parameter_grid(const ManifoldSpec& s, double spacing) {
  std::vector<std::vector<double>> out;
  for (const detail::GridPt& g : detail::grid_charts(s, spacing))
    out.push_back(detail::from_local(s, g.y));
  return out;
}

// Greedy maximal separated net: walk the dense grid in scan order and keep
// every point farther than delta (in the net metric) from all kept points.
// Maximality over the grid gives the covering property for free.
inline DeltaNet build_delta_net(const ManifoldSpec& s, double delta) {
  require(delta > 0.0 && delta < s.reach / 2.0, errc::usage,
          "net scale must satisfy 0 < delta < reach/2");
  const double spacing = delta / 10.0;
  const std::vector<detail::GridPt> grid = detail::grid_charts(s, spacing);

  std::vector<std::size_t> kept;
  const double d2 = delta * delta;
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    bool free_point = true;
    // newest centers first: the rejecting neighbor is usually recent
    for (auto it = kept.rbegin(); it != kept.rend(); ++it) {
      // the ambient chord never exceeds the metric, so it screens cheaply;
      // near-ties fall through to the exact metric to stay consistent with it
      if (detail::chord_sq(grid[gi], grid[*it]) > d2 * 1.000000001) continue;
      if (detail::chart_metric(s, grid[gi], grid[*it]) <= delta) {
        free_point = false;
        break;
      }
    }
    if (free_point) kept.push_back(gi);
  }

  DeltaNet net;
  net.delta = delta;
  net.grid_spacing = spacing;
  for (std::size_t gi : kept) {
    NetCenter c;
    c.z = detail::from_local(s, grid[gi].y);
    c.tau = local_reach(s, c.z);
    c.P = tangent_basis(s, c.z);
    net.centers.push_back(std::move(c));
  }
  return net;
}

// -------------------------------------------------------------------- json

inline nlohmann::json manifold_to_json(const ManifoldSpec& s) {
  nlohmann::json j;
  j["kind"] = kind_name(s.kind);
  j["d"] = s.d;
  j["D"] = s.D;
  j["rho"] = s.rho;
  j["a"] = s.a;
  j["b"] = s.b;
  j["half_widths"] = s.half_widths;
  j["center"] = s.center;
  j["frame"] = net::matrix_to_json(s.frame);
  j["frame_perp"] = net::matrix_to_json(s.frame_perp);
  j["reach"] = s.reach;
  j["volume"] = s.volume;
  return j;
}

inline ManifoldSpec manifold_from_json(const nlohmann::json& j) {
  ManifoldSpec s;
  s.kind = kind_from_name(j.at("kind").get<std::string>());
  s.d = j.at("d").get<int>();
  s.D = j.at("D").get<int>();
  s.rho = j.at("rho").get<double>();
  s.a = j.at("a").get<double>();
  s.b = j.at("b").get<double>();
  s.half_widths = j.at("half_widths").get<std::vector<double>>();
  s.center = j.at("center").get<std::vector<double>>();
  s.frame = net::matrix_from_json(j.at("frame"));
  s.frame_perp = net::matrix_from_json(j.at("frame_perp"));
  s.reach = j.at("reach").get<double>();
  s.volume = j.at("volume").get<double>();
  return s;
}

}  // namespace relic::geo
