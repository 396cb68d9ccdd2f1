#pragma once
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace relic {

// Deterministic random source. std::mt19937_64 has a standard-fixed output
// sequence, but the std distributions do not, so uniform/normal variates are
// derived here directly from the raw bits and reproduce bit-identically on
// any conforming platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  // Uniform in [0, 1): 53 high bits scaled.
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive range; modulo bias is < 2^-50 for the spans used here.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(bits() % span);
  }

  // Standard normal via Box-Muller; the sine mate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = static_cast<double>((bits() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  std::vector<double> normal_vec(int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = normal();
    return v;
  }

  std::vector<double> uniform_vec(int n, double lo, double hi) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace relic
