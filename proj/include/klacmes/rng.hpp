#ifndef KLACMES_RNG_HPP
#define KLACMES_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace klacmes {

// splitmix64 finalizer, used to decorrelate derived seeds
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic random stream with value semantics: copying the stream
/// copies its full state, so two copies produce identical draws. The
/// Gaussian path is hand-rolled (Box-Muller with an explicit spare slot)
/// so that draws do not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1) with 53-bit resolution
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u = 1.0 - uniform();  // (0, 1], keeps log finite
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    spare_ = r * std::sin(kTwoPi * v);
    has_spare_ = true;
    return r * std::cos(kTwoPi * v);
  }

  Eigen::VectorXd normal_vector(int n) {
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z[i] = normal();
    return z;
  }

  Eigen::VectorXd uniform_vector(int n, double lo, double hi) {
    Eigen::VectorXd u(n);
    for (int i = 0; i < n; ++i) u[i] = uniform(lo, hi);
    return u;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace klacmes

#endif  // KLACMES_RNG_HPP
