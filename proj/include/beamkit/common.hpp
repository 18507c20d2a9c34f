// Shared error types, deterministic RNG, and small numeric helpers.
#ifndef BEAMKIT_COMMON_HPP
#define BEAMKIT_COMMON_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace beamkit {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSoundSpeed = 343.0;  // m/s, dry air at ~20 C

// Error hierarchy. Each contract failure in the library throws one of these;
// callers (CLI, tests) can distinguish categories without string matching.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf reached a computation graph or signal path that must stay finite.
class PoisonedGraph : public NumericalError {
 public:
  explicit PoisonedGraph(const std::string& msg) : NumericalError(msg) {}
};

// Deterministic RNG. mt19937_64 has a fully specified sequence; the
// distributions below are hand-rolled so streams are reproducible across
// standard libraries (std::normal_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return state_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(state_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi_inclusive) {
    // Rejection-free modulo is fine at these range sizes.
    uint64_t span = static_cast<uint64_t>(hi_inclusive - lo) + 1;
    return lo + static_cast<int>(state_() % span);
  }

  // Standard normal via Box-Muller; caches the second deviate.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * kPi * u2;
    cached_ = r * std::sin(th);
    have_cached_ = true;
    return r * std::cos(th);
  }

  cplx normal_cplx() {
    double re = normal();
    double im = normal();
    return {re, im};
  }

 private:
  std::mt19937_64 state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

inline bool is_finite(const cplx& z) {
  return std::isfinite(z.real()) && std::isfinite(z.imag());
}

// Circular difference between two azimuths, result in [0, 180].
inline double circular_diff_deg(double a, double b) {
  double d = std::fmod(std::fabs(a - b), 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

inline double wrap_deg(double a) {
  double d = std::fmod(a, 360.0);
  return d < 0.0 ? d + 360.0 : d;
}

}  // namespace beamkit

#endif  // BEAMKIT_COMMON_HPP
