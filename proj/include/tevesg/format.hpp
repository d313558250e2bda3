#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <random>
#include <string>

namespace tevesg {

/// Format a double with 12 significant digits, the precision used for every
/// number the library writes. The representation is locale independent and
/// a negative zero is normalized so equal values print identically.
inline std::string fmt12(double x) {
  if (x == 0.0) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

/// Round a double to 12 significant digits by a round trip through fmt12.
/// Applied to numbers before they enter JSON documents so that serialized
/// output is stable across runs and platforms.
inline double round12(double x) {
  if (!std::isfinite(x)) return x;
  return std::strtod(fmt12(x).c_str(), nullptr);
}

/// Deterministic random source. std::mt19937_64 has a fully specified
/// sequence; the uniform and normal transforms are written out here because
/// the standard library distributions are implementation defined and would
/// break byte-identical output across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform draw on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  /// Uniform draw on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal draw via the Box-Muller transform.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();  // log(0) guard
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Integer draw on [0, n) by rejection-free modulo of a 64-bit word.
  /// Bias is below 2^-50 for the small n used here.
  std::uint64_t index(std::uint64_t n) { return eng_() % n; }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tevesg
