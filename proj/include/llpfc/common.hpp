#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace llpfc {

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps these onto process exit codes.
// ---------------------------------------------------------------------------

/// Bad parameters or malformed configuration (exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unusable input data: parse failures, exhausted pools, bookkeeping
/// mismatches (exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix inversion rejected: exactly singular or condition estimate above
/// the screening threshold.
class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative solver hit its iteration cap. Carries the best iterate found.
class ConvergenceFailure : public std::runtime_error {
 public:
  ConvergenceFailure(const std::string& what, std::vector<double> best)
      : std::runtime_error(what), best_iterate(std::move(best)) {}
  std::vector<double> best_iterate;
};

/// A group failed the hull condition required by the ideal reduction:
/// either the proportion matrix is singular or the implied noisy prior
/// falls outside the open simplex (exit code 4).
class AssumptionViolation : public std::runtime_error {
 public:
  enum class Kind { Singular, PriorOutsideHull };

  AssumptionViolation(Kind k, const std::string& what, int group_index = -1)
      : std::runtime_error(what), kind(k), group(group_index) {}

  Kind kind;
  int group;  // -1 when not attributable to a specific group
};

// ---------------------------------------------------------------------------
// Saturation bookkeeping. Loss evaluations that hit the finite cap are
// counted here instead of silently returning +inf.
// ---------------------------------------------------------------------------

struct SaturationCounter {
  long long count = 0;
};

inline void note_saturation(SaturationCounter* c) {
  if (c != nullptr) ++c->count;
}

// ---------------------------------------------------------------------------
// Deterministic random numbers. std::mt19937_64 has a fully specified
// sequence; all mappings from raw bits to distributions are done here so
// outputs are reproducible bit-for-bit across platforms and runs.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from (seed, tag, index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag,
                              std::uint64_t index = 0) {
  std::uint64_t s = seed;
  std::uint64_t out = splitmix64(s);
  s ^= tag;
  out ^= splitmix64(s);
  s ^= index;
  out ^= splitmix64(s);
  return out;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  int uniform_int(int n) {
    if (n <= 0) throw ConfigError("uniform_int: n must be positive");
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return static_cast<int>(x % un);
  }

  /// Standard normal via Box-Muller; the pair's second value is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  /// Unit-rate exponential.
  double exponential() { return -std::log(1.0 - uniform01()); }

  /// Index draw proportional to the (nonnegative) weights. Total mass need
  /// not be 1; a zero-mass input is rejected.
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw ConfigError("categorical: zero total mass");
    double u = uniform01() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;  // rounding spill
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<std::size_t>(i)],
                v[static_cast<std::size_t>(uniform_int(i + 1))]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

// ---------------------------------------------------------------------------
// FNV-1a content hash, used to fingerprint effective configurations.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string fnv1a64_hex(std::string_view text) {
  static const char* digits = "0123456789abcdef";
  std::uint64_t h = fnv1a64(text);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace llpfc
