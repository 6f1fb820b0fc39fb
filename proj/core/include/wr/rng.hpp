#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace wr {

// Deterministic random helpers. std::mt19937_64 is bit-exact by the standard,
// but the standard distributions are implementation-defined, so the sampling
// code lives here and output files stay reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0. Rejection-free modulo is fine
  // here: n is tiny compared to 2^64 and bias is far below reproducibility
  // concerns only when it is deterministic, which modulo is.
  std::uint64_t uniform_index(std::uint64_t n) { return engine_() % n; }

  // Marsaglia polar method; deterministic given the engine state.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stable 64-bit FNV-1a, used for substream seeds and config hashes.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

// Derive an independent substream seed from a parent seed and a label.
inline std::uint64_t derive_seed(std::uint64_t seed, const std::string& label) {
  std::uint64_t h = fnv1a64(&seed, sizeof(seed));
  return fnv1a64(label.data(), label.size(), h);
}

}  // namespace wr
