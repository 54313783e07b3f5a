#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

#include "sketchlab/common.hpp"

namespace sketchlab {

// Deterministic, serializable random stream.
//
// The generator is splitmix64: the entire state is one 64-bit counter, which
// makes checkpoint/resume trivial and guarantees identical sequences across
// platforms (no dependence on libstdc++'s distribution implementations).
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Derive an independent stream without advancing this one.  Used to give
  // each concern (shuffling, latent noise, dropout, ...) its own stream so
  // adding draws to one never perturbs another.
  Rng fork(std::string_view label) const {
    uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a over the label bytes
    for (char c : label) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001B3ULL;
    }
    Rng child(state_ ^ h);
    child.next_u64();  // decorrelate from parent's raw counter
    return Rng(child.next_u64());
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  uint64_t uniform_int(uint64_t n) {
    SK_CHECK(n > 0, "uniform_int needs n > 0");
    // Modulo bias is negligible for n << 2^64 (our n are tiny).
    return next_u64() % n;
  }

  // Standard normal via Box-Muller.  Uses two uniforms per draw and discards
  // the second output so the stream position is a pure function of the draw
  // count (no hidden cached value to serialize).
  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    u1 = 1.0 - u1;  // (0, 1]: keeps log() finite
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double gaussian(double mean, double stddev) {
    return mean + stddev * gaussian();
  }

  // Normal draw rejected outside [-2, 2] standard deviations.
  double truncated_gaussian(double mean, double stddev) {
    for (;;) {
      double g = gaussian();
      if (g >= -2.0 && g <= 2.0) return mean + stddev * g;
    }
  }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

// Stable 64-bit hash, used to derive per-sample seeds and to fingerprint
// image payloads for the train/eval disjointness audit.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xCBF29CE484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace sketchlab
