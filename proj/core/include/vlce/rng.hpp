#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vlce {

// mt19937_64 has a standardized output sequence, but the std distributions do
// not. Everything that must be reproducible across toolchains draws through
// these helpers instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n); rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

// Per-module seed derived from the global one, e.g. derive_seed(7, "models").
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view module);

}  // namespace vlce
