#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace fgan {

// Deterministic random stream. All sampling goes through the raw engine bits
// (no std::*_distribution objects) so that the full state is the engine state
// and a checkpointed stream resumes bit-exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes exactly two draws, caches nothing.
  double normal();

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  int uniform_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi_inclusive - lo) + 1));
  }

  std::string state() const;
  void set_state(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

// splitmix64-style mixing of a master seed and a stream index; used to give
// every sample / trial / layer its own independent stream.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace fgan
