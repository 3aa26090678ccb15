#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace blade {

// SplitMix64 finalizer; used to derive independent child seeds from a run seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// FNV-1a; stable across platforms, used to key per-item seeds by string id.
std::uint64_t stable_hash(std::string_view text);

// Seeded generator. uniform01() maps the top 53 bits of mt19937_64 output
// directly, so uniform draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double low, double high) { return low + (high - low) * uniform01(); }
  double normal() { return normal_(engine_); }
  std::uint64_t next_u64() { return engine_(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace blade
