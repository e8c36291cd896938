#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace nir {

// Deterministic RNG wrapper. All draws go through explicit mappings of the
// raw mt19937_64 stream instead of std:: distributions, whose output is
// implementation-defined; this keeps seeded runs reproducible across
// toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is < n / 2^64, negligible for the
  // index ranges used here.
  std::uint64_t uniform_index(std::uint64_t n) { return engine_() % n; }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nir
