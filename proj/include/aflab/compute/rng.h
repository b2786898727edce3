#pragma once

#include <cstdint>
#include <random>

namespace aflab {

// Seeded generator with portable uniform/normal draws (the standard
// distributions are implementation-defined, which would break cross-platform
// reproducibility of generated data).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }
  // Uniform in [0, 1).
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform integer in [lo, hi].
  int UniformInt(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(engine_() % span);
  }
  double Normal();
  bool Bernoulli(double p) { return Uniform() < p; }
  // Derives an independent stream for a sub-task.
  Rng Fork(std::uint64_t salt) { return Rng(Mix(engine_() ^ Mix(salt))); }

  static std::uint64_t Mix(std::uint64_t x);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace aflab
