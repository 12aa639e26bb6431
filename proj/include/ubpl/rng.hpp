#pragma once

#include <cstdint>
#include <string_view>

namespace ubpl {

// Deterministic PRNG with a fixed algorithm (xoshiro256**), so that runs are
// reproducible bit-for-bit regardless of standard-library internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);
  // Standard normal via Box-Muller (two uniforms per draw, no caching).
  double gaussian();
  bool bernoulli(double p);

 private:
  std::uint64_t s_[4];
};

// Purpose tags for derived random streams. Every consumer of randomness gets
// its own stream keyed by (seed, purpose, epoch, step, sample, view, branch),
// which makes augmentation order-independent and lets independent loss terms
// be added or removed without shifting anyone else's stream.
enum class Streams : std::uint64_t {
  dataset_gen = 1,
  model_init = 2,
  batch_select = 3,
  augment = 4,
  pseudo_view = 5,
  fd_view = 6,
  pse_view = 7,
  noise = 8,
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

std::uint64_t derive_seed(std::uint64_t master, Streams purpose,
                          std::uint64_t a = 0, std::uint64_t b = 0,
                          std::uint64_t c = 0, std::uint64_t d = 0,
                          std::uint64_t e = 0);

inline Rng derive_stream(std::uint64_t master, Streams purpose,
                         std::uint64_t a = 0, std::uint64_t b = 0,
                         std::uint64_t c = 0, std::uint64_t d = 0,
                         std::uint64_t e = 0) {
  return Rng(derive_seed(master, purpose, a, b, c, d, e));
}

}  // namespace ubpl
