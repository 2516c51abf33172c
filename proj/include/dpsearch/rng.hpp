#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>

namespace dps {

// Deterministic splittable RNG. Substreams are derived by label so that
// concurrent consumers (population members, MC trials, column pairs) draw
// from statistically independent sequences regardless of scheduling order.
// The uniform sequence is a pure function of (seed, stream_id) and uses only
// 64-bit integer arithmetic, so it is identical across runs and platforms.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id),
        state_(mix64(mix64(seed + 0x9E3779B97F4A7C15ull) ^ stream_id)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix64(state_);
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe as a log() argument.
  double next_double_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("next_below: n must be positive");
    std::uint64_t threshold = (0 - n) % n;  // rejection bound for unbiasedness
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Child stream keyed by up to three integers. Cheap enough for per-example
  // or per-trial derivation in hot loops.
  RngStream child(std::uint64_t a, std::uint64_t b = 0,
                  std::uint64_t c = 0) const {
    std::uint64_t id = stream_id_;
    id = mix64(id ^ mix64(a + 0x8000000000000001ull));
    id = mix64(id ^ mix64(b + 0x0000000100000000ull));
    id = mix64(id ^ mix64(c + 0x0000000000010001ull));
    return RngStream(seed_, id);
  }

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t state_;
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001B3ull;
  }
  return h;
}

inline RngStream derive_stream(std::uint64_t master_seed,
                               std::string_view label) {
  return RngStream(master_seed, fnv1a64(label));
}

// N(mu, sigma^2) via Box-Muller. sigma == 0 returns mu without consuming
// entropy, which keeps zero-noise runs stream-compatible with noiseless ones.
inline double sample_gaussian(RngStream& rng, double mu, double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("sample_gaussian: sigma < 0");
  if (sigma == 0.0) return mu;
  double u1 = rng.next_double_open();
  double u2 = rng.next_double();
  double r = std::sqrt(-2.0 * std::log(u1));
  return mu + sigma * r * std::cos(6.283185307179586476925286766559 * u2);
}

// Lap(0, scale) by inverse CDF.
inline double sample_laplace(RngStream& rng, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("sample_laplace: scale <= 0");
  double u = rng.next_double() - 0.5;
  double s = u < 0.0 ? -1.0 : 1.0;
  return -scale * s * std::log1p(-2.0 * std::fabs(u));
}

}  // namespace dps
