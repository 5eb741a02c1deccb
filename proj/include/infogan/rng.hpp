#pragma once

#include <cstdint>
#include <limits>

namespace infogan {

/// PCG32 (XSH-RR output, 64-bit LCG state) with selectable stream.
///
/// Satisfies UniformRandomBitGenerator so it plugs into <random>
/// distributions. Every stochastic component of a run derives its own
/// stream from the single run seed via `Pcg32::stream`.
class Pcg32 {
 public:
  using result_type = std::uint32_t;

  Pcg32() : Pcg32(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL) {}

  Pcg32(std::uint64_t seed, std::uint64_t sequence) { reseed(seed, sequence); }

  void reseed(std::uint64_t seed, std::uint64_t sequence) {
    state_ = 0;
    inc_ = (sequence << 1u) | 1u;
    (*this)();
    state_ += seed;
    (*this)();
  }

  result_type operator()() {
    const std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    const auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  bool operator==(const Pcg32&) const = default;

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 1;
};

// Independent streams derived from one run seed.
enum class Stream : std::uint64_t {
  init = 1,
  data = 2,
  latent = 3,
  eval = 4,
  dataset = 5,
};

inline Pcg32 make_stream(std::uint64_t seed, Stream stream) {
  return Pcg32(seed, static_cast<std::uint64_t>(stream));
}

}  // namespace infogan
