#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace striprw {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Keys for independent families of streams derived from one master seed.
enum class StreamDomain : std::uint64_t {
  kLayer = 1,
  kReplica = 2,
  kEnvironment = 3,
  kBatch = 4,
  kAuxiliary = 5,
};

inline constexpr std::uint64_t derive_key(std::uint64_t seed,
                                          StreamDomain domain,
                                          std::uint64_t salt = 0) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(domain) +
                                      0x632BE59BD9B4E019ull * salt));
}

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). The 128-bit
// counter is split into a 64-bit block index and a 64-bit stream id, so every
// (key, stream) pair names an independent, reproducible sequence.
class Philox {
 public:
  using result_type = std::uint64_t;

  Philox(std::uint64_t key, std::uint64_t stream) {
    key_ = {static_cast<std::uint32_t>(key),
            static_cast<std::uint32_t>(key >> 32)};
    ctr_ = {0, 0, static_cast<std::uint32_t>(stream),
            static_cast<std::uint32_t>(stream >> 32)};
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    if (have_ == 0) {
      out_ = block(ctr_, key_);
      increment();
      have_ = 2;
    }
    const int i = 2 - have_--;
    return (static_cast<std::uint64_t>(out_[2 * i + 1]) << 32) | out_[2 * i];
  }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Raw block function, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  void increment() {
    if (++ctr_[0] == 0) ++ctr_[1];
  }

  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> ctr_{};
  std::array<std::uint32_t, 4> out_{};
  int have_ = 0;
};

using Rng = Philox;

inline Rng replica_rng(std::uint64_t seed, std::uint64_t replica,
                       std::uint64_t salt = 0) {
  return Rng(derive_key(seed, StreamDomain::kReplica, salt), replica);
}

}  // namespace striprw
