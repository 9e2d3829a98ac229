/**
 * @file rng.hpp
 * @brief Counter-based random streams.
 *
 * Every random draw in the library comes from a Philox-4x32-10 generator
 * (Salmon et al., SC'11) whose 64-bit key is derived from a master seed
 * and a path of stream identifiers, e.g. (run, cell, purpose). Streams
 * with different paths are independent, and a stream's output depends
 * only on its key and position, so results do not depend on the order in
 * which runs or cells are evaluated.
 *
 * Distributions use the standard library's implementations, so sequences
 * are reproducible within one build/toolchain, not across implementations.
 */
#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string_view>

namespace relucert {

/// Purpose tags used as the last element of a stream path.
enum class StreamPurpose : std::uint64_t {
  inputs = 1,
  labels = 2,
  weights_w = 3,
  weights_v = 4,
  batches = 5,
  monte_carlo = 6,
  misc = 7,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Philox-4x32 with 10 rounds, exposed as a 64-bit UniformRandomBitGenerator.
class Philox {
 public:
  using result_type = std::uint64_t;

  explicit Philox(std::uint64_t key = 0, std::uint64_t counter = 0) noexcept
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
        counter_(counter) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (pos_ == 2) {
      block_ = generate(counter_++);
      pos_ = 0;
    }
    const std::size_t i = pos_++;
    return (static_cast<std::uint64_t>(block_[2 * i]) << 32) | block_[2 * i + 1];
  }

  [[nodiscard]] std::uint64_t key() const noexcept {
    return (static_cast<std::uint64_t>(key_[1]) << 32) | key_[0];
  }

  /// One Philox block for an explicit counter (useful for testing known-answer vectors).
  [[nodiscard]] std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr) const noexcept {
    return rounds(ctr, key_);
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53U;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57U;
  static constexpr std::uint32_t kW0 = 0x9E3779B9U;
  static constexpr std::uint32_t kW1 = 0xBB67AE85U;

  static std::array<std::uint32_t, 4> rounds(std::array<std::uint32_t, 4> c,
                                             std::array<std::uint32_t, 2> k) noexcept {
    for (int r = 0; r < 10; ++r) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
      c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
      k[0] += kW0;
      k[1] += kW1;
    }
    return c;
  }

  [[nodiscard]] std::array<std::uint32_t, 4> generate(std::uint64_t n) const noexcept {
    return rounds({static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n >> 32), 0U, 0U}, key_);
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t counter_;
  std::array<std::uint32_t, 4> block_{};
  std::size_t pos_ = 2;
};

/// Key for the stream identified by (seed, path...).
inline std::uint64_t stream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632BE59BD9B4E019ULL));
  return h;
}

inline Philox make_stream(std::uint64_t seed, StreamPurpose purpose,
                          std::initializer_list<std::uint64_t> path = {}) noexcept {
  std::uint64_t h = stream_key(seed, path);
  return Philox(splitmix64(h ^ static_cast<std::uint64_t>(purpose)));
}

}  // namespace relucert
