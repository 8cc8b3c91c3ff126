// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random streams (Philox4x32-10). A stream is fully determined
// by (master_seed, stream_id); the 128-bit counter carries the stream id in
// its high half and the draw index in its low half, so any draw is
// addressable without sequential generation and distinct streams never share
// counter space.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>

namespace risce {

namespace detail {

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::uint32_t k0, std::uint32_t k1) {
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
        const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
        const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
        k0 += kPhiloxW0;
        k1 += kPhiloxW1;
    }
    return ctr;
}

// splitmix64 finalizer; used to derive child stream ids.
inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9E3779B97F4A7C15ull * (b + 0x632BE59BD9B4E019ull);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

}  // namespace detail

/// One reproducible random stream. Copies restart from the copied position;
/// derive() yields statistically independent child streams.
class RngStream {
  public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
        : seed_(master_seed), stream_(stream_id) {}

    std::uint64_t master_seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_; }

    /// Child stream; deterministic in (this stream id, child_id).
    RngStream derive(std::uint64_t child_id) const {
        return RngStream(seed_, detail::mix64(stream_, child_id));
    }

    std::uint64_t next_u64() {
        if (phase_ == 0) {
            const std::array<std::uint32_t, 4> ctr = {
                static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
            const auto out = detail::philox4x32_10(ctr, static_cast<std::uint32_t>(seed_),
                                                   static_cast<std::uint32_t>(seed_ >> 32));
            pending_ = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
            ++block_;
            phase_ = 1;
            return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
        }
        phase_ = 0;
        return pending_;
    }

    /// Uniform double in (0, 1]; never exactly 0 so it is log-safe.
    double next_unit() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n); n must be >= 1.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Two independent standard normals (Box-Muller).
    std::pair<double, double> next_gaussian_pair() {
        const double u1 = next_unit();
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        return {r * std::cos(a), r * std::sin(a)};
    }

  private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::uint64_t pending_ = 0;
    int phase_ = 0;
};

}  // namespace risce
