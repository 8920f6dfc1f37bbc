#pragma once

// Counter-based random numbers (Philox4x32-10, Salmon et al., SC'11).
//
// Every draw is a pure function of (key, counter), so a particle's noise at a
// given step does not depend on how the work is scheduled across threads.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <utility>

namespace lmf::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline Counter philox4x32(Counter ctr, Key key) {
  constexpr std::uint32_t kMulA = 0xD2511F53;
  constexpr std::uint32_t kMulB = 0xCD9E8D57;
  constexpr std::uint32_t kWeylA = 0x9E3779B9;
  constexpr std::uint32_t kWeylB = 0xBB67AE85;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    key[0] += kWeylA;
    key[1] += kWeylB;
  }
  return ctr;
}

/// Maps 64 random bits to a double in the open interval (0, 1).
inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32 | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Purpose tags kept in the last counter word so that streams used for
/// different things never overlap.
enum class Tag : std::uint32_t {
  kInitial = 1,
  kNoise = 2,
  kBridge = 3,
  kEndpoint = 4,
  kSubsample = 5,
  kTest = 6,
};

/// A keyed stream: the key holds (seed, replica), the counter holds
/// (stream id, index, tag).
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint32_t replica, std::uint64_t stream_id)
      : key_{static_cast<std::uint32_t>(seed ^ (seed >> 32)), replica},
        seed_hi_(static_cast<std::uint32_t>(seed >> 32)),
        id_lo_(static_cast<std::uint32_t>(stream_id)),
        id_hi_(static_cast<std::uint32_t>(stream_id >> 32)) {}

  /// Two independent uniforms in (0, 1) for (index, tag).
  std::pair<double, double> uniforms(std::uint64_t index, Tag tag) const {
    const auto r = raw(index, tag);
    return {to_open_unit(r[0], r[1]), to_open_unit(r[2], r[3])};
  }

  /// Two independent standard normals for (index, tag), via Box-Muller.
  std::pair<double, double> normals(std::uint64_t index, Tag tag) const {
    const auto [u1, u2] = uniforms(index, tag);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  double normal(std::uint64_t index, Tag tag) const { return normals(index, tag).first; }
  double uniform(std::uint64_t index, Tag tag) const { return uniforms(index, tag).first; }

 private:
  Counter raw(std::uint64_t index, Tag tag) const {
    const std::uint32_t tag_word = static_cast<std::uint32_t>(tag) << 24 ^ seed_hi_ ^
                                   static_cast<std::uint32_t>(index >> 32);
    return philox4x32({id_lo_, id_hi_, static_cast<std::uint32_t>(index), tag_word}, key_);
  }

  Key key_;
  std::uint32_t seed_hi_;
  std::uint32_t id_lo_;
  std::uint32_t id_hi_;
};

/// Stream id of lattice site i on a 1-d torus of side n, determined by the
/// reduced fraction i/n. Sites at the same physical position share noise
/// across lattice sizes, which turns N-comparisons into common-random-number
/// comparisons.
inline std::uint64_t position_stream_id(std::uint64_t i, std::uint64_t n) {
  const std::uint64_t g = std::gcd(i % n, n);
  return ((n / g) << 32) | ((i % n) / g);
}

/// Stream id of site (i1, i2) on a 2-d torus of side n.
inline std::uint64_t position_stream_id(std::uint64_t i1, std::uint64_t i2, std::uint64_t n) {
  const std::uint64_t g = std::gcd(std::gcd(i1 % n, i2 % n), n);
  const std::uint64_t q = n / g;
  return (q << 40) ^ (((i1 % n) / g) << 20) ^ ((i2 % n) / g) ^ (std::uint64_t{1} << 63);
}

}  // namespace lmf::rng
