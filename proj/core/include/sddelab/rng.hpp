#pragma once
#include <array>
#include <cmath>
#include <cstdint>

namespace sddelab {

// Philox 4x32-10 counter RNG. Stateless: every draw is a pure function of
// (key, counter), so any path/step/component can be regenerated in any order
// bit-identically. Standard round constants.
namespace philox {

inline constexpr std::uint32_t kW32A = 0x9E3779B9u;
inline constexpr std::uint32_t kW32B = 0xBB67AE85u;
inline constexpr std::uint32_t kM4x32A = 0xD2511F53u;
inline constexpr std::uint32_t kM4x32B = 0xCD9E8D57u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline std::array<std::uint32_t, 4> block(std::uint64_t key, std::array<std::uint32_t, 4> ctr) {
  std::uint32_t k0 = static_cast<std::uint32_t>(key);
  std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mul_hi_lo(kM4x32A, ctr[0], hi0, lo0);
    mul_hi_lo(kM4x32B, ctr[2], hi1, lo1);
    const std::array<std::uint32_t, 4> next = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    ctr = next;
    k0 += kW32A;
    k1 += kW32B;
  }
  return ctr;
}

}  // namespace philox

// Two unit gaussians from one philox block via Box-Muller. counter layout:
// (path lo, path hi, step, slot). slot distinguishes draws within a step.
inline void gaussian_pair(std::uint64_t key, std::uint64_t path, std::uint32_t step,
                          std::uint32_t slot, double& z0, double& z1) {
  const auto w = philox::block(
      key, {static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32), step, slot});
  constexpr double kInv32 = 1.0 / 4294967296.0;  // 2^-32
  const double u1 = (static_cast<double>(w[0]) + 0.5) * kInv32;
  const double u2 = (static_cast<double>(w[1]) + 0.5) * kInv32;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 6.283185307179586476925286766559 * u2;
  z0 = r * std::cos(a);
  z1 = r * std::sin(a);
}

inline double gaussian(std::uint64_t key, std::uint64_t path, std::uint32_t step,
                       std::uint32_t component) {
  double z0, z1;
  gaussian_pair(key, path, step, component >> 1, z0, z1);
  return (component & 1u) ? z1 : z0;
}

}  // namespace sddelab
