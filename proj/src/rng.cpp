#include "spdefem/rng.hpp"

#include <cmath>
#include <numbers>

namespace spdefem {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

// Counter layout: word0/word1 hold the low 32 bits of sample and step, word2
// packs the purpose tag with the next 12 bits of each, word3 enumerates
// output blocks. Sample and step indices are therefore unique below 2^44.
std::array<std::uint32_t, 4> base_counter(const StreamKey& key) {
  const auto hi12 = [](std::uint64_t v) { return static_cast<std::uint32_t>((v >> 32) & 0xFFFu); };
  return {static_cast<std::uint32_t>(key.sample), static_cast<std::uint32_t>(key.step),
          (static_cast<std::uint32_t>(key.purpose) & 0xFFu) << 24 | hi12(key.sample) << 12 |
              hi12(key.step),
          0u};
}

std::array<std::uint32_t, 2> philox_key(const StreamKey& key) {
  return {static_cast<std::uint32_t>(key.seed), static_cast<std::uint32_t>(key.seed >> 32)};
}

// 53-bit uniform strictly inside (0, 1).
inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32 | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

void fill_uniform(const StreamKey& key, std::span<double> out) {
  auto ctr = base_counter(key);
  const auto k = philox_key(key);
  std::size_t i = 0;
  for (std::uint32_t block = 0; i < out.size(); ++block) {
    ctr[3] = block;
    const auto r = philox4x32(ctr, k);
    out[i++] = to_unit(r[0], r[1]);
    if (i < out.size()) out[i++] = to_unit(r[2], r[3]);
  }
}

void fill_normal(const StreamKey& key, std::span<double> out) {
  auto ctr = base_counter(key);
  const auto k = philox_key(key);
  std::size_t i = 0;
  for (std::uint32_t block = 0; i < out.size(); ++block) {
    ctr[3] = block;
    const auto r = philox4x32(ctr, k);
    const double u1 = to_unit(r[0], r[1]);
    const double u2 = to_unit(r[2], r[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    out[i++] = radius * std::cos(angle);
    if (i < out.size()) out[i++] = radius * std::sin(angle);
  }
}

}  // namespace spdefem
