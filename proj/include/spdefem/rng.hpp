#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace spdefem {

/// Purpose tags keep substreams used for different roles disjoint.
enum class StreamPurpose : std::uint32_t {
  kConvolution = 1,
  kIncrements = 2,
  kInitialData = 3,
  kTest = 99,
};

/// Identifies one counter-based substream. Two keys that compare equal
/// always produce the same numbers, independently of thread schedule.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t sample = 0;
  std::uint64_t step = 0;
  StreamPurpose purpose = StreamPurpose::kConvolution;

  StreamKey with_step(std::uint64_t s) const {
    StreamKey k = *this;
    k.step = s;
    return k;
  }
  StreamKey with_sample(std::uint64_t s) const {
    StreamKey k = *this;
    k.sample = s;
    return k;
  }
  StreamKey with_purpose(StreamPurpose p) const {
    StreamKey k = *this;
    k.purpose = p;
    return k;
  }
};

/// Philox4x32-10 block function (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Fills `out` with uniforms in (0, 1) drawn from the substream `key`.
void fill_uniform(const StreamKey& key, std::span<double> out);

/// Fills `out` with standard normals (Box-Muller) drawn from `key`.
void fill_normal(const StreamKey& key, std::span<double> out);

}  // namespace spdefem
