// Counter-based random numbers (Philox4x32-10) with independent streams.
//
// A draw is a pure function of (seed, stream, tag, index), so stream i of an
// ensemble can be regenerated without touching streams 0..i-1 and results do
// not depend on thread scheduling.
#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace ccsn {

using PhiloxBlock = std::array<std::uint32_t, 4>;

/// Ten-round Philox4x32 bijection of `counter` under the 64-bit `key`.
PhiloxBlock philox4x32(PhiloxBlock counter, std::uint64_t key);

/// Substream tags; increments of different physical origin never share
/// counters.
enum class StreamTag : std::uint32_t {
  measurement = 1,
  thermal = 2,
  gaussian = 3,
  generic = 4,
  bridge = 5, // sub-interval refinement of measurement increments
};

/// Sequential standard-normal draws (Box-Muller on 53-bit uniforms).
class NormalStream {
public:
  NormalStream(std::uint64_t seed, std::uint64_t stream, StreamTag tag = StreamTag::generic);

  double operator()();
  void fill(std::span<double> out);

  /// Uniform in [0, 1).
  double uniform();

private:
  PhiloxBlock next_block();

  std::uint64_t seed_;
  std::uint32_t stream_lo_;
  std::uint32_t stream_hi_tag_;
  std::uint64_t block_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

} // namespace ccsn
