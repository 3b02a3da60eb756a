#include "ccsn/rng.hpp"

#include <cmath>

namespace ccsn {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t &hi, std::uint32_t &lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline double to_unit(std::uint32_t a, std::uint32_t b) {
  return ((a >> 5) * 67108864.0 + (b >> 6)) * (1.0 / 9007199254740992.0);
}

} // namespace

PhiloxBlock philox4x32(PhiloxBlock c, std::uint64_t key) {
  std::uint32_t k0 = static_cast<std::uint32_t>(key);
  std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return c;
}

NormalStream::NormalStream(std::uint64_t seed, std::uint64_t stream, StreamTag tag)
    : seed_(seed), stream_lo_(static_cast<std::uint32_t>(stream)),
      stream_hi_tag_(static_cast<std::uint32_t>(stream >> 32) * 16u +
                     static_cast<std::uint32_t>(tag)) {}

PhiloxBlock NormalStream::next_block() {
  const PhiloxBlock ctr = {static_cast<std::uint32_t>(block_),
                           static_cast<std::uint32_t>(block_ >> 32), stream_lo_, stream_hi_tag_};
  ++block_;
  return philox4x32(ctr, seed_);
}

double NormalStream::uniform() {
  const PhiloxBlock b = next_block();
  return to_unit(b[0], b[1]);
}

double NormalStream::operator()() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  const PhiloxBlock b = next_block();
  const double u1 = 1.0 - to_unit(b[0], b[1]); // (0, 1]
  const double u2 = to_unit(b[2], b[3]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 6.283185307179586476925286766559 * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

void NormalStream::fill(std::span<double> out) {
  for (double &x : out) x = (*this)();
}

} // namespace ccsn
