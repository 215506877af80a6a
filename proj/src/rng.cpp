#include "groundloop/rng.hpp"

#include "groundloop/error.hpp"

namespace groundloop {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline std::array<std::uint32_t, 2> split_key(std::uint64_t k) {
  return {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

}  // namespace

PhiloxBlock philox4x32_10(PhiloxBlock ctr, std::array<std::uint32_t, 2> key) {
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

Stream Stream::split(StreamPurpose purpose, std::uint64_t index) const {
  // Counter words 2..3 carry the purpose tag with the high bit set, which
  // keeps derivation blocks disjoint from the draw blocks of any stream.
  const PhiloxBlock ctr = {static_cast<std::uint32_t>(index),
                           static_cast<std::uint32_t>(index >> 32),
                           static_cast<std::uint32_t>(purpose),
                           0x80000000u};
  const PhiloxBlock out = philox4x32_10(ctr, split_key(key_));
  return Stream((static_cast<std::uint64_t>(out[1]) << 32) | out[0]);
}

std::uint64_t Stream::next_u64() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const PhiloxBlock ctr = {static_cast<std::uint32_t>(counter_),
                           static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u};
  ++counter_;
  const PhiloxBlock out = philox4x32_10(ctr, split_key(key_));
  spare_ = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
  has_spare_ = true;
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

double Stream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::int64_t Stream::uniform_int(std::int64_t lo, std::int64_t hi) {
  require(lo <= hi, "uniform_int: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(next_u64());
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % span);
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return lo + static_cast<std::int64_t>(v % span);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace groundloop
