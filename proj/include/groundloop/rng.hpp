#pragma once

// Counter-based random streams (Philox4x32-10, Salmon et al. 2011).
//
// A Stream is a (key, counter) pair: the n-th draw is a pure function of the
// key and n, so draws never depend on thread scheduling. Child streams are
// derived with split(purpose, index), which hashes the parent key together
// with the purpose tag and index into a fresh key.

#include <array>
#include <cstdint>
#include <string_view>

namespace groundloop {

using PhiloxBlock = std::array<std::uint32_t, 4>;

PhiloxBlock philox4x32_10(PhiloxBlock counter, std::array<std::uint32_t, 2> key);

// Purpose tags for stream splitting. Values are part of the reproducibility
// contract; do not renumber.
enum class StreamPurpose : std::uint32_t {
  kScene = 1,
  kQuery = 2,
  kRollout = 3,
  kInit = 4,
  kShuffle = 5,
  kOracle = 6,
  kVerifierPairs = 7,
  kVerifierInit = 8,
  kSample = 9,
  kRound = 10,
  kEpoch = 11,
  kStep = 12,
  kEval = 13,
  kAblation = 14,
};

class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}

  Stream split(StreamPurpose purpose, std::uint64_t index) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform integer in [lo, hi] (inclusive). Requires lo <= hi.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t key() const { return key_; }
  std::uint64_t position() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::uint64_t spare_ = 0;
  bool has_spare_ = false;
};

// FNV-1a 64-bit; used for content digests and to fold strings into seeds.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace groundloop
