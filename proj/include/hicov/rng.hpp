#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace hicov {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Keyed sub-stream identifier. A stream is fully determined by its root
/// seed and the sequence of counters folded into it, so work items can be
/// scheduled in any order without changing the numbers they see.
class StreamKey {
 public:
  constexpr explicit StreamKey(std::uint64_t seed) : state_(mix64(seed)) {}

  [[nodiscard]] constexpr StreamKey child(std::uint64_t counter) const {
    StreamKey k(*this);
    k.state_ = mix64(state_ ^ mix64(counter + 0x632be59bd9b4e019ULL));
    return k;
  }

  [[nodiscard]] constexpr StreamKey child(std::initializer_list<std::uint64_t> path) const {
    StreamKey k(*this);
    for (auto c : path) k = k.child(c);
    return k;
  }

  [[nodiscard]] constexpr std::uint64_t value() const { return state_; }

  [[nodiscard]] Rng engine() const { return Rng(state_); }

 private:
  std::uint64_t state_;
};

// Stream tags used to separate independent uses of one root seed.
namespace stream_tag {
inline constexpr std::uint64_t kStructure = 1;
inline constexpr std::uint64_t kPaths = 2;
inline constexpr std::uint64_t kBootstrap = 3;
inline constexpr std::uint64_t kReplication = 4;
}  // namespace stream_tag

}  // namespace hicov
