#pragma once

#include <cstdint>

namespace mfdr {

// Counter-based random stream. The value produced for a given
// (seed, stream, counter) triple is a pure function of the triple, so
// populations can be stepped by any number of workers in any order and
// still produce identical draws. Mixing is the SplitMix64 finalizer
// applied in three chained rounds.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0,
                     std::uint64_t counter = 0)
      : seed_(seed), stream_(stream), counter_(counter) {}

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static std::uint64_t at(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t counter) {
    return mix(mix(mix(seed) + 0x9e3779b97f4a7c15ULL * (stream + 1)) +
               0xd1b54a32d192ed03ULL * (counter + 1));
  }

  static double to_unit(std::uint64_t v) {
    return static_cast<double>(v >> 11) * 0x1.0p-53;
  }

  // Uniform draw in [0,1) at an explicit counter, without touching the
  // stream position.
  static double uniform_at(std::uint64_t seed, std::uint64_t stream,
                           std::uint64_t counter) {
    return to_unit(at(seed, stream, counter));
  }

  std::uint64_t next_u64() { return at(seed_, stream_, counter_++); }

  double next_double() { return to_unit(next_u64()); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_;
};

}  // namespace mfdr
